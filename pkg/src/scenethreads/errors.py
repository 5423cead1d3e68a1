"""Exception hierarchy.

Every error raised on bad *data* derives from :class:`DataError`, which the
CLI maps to exit code 1.
"""


class DataError(Exception):
    """Input data violates a documented contract."""


# screenplay
class UnparsableDocument(DataError):
    pass


class MalformedCue(DataError, UserWarning):
    """A cue line with no dialogue after it.

    Raised as a warning, not an exception: the cue is demoted to an action line.
    """


# annotation
class AnnotationError(DataError):
    pass


class UnknownTag(AnnotationError):
    pass


class ColumnMissing(AnnotationError):
    pass


class DanglingReply(AnnotationError):
    pass


class ForwardReply(AnnotationError):
    pass


class NotAForest(AnnotationError):
    pass


# linkmodel
class ScenesMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class NoPositives(DataError):
    pass


# metrics
class UtteranceSetMismatch(DataError):
    pass


class TooFewUnits(DataError):
    pass


# analytics
class MetadataError(DataError):
    pass


class EmptyYear(MetadataError, UserWarning):
    """No threads or lines by characters of known gender in a year; issued as a warning."""


class DuplicateCharacter(MetadataError):
    pass


class BadGenderCode(MetadataError):
    pass


class MissingYear(MetadataError):
    pass
