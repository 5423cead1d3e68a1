"""Standard-format screenplay parsing.

Scene headers start with INT./EXT. (or are flush-left all-caps lines), cue
lines are indented and upper case, dialogue is indented under its cue and
action paragraphs sit flush left. Parsing yields scenes of action lines and
dialogue turns, and every dialogue line is split into sentence-level
utterances that carry the speaker, turn and scene they belong to.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

from .errors import MalformedCue, UnparsableDocument

__all__ = [
    "RawDocument",
    "Scene",
    "DialogueTurn",
    "DialogueLine",
    "Utterance",
    "ActionLine",
    "LineKind",
    "classify_lines",
    "parse_screenplay",
    "segment_sentences",
    "normalize_text",
    "normalize_speaker",
    "emit_canonical",
    "read_canonical",
    "DEFAULT_ABBREVIATIONS",
]

DEFAULT_ABBREVIATIONS = ("Mr.", "Mrs.", "Dr.", "Ms.", "St.", "vs.")

_SLUG_RE = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")
_HEADER_RE = re.compile(r"^(?:\d+[A-Z]?\.?\s+)?(?:INT\.?/EXT|EXT\.?/INT|I/E|INT|EXT)[.\s]")
_TRAILING_PAREN_RE = re.compile(r"\s*\(([^()]*)\)\s*$")
_OFFSCREEN = {"V.O.", "VO", "V.O", "O.S.", "OS", "O.S", "O.C.", "OC", "O.C", "OFF", "OFF SCREEN", "OFF-SCREEN"}
_CONTINUED = {"CONT'D", "CONT’D", "CONTD", "CONT.", "CONT", "CONTINUED", "CONTINUING", "MORE"}


@dataclass(frozen=True)
class RawDocument:
    title_slug: str
    text: str
    source_kind: str = "movie"

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("document text is empty")
        if not _SLUG_RE.match(self.title_slug):
            raise ValueError(f"title slug {self.title_slug!r} is not lowercase alphanumerics and hyphens")
        if self.source_kind not in ("movie", "tv_pilot"):
            raise ValueError(f"unknown source kind {self.source_kind!r}")


@dataclass(frozen=True)
class Utterance:
    """One sentence of a dialogue line."""

    utt_id: str
    speaker: str
    turn_id: str
    scene_id: str
    text: str
    position: int
    line_id: str


@dataclass
class DialogueLine:
    line_id: str
    sentences: list[Utterance] = field(default_factory=list)

    @property
    def text(self) -> str:
        return " ".join(u.text for u in self.sentences)


@dataclass
class DialogueTurn:
    """A run of dialogue lines under one cue.

    A cue marked (CONT'D) for the speaker of the scene's previous turn adds a
    new segment with ``continued=True`` that shares the earlier ``turn_id``.
    """

    turn_id: str
    speaker: str
    lines: list[DialogueLine] = field(default_factory=list)
    off_screen: bool = False
    continued: bool = False
    directions: list[str] = field(default_factory=list)


@dataclass
class ActionLine:
    action_id: str
    text: str


@dataclass
class Scene:
    scene_id: str
    header: str
    elements: list = field(default_factory=list)

    def utterances(self) -> list[Utterance]:
        return [u for el in self.elements if isinstance(el, DialogueTurn) for ln in el.lines for u in ln.sentences]

    def dialogue_lines(self) -> list[DialogueLine]:
        return [ln for el in self.elements if isinstance(el, DialogueTurn) for ln in el.lines]

    def actions(self) -> list[ActionLine]:
        return [el for el in self.elements if isinstance(el, ActionLine)]

    def turn_ids(self) -> list[str]:
        seen = dict.fromkeys(el.turn_id for el in self.elements if isinstance(el, DialogueTurn))
        return list(seen)


# --------------------------------------------------------------------------
# text normalization and sentence segmentation


def normalize_text(text: str) -> str:
    text = re.sub(r"\.(?:\s*\.){2,}", "…", text)
    text = re.sub(r"-{2,}", "—", text)
    text = re.sub(r"(?<=\s)-(?=\s)", "—", text)
    return " ".join(text.split())


_SPLIT_RE = re.compile(r"([.!?]+)([\"'”’)\]]*)(\s+)(?=[A-Z\"'“‘])")


def _ends_with_abbreviation(prefix: str, abbreviations: Sequence[str]) -> bool:
    last = prefix.split()[-1] if prefix.split() else ""
    return any(last == abbr or last.lower() == abbr.lower() for abbr in abbreviations)


def segment_sentences(line_text: str, abbreviations: Sequence[str] = DEFAULT_ABBREVIATIONS) -> list[str]:
    """Split a dialogue line into sentences at terminal punctuation.

    A split needs ``.``, ``!`` or ``?`` followed by whitespace and then an
    upper-case letter or a quote. Ellipses (``...``, ``. . .``, ``…``) and
    listed abbreviations never end a sentence.
    """
    sentences = []
    start = 0
    for m in _SPLIT_RE.finditer(line_text):
        punct = m.group(1)
        end = m.end(2)
        if punct.startswith(".") and len(punct) > 1 and set(punct) == {"."}:
            continue
        before = line_text[start : m.start(1)]
        if punct == "." and re.search(r"\.\s\.?\s?$", before):
            continue
        if punct == "." and _ends_with_abbreviation(line_text[start : m.start(1) + 1], abbreviations):
            continue
        piece = line_text[start:end].strip()
        if piece:
            sentences.append(piece)
        start = m.end(3)
    tail = line_text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# --------------------------------------------------------------------------
# line classification


class LineKind(str, Enum):
    BLANK = "blank"
    HEADER = "header"
    CUE = "cue"
    PARENTHETICAL = "parenthetical"
    DIALOGUE = "dialogue"
    ACTION = "action"


def _indent(line: str) -> int:
    expanded = line.expandtabs(8)
    return len(expanded) - len(expanded.lstrip(" "))


def _is_indented(line: str) -> bool:
    return line.startswith("\t") or line.startswith("    ")


def _upper_ratio(text: str) -> float:
    letters = [c for c in text if c.isalpha()]
    if not letters:
        return 0.0
    return sum(c.isupper() for c in letters) / len(letters)


def _is_slugline(stripped: str) -> bool:
    return bool(_HEADER_RE.match(stripped)) and stripped.upper() == stripped


def _is_header(stripped: str, indented: bool, sluglines_only: bool) -> bool:
    if _is_slugline(stripped):
        return True
    if indented or sluglines_only:
        return False
    letters = [c for c in stripped if c.isalpha()]
    return bool(letters) and stripped.upper() == stripped and not stripped.endswith(":")


def _looks_like_cue(stripped: str) -> bool:
    name = _TRAILING_PAREN_RE.sub("", stripped)
    while _TRAILING_PAREN_RE.search(name):
        name = _TRAILING_PAREN_RE.sub("", name)
    if not name or stripped.endswith(":") or stripped.startswith("("):
        return False
    if len(name.split()) > 6 or name[-1] in "!?,;":
        return False
    return _upper_ratio(name) >= 0.7


def classify_lines(text: str) -> list[tuple[str, LineKind]]:
    """Classify every source line; blank lines get ``LineKind.BLANK``.

    Flush-left all-caps lines are headers only when the document has no
    INT./EXT. sluglines at all.
    """
    lines = text.splitlines()
    # all-caps flush-left headers only count in documents without INT./EXT. sluglines
    sluglines_only = any(_is_slugline(raw.strip()) for raw in lines)
    kinds: list[LineKind] = []
    in_block = False
    in_paren = False
    dialogue_indent = None
    for idx, raw in enumerate(lines):
        stripped = raw.strip()
        if not stripped:
            kinds.append(LineKind.BLANK)
            in_block = in_paren = False
            continue
        indented = _is_indented(raw)
        nxt = lines[idx + 1] if idx + 1 < len(lines) else ""
        followed_by_dialogue = bool(nxt.strip()) and _is_indented(nxt)

        if in_block and indented:
            if in_paren or stripped.startswith("("):
                kinds.append(LineKind.PARENTHETICAL)
                in_paren = not stripped.endswith(")")
                continue
            deeper = dialogue_indent is not None and _indent(raw) > dialogue_indent + 4
            if deeper and _looks_like_cue(stripped) and followed_by_dialogue:
                kinds.append(LineKind.CUE)
                dialogue_indent = None
                continue
            kinds.append(LineKind.DIALOGUE)
            if dialogue_indent is None:
                dialogue_indent = _indent(raw)
            continue

        in_block = in_paren = False
        if _is_header(stripped, indented, sluglines_only):
            kinds.append(LineKind.HEADER)
        elif indented and _looks_like_cue(stripped):
            if followed_by_dialogue:
                kinds.append(LineKind.CUE)
                in_block = True
                dialogue_indent = None
            else:
                warnings.warn(MalformedCue(f"line {idx + 1}: cue {stripped!r} has no dialogue; treated as action"))
                kinds.append(LineKind.ACTION)
        else:
            kinds.append(LineKind.ACTION)
    return list(zip(lines, kinds))


def normalize_speaker(cue: str) -> tuple[str, bool, bool]:
    """Return ``(speaker, off_screen, continued)`` for a cue line."""
    name = cue.strip()
    off_screen = continued = False
    while True:
        m = _TRAILING_PAREN_RE.search(name)
        if not m:
            break
        marker = " ".join(m.group(1).upper().split())
        if marker in _OFFSCREEN:
            off_screen = True
        elif marker in _CONTINUED:
            continued = True
        name = name[: m.start()]
    if re.search(r"\bCONT['’]?D\s*$", name.upper()):
        continued = True
        name = re.sub(r"\s*\bCONT['’]?D\s*$", "", name, flags=re.I)
    return " ".join(name.upper().split()), off_screen, continued


# --------------------------------------------------------------------------
# structure building


class _Builder:
    def __init__(self, abbreviations):
        self.abbreviations = abbreviations
        self.scenes: list[Scene] = []
        self.counts = {"S": 0, "L": 0, "D": 0, "A": 0}
        self.scene: Scene | None = None
        self.turn: DialogueTurn | None = None
        self.line_buf: list[str] = []
        self.action_buf: list[str] = []
        self.paren_buf: list[str] = []
        self.position = 0

    def _next(self, prefix):
        self.counts[prefix] += 1
        return f"{prefix}{self.counts[prefix]}"

    def open_scene(self, header):
        self.close_all()
        self.scene = Scene(self._next("S"), header)
        self.scenes.append(self.scene)
        self.position = 0

    def add_action(self, text):
        self.close_turn()
        self.action_buf.append(text)

    def close_action(self):
        if self.action_buf and self.scene is not None:
            self.scene.elements.append(ActionLine(self._next("A"), " ".join(self.action_buf)))
        self.action_buf = []

    def open_turn(self, cue):
        self.close_all()
        speaker, off_screen, continued = normalize_speaker(cue)
        prev = next((el for el in reversed(self.scene.elements) if isinstance(el, DialogueTurn)), None)
        if continued and prev is not None and prev.speaker == speaker:
            turn_id = prev.turn_id
        else:
            turn_id, continued = self._next("L"), False
        self.turn = DialogueTurn(turn_id, speaker, off_screen=off_screen, continued=continued)
        self.cue_text = cue

    def add_dialogue(self, text):
        if self.paren_buf:
            self.turn.directions.append(" ".join(self.paren_buf))
            self.paren_buf = []
        self.line_buf.append(text)

    def add_parenthetical(self, text):
        self.close_line()
        self.paren_buf.append(text)

    def close_line(self):
        if not self.line_buf or self.turn is None:
            self.line_buf = []
            return
        text = normalize_text(" ".join(self.line_buf))
        self.line_buf = []
        sentences = segment_sentences(text, self.abbreviations)
        if not sentences:
            return
        line = DialogueLine(self._next("D"))
        for k, sentence in enumerate(sentences, 1):
            line.sentences.append(
                Utterance(
                    utt_id=f"{line.line_id}.{k}",
                    speaker=self.turn.speaker,
                    turn_id=self.turn.turn_id,
                    scene_id=self.scene.scene_id,
                    text=sentence,
                    position=self.position,
                    line_id=line.line_id,
                )
            )
            self.position += 1
        self.turn.lines.append(line)

    def close_turn(self):
        if self.turn is None:
            return
        self.close_line()
        if self.paren_buf:
            self.turn.directions.append(" ".join(self.paren_buf))
            self.paren_buf = []
        if self.turn.lines:
            self.scene.elements.append(self.turn)
        else:
            warnings.warn(MalformedCue(f"cue {self.cue_text!r} has no dialogue; treated as action"))
            if not self.turn.continued and self.turn.turn_id == f"L{self.counts['L']}":
                self.counts["L"] -= 1
            self.scene.elements.append(ActionLine(self._next("A"), self.cue_text))
        self.turn = None

    def close_all(self):
        self.close_turn()
        self.close_action()


def parse_screenplay(doc: RawDocument, abbreviations: Sequence[str] = DEFAULT_ABBREVIATIONS) -> list[Scene]:
    classified = classify_lines(doc.text)
    if not any(kind is LineKind.HEADER for _, kind in classified):
        raise UnparsableDocument(f"{doc.title_slug}: no scene header found")
    b = _Builder(abbreviations)
    for raw, kind in classified:
        stripped = raw.strip()
        if kind is LineKind.HEADER:
            b.open_scene(" ".join(stripped.split()))
            continue
        if b.scene is None:
            continue  # title page and other preamble
        if kind is LineKind.BLANK:
            b.close_action()
            if b.turn is not None:
                b.close_turn()
        elif kind is LineKind.ACTION:
            b.add_action(stripped)
        elif kind is LineKind.CUE:
            b.open_turn(stripped)
        elif kind is LineKind.PARENTHETICAL:
            b.add_parenthetical(stripped)
        elif kind is LineKind.DIALOGUE:
            b.add_dialogue(stripped)
    b.close_all()
    return b.scenes


# --------------------------------------------------------------------------
# canonical JSONL


def _records(scenes: Iterable[Scene], title_slug: str) -> Iterator[dict]:
    for scene in scenes:
        for el in scene.elements:
            if isinstance(el, ActionLine):
                yield {"title": title_slug, "scene_id": scene.scene_id, "kind": "action", "line_id": el.action_id, "text": el.text}
                continue
            for line in el.lines:
                for u in line.sentences:
                    yield {
                        "title": title_slug,
                        "scene_id": scene.scene_id,
                        "kind": "dialogue",
                        "turn_id": u.turn_id,
                        "line_id": u.line_id,
                        "utt_id": u.utt_id,
                        "speaker": u.speaker,
                        "position": u.position,
                        "text": u.text,
                    }


def emit_canonical(scenes: Iterable[Scene], title_slug: str) -> str:
    """Serialize scenes as canonical JSONL (UTF-8 text, LF line endings)."""
    return "".join(json.dumps(rec, ensure_ascii=False) + "\n" for rec in _records(scenes, title_slug))


def read_canonical(stream: str | Iterable[str]) -> dict[str, list[Scene]]:
    """Inverse of :func:`emit_canonical`; returns ``{title: scenes}``.

    Scene headers are not part of the stream and come back empty.
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream
    titles: dict[str, list[Scene]] = {}
    scene_index: dict[tuple[str, str], Scene] = {}
    for raw in lines:
        if not raw.strip():
            continue
        rec = json.loads(raw)
        key = (rec["title"], rec["scene_id"])
        scene = scene_index.get(key)
        if scene is None:
            scene = scene_index[key] = Scene(rec["scene_id"], "")
            titles.setdefault(rec["title"], []).append(scene)
        if rec["kind"] == "action":
            scene.elements.append(ActionLine(rec.get("line_id", ""), rec["text"]))
            continue
        last = scene.elements[-1] if scene.elements else None
        if not (isinstance(last, DialogueTurn) and last.turn_id == rec["turn_id"]):
            continued = any(isinstance(el, DialogueTurn) and el.turn_id == rec["turn_id"] for el in scene.elements)
            last = DialogueTurn(rec["turn_id"], rec["speaker"], continued=continued)
            scene.elements.append(last)
        if not last.lines or last.lines[-1].line_id != rec["line_id"]:
            last.lines.append(DialogueLine(rec["line_id"]))
        last.lines[-1].sentences.append(
            Utterance(
                utt_id=rec["utt_id"],
                speaker=rec["speaker"],
                turn_id=rec["turn_id"],
                scene_id=rec["scene_id"],
                text=rec["text"],
                position=int(rec["position"]),
                line_id=rec["line_id"],
            )
        )
    return titles
