"""Reading per-sentence thread annotations and turning them into gold links.

Tag symbols, one per sentence:

    T F P   thread start (both / floor-only / topic-only change)
    -       replies to the preceding sentence
    D<x>    replies to dialogue line or sentence D<x>
    S       skip (OCR or parse debris)
    X       needs discussion

Post-processing drops skipped rows, renumbers dialogue line IDs densely,
resolves ``-`` and ``D<x>`` into explicit parents, and labels threads
T1, T2, ... by first appearance.
"""

from __future__ import annotations

import csv
import io
import json
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import ColumnMissing, AnnotationError, DanglingReply, ForwardReply, NotAForest, UnknownTag
from .screenplay import ActionLine, DialogueLine, DialogueTurn, Scene, Utterance

REQUIRED_COLUMNS = ("turn_id", "line_id", "speaker", "text", "tags")


class TagKind(str, Enum):
    THREAD_START = "thread_start"
    PREV = "prev"
    REPLY_TO = "reply_to"
    SKIP = "skip"
    DISCUSS = "discuss"


@dataclass(frozen=True)
class AnnotationTag:
    kind: TagKind
    flavor: str | None = None
    target: str | None = None

    @classmethod
    def parse(cls, symbol: str) -> "AnnotationTag":
        s = symbol.strip()
        if s in ("T", "F", "P"):
            return cls(TagKind.THREAD_START, flavor=s)
        if s == "-":
            return cls(TagKind.PREV)
        if s == "S":
            return cls(TagKind.SKIP)
        if s == "X":
            return cls(TagKind.DISCUSS)
        if re.fullmatch(r"D[A-Za-z0-9]+(?:\.\d+)?", s):
            return cls(TagKind.REPLY_TO, target=s)
        raise UnknownTag(f"unknown annotation symbol {symbol!r}")

    def symbol(self) -> str:
        return {
            TagKind.THREAD_START: self.flavor,
            TagKind.PREV: "-",
            TagKind.SKIP: "S",
            TagKind.DISCUSS: "X",
            TagKind.REPLY_TO: self.target,
        }[self.kind]


@dataclass(frozen=True)
class AnnotatedUtterance:
    utterance: Utterance
    tag: AnnotationTag
    row: int = 0


@dataclass(frozen=True)
class AnnotatedAction:
    """An action row; kept only so scenes can be rebuilt with their context."""

    scene_id: str
    action_id: str
    text: str
    row: int = 0


@dataclass
class GoldLinks:
    """Reply-to parents for one scene. Key order is position order."""

    scene_id: str
    parent: dict[str, str]

    def __len__(self):
        return len(self.parent)

    def roots(self) -> list[str]:
        return [u for u, p in self.parent.items() if u == p]


@dataclass
class ThreadPartition:
    scene_id: str
    assignment: dict[str, str]
    start_flavor: dict[str, str] = field(default_factory=dict)

    def threads(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for utt, label in self.assignment.items():
            out.setdefault(label, []).append(utt)
        return out

    def __len__(self):
        return len(self.assignment)


@dataclass
class ColumnMap:
    turn_id: str = "turn_id"
    line_id: str = "line_id"
    speaker: str = "speaker"
    text: str = "text"
    tags: str = "tags"
    scene_id: str | None = "scene_id"
    tag_delimiter: str = "|"
    sentence_delimiter: str = "|"

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str | None]) -> "ColumnMap":
        missing = [c for c in REQUIRED_COLUMNS if not mapping.get(c)]
        if missing:
            raise ColumnMissing(f"column map lacks {', '.join(missing)}")
        known = {k: v for k, v in mapping.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# --------------------------------------------------------------------------
# reading


def _is_action_id(line_id: str) -> bool:
    return re.fullmatch(r"A\d*", line_id.strip()) is not None


def read_annotations(table: str | Iterable[str], column_map: ColumnMap | Mapping | None = None, dialect: str | None = None) -> list:
    """Read an annotation table (TSV or CSV) into annotated sentences.

    Returns :class:`AnnotatedUtterance` items, one per sentence, interleaved
    with :class:`AnnotatedAction` items for rows whose line ID is ``A``.
    Positions count sentences within each scene. Dummy IDs such as ``La``
    and ``Da`` are kept as written.
    """
    if column_map is None:
        column_map = ColumnMap()
    elif not isinstance(column_map, ColumnMap):
        column_map = ColumnMap.from_mapping(column_map)
    text = table if isinstance(table, str) else "".join(l if l.endswith("\n") else l + "\n" for l in table)
    if dialect is None:
        first = text.split("\n", 1)[0]
        dialect = "tsv" if "\t" in first else "csv"
    reader = csv.DictReader(io.StringIO(text), delimiter="\t" if dialect == "tsv" else ",")
    header = reader.fieldnames or []
    required = [getattr(column_map, c) for c in REQUIRED_COLUMNS]
    absent = [c for c in required if c not in header]
    if absent:
        raise ColumnMissing(f"table lacks column(s) {', '.join(absent)}")
    scene_col = column_map.scene_id if column_map.scene_id in header else None

    items: list = []
    positions: dict[str, int] = {}
    n_actions = 0
    for row_no, row in enumerate(reader, start=2):
        scene_id = (row[scene_col] or "").strip() if scene_col else "S1"
        line_id = (row[column_map.line_id] or "").strip()
        raw_text = row[column_map.text] or ""
        if _is_action_id(line_id):
            n_actions += 1
            items.append(AnnotatedAction(scene_id, f"A{n_actions}", raw_text.strip(), row_no))
            continue
        raw_tags = (row[column_map.tags] or "").strip()
        if not raw_tags:
            raise AnnotationError(f"row {row_no}: dialogue line {line_id} has no tags")
        tags = [AnnotationTag.parse(t) for t in raw_tags.split(column_map.tag_delimiter)]
        if len(tags) == 1:
            sentences = [raw_text.strip()]
        else:
            sentences = [s.strip() for s in raw_text.split(column_map.sentence_delimiter)]
            if len(sentences) != len(tags):
                raise AnnotationError(f"row {row_no}: {len(tags)} tags but {len(sentences)} sentences")
        turn_id = (row[column_map.turn_id] or "").strip()
        speaker = " ".join((row[column_map.speaker] or "").upper().split())
        for k, (sentence, tag) in enumerate(zip(sentences, tags), start=1):
            pos = positions.get(scene_id, 0)
            positions[scene_id] = pos + 1
            utt = Utterance(f"{line_id}.{k}", speaker, turn_id, scene_id, sentence, pos, line_id)
            items.append(AnnotatedUtterance(utt, tag, row_no))
    return items


# --------------------------------------------------------------------------
# post-processing


@dataclass
class Postprocessed:
    """Result of :func:`postprocess`, keyed by scene ID in document order."""

    links: dict[str, GoldLinks]
    partitions: dict[str, ThreadPartition]
    scenes: list[Scene]
    line_id_map: dict[str, str]
    utt_id_map: dict[str, str]
    warnings: list[str] = field(default_factory=list)
    flagged: list[str] = field(default_factory=list)

    def pairs(self) -> list[tuple[GoldLinks, Scene]]:
        return [(self.links[s.scene_id], s) for s in self.scenes]


def _dense_line_ids(line_ids: Sequence[str]) -> list[str]:
    numbers = [int(m.group(1)) if (m := re.fullmatch(r"D(\d+)", lid)) else None for lid in line_ids]
    anchor = next((i for i, n in enumerate(numbers) if n is not None), None)
    start = 1 if anchor is None else max(1, numbers[anchor] - anchor)
    return [f"D{start + i}" for i in range(len(line_ids))]


def postprocess(annotated: Sequence, line_reference: str = "last") -> Postprocessed:
    """Clean annotations and derive gold links and thread partitions.

    ``line_reference`` decides which sentence a bare line reference such as
    ``D45`` points to: ``"last"`` (default) or ``"first"``. A reference to the
    UOI's own line only considers sentences before the UOI. Each such
    resolution is listed in ``flagged``.
    """
    if line_reference not in ("last", "first"):
        raise ValueError("line_reference must be 'last' or 'first'")
    notes: list[str] = []
    flagged: list[str] = []

    def warn(msg):
        notes.append(msg)
        warnings.warn(msg, stacklevel=3)

    utts = [a for a in annotated if isinstance(a, AnnotatedUtterance)]
    scene_order = list(dict.fromkeys(a.scene_id if isinstance(a, AnnotatedAction) else a.utterance.scene_id for a in annotated))

    # rows are the unit of line identity; dummy IDs may repeat
    row_keys = list(dict.fromkeys(a.row for a in utts))
    row_line = {a.row: a.utterance.line_id for a in utts}
    live = {a.row for a in utts if a.tag.kind is not TagKind.SKIP}
    surviving_rows = [r for r in row_keys if r in live]
    new_line_of_row = dict(zip(surviving_rows, _dense_line_ids([row_line[r] for r in surviving_rows])))
    line_id_map = {row_line[r]: new_line_of_row[r] for r in surviving_rows}

    new_id: dict[int, str] = {}  # index into utts -> new utt id
    sentence_counter: dict[int, int] = {}
    for idx, a in enumerate(utts):
        if a.tag.kind is TagKind.SKIP:
            continue
        k = sentence_counter.get(a.row, 0) + 1
        sentence_counter[a.row] = k
        new_id[idx] = f"{new_line_of_row[a.row]}.{k}"
    utt_id_map = {utts[i].utterance.utt_id: nid for i, nid in new_id.items()}

    by_line: dict[str, list[int]] = {}
    by_row: dict[int, list[int]] = {}
    for j, b in enumerate(utts):
        by_line.setdefault(b.utterance.line_id, []).append(j)
        by_row.setdefault(b.row, []).append(j)

    def resolve_target(idx, target):
        """Index into ``utts`` of the referenced sentence, or None."""
        if "." in target:
            line, k = target.rsplit(".", 1)
            cands = [j for j in by_line.get(line, []) if utts[j].utterance.utt_id == target]
            before = [j for j in cands if j < idx]
            return (before or cands or [None])[-1]
        idxs = by_line.get(target, [])
        if not idxs:
            return None
        before = [j for j in idxs if j <= idx]
        row = utts[(before or idxs)[-1]].row
        members = [j for j in by_row[row] if row != utts[idx].row or j < idx]
        if not members:
            return idx  # reference to own line with nothing before: forward reply
        flagged.append(f"{utts[idx].utterance.utt_id}: line reference {target} resolved to {line_reference} sentence")
        return members[-1] if line_reference == "last" else members[0]

    parents: dict[str, dict[str, str]] = {s: {} for s in scene_order}
    flavors: dict[str, dict[str, str]] = {s: {} for s in scene_order}
    new_utts: dict[str, list[Utterance]] = {s: [] for s in scene_order}
    prev_survivor: dict[str, int] = {}
    for idx, a in enumerate(utts):
        if a.tag.kind is TagKind.SKIP:
            continue
        u = a.utterance
        scene = u.scene_id
        me = new_id[idx]
        tag = a.tag
        if tag.kind is TagKind.DISCUSS:
            warn(f"{u.utt_id}: unadjudicated X tag treated as '-'")
            tag = AnnotationTag(TagKind.PREV)
        if tag.kind is TagKind.THREAD_START:
            parent = me
            flavors[scene][me] = tag.flavor
        elif tag.kind is TagKind.PREV:
            if scene in prev_survivor:
                parent = new_id[prev_survivor[scene]]
            else:
                warn(f"{u.utt_id}: '-' on the first sentence of scene {scene}; treated as thread start")
                parent = me
                flavors[scene][me] = "T"
        else:
            t = resolve_target(idx, tag.target)
            if t is None or utts[t].utterance.scene_id != scene:
                raise DanglingReply(f"{u.utt_id}: reply target {tag.target} does not exist in scene {scene}")
            if t >= idx:
                raise ForwardReply(f"{u.utt_id}: reply target {tag.target} does not precede it")
            if t not in new_id:
                # only an earlier surviving sentence of the same line is unambiguously in the same thread
                earlier = next((j for j in reversed(by_row[utts[t].row]) if j < t and j in new_id), None)
                if earlier is None:
                    raise DanglingReply(f"{u.utt_id}: reply target {tag.target} was skipped and no earlier sentence of its line survives")
                warn(f"{u.utt_id}: reply target {tag.target} was skipped; re-targeted to {new_id[earlier]}")
                t = earlier
            parent = new_id[t]
        parents[scene][me] = parent
        new_utts[scene].append(
            Utterance(me, u.speaker, u.turn_id, scene, u.text, len(new_utts[scene]), me.rsplit(".", 1)[0])
        )
        prev_survivor[scene] = idx

    links, partitions = {}, {}
    for scene in scene_order:
        links[scene] = GoldLinks(scene, parents[scene])
        part = links_to_partition(links[scene])
        part.start_flavor = {part.assignment[root]: fl for root, fl in flavors[scene].items()}
        partitions[scene] = part

    scenes = _rebuild_scenes(annotated, scene_order, new_utts)
    return Postprocessed(links, partitions, scenes, line_id_map, utt_id_map, notes, flagged)


def _rebuild_scenes(annotated, scene_order, new_utts) -> list[Scene]:
    scenes = {s: Scene(s, "") for s in scene_order}
    queue = {s: list(us) for s, us in new_utts.items()}
    # walk the original rows to interleave actions with surviving sentences
    for a in annotated:
        if isinstance(a, AnnotatedAction):
            scenes[a.scene_id].elements.append(ActionLine(a.action_id, a.text))
            continue
        if a.tag.kind is TagKind.SKIP:
            continue
        scene = scenes[a.utterance.scene_id]
        u = queue[a.utterance.scene_id].pop(0)
        last = scene.elements[-1] if scene.elements else None
        if not (isinstance(last, DialogueTurn) and last.turn_id == u.turn_id):
            last = DialogueTurn(u.turn_id, u.speaker)
            scene.elements.append(last)
        if not last.lines or last.lines[-1].line_id != u.line_id:
            last.lines.append(DialogueLine(u.line_id))
        last.lines[-1].sentences.append(u)
    return [scenes[s] for s in scene_order]


# --------------------------------------------------------------------------
# links <-> partitions


def links_to_partition(links: GoldLinks) -> ThreadPartition:
    """Threads as connected components of the reply-to forest."""
    parent = links.parent
    root_of: dict[str, str] = {}
    for utt in parent:
        path = []
        node = utt
        while node not in root_of:
            if node not in parent:
                raise NotAForest(f"{links.scene_id}: {node} has no parent entry")
            nxt = parent[node]
            if nxt == node:
                root_of[node] = node
                break
            if node in path:
                raise NotAForest(f"{links.scene_id}: cycle through {node}")
            path.append(node)
            node = nxt
        root = root_of[node]
        for p in path:
            root_of[p] = root
    labels: dict[str, str] = {}
    assignment = {}
    for utt in parent:
        root = root_of[utt]
        if root not in labels:
            labels[root] = f"T{len(labels) + 1}"
        assignment[utt] = labels[root]
    return ThreadPartition(links.scene_id, assignment)


def partition_to_links_previousstyle(partition: ThreadPartition) -> GoldLinks:
    last: dict[str, str] = {}
    parent = {}
    for utt, label in partition.assignment.items():
        parent[utt] = last.get(label, utt)
        last[label] = utt
    return GoldLinks(partition.scene_id, parent)


def relabel(partition: ThreadPartition) -> ThreadPartition:
    """Canonical labels T1, T2, ... in order of first appearance."""
    labels: dict[str, str] = {}
    out = {}
    for utt, lab in partition.assignment.items():
        out[utt] = labels.setdefault(lab, f"T{len(labels) + 1}")
    return ThreadPartition(partition.scene_id, out, {labels[k]: v for k, v in partition.start_flavor.items() if k in labels})


def links_to_tags(links: GoldLinks) -> dict[str, str]:
    """Tag symbols that reproduce ``links``: T, - or an explicit sentence ID."""
    order = list(links.parent)
    tags = {}
    for i, (utt, par) in enumerate(links.parent.items()):
        if par == utt:
            tags[utt] = "T"
        elif i > 0 and order[i - 1] == par:
            tags[utt] = "-"
        else:
            tags[utt] = par
    return tags


# --------------------------------------------------------------------------
# gold JSONL


def emit_gold(links: Iterable[GoldLinks]) -> str:
    """Gold/prediction JSONL: one ``{scene_id, utt_id, parent_id, thread_label}`` per utterance."""
    out = []
    for lk in links:
        part = links_to_partition(lk)
        for utt, par in lk.parent.items():
            rec = {"scene_id": lk.scene_id, "utt_id": utt, "parent_id": par, "thread_label": part.assignment[utt]}
            out.append(json.dumps(rec, ensure_ascii=False) + "\n")
    return "".join(out)


def read_gold(stream: str | Iterable[str]) -> dict[str, GoldLinks]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    out: dict[str, GoldLinks] = {}
    for raw in lines:
        if not raw.strip():
            continue
        rec = json.loads(raw)
        lk = out.setdefault(rec["scene_id"], GoldLinks(rec["scene_id"], {}))
        lk.parent[rec["utt_id"]] = rec["parent_id"]
    return out
