"""Thread-level helpers shared by evaluation and analytics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

from .annotation import GoldLinks, ThreadPartition
from .screenplay import Scene, Utterance


@dataclass(frozen=True)
class Violation:
    kind: str  # Orphan | ForwardReply | UnknownParent | Cycle | Extra
    utt_id: str
    detail: str = ""

    def __str__(self):
        return f"{self.kind}({self.utt_id})"


def _utts(scene) -> list[Utterance]:
    return scene.utterances() if isinstance(scene, Scene) else list(scene)


def validate_links(links: GoldLinks, scene: Scene | Sequence[Utterance]) -> list[Violation]:
    """Problems with ``links`` as a reply-to forest over the scene; empty if valid."""
    utts = _utts(scene)
    pos = {u.utt_id: u.position for u in utts}
    out = []
    for u in utts:
        if u.utt_id not in links.parent:
            out.append(Violation("Orphan", u.utt_id))
    for child, parent in links.parent.items():
        if child not in pos:
            out.append(Violation("Extra", child, "not an utterance of this scene"))
        elif parent not in pos:
            out.append(Violation("UnknownParent", child, parent))
        elif pos[parent] > pos[child]:
            out.append(Violation("ForwardReply", child, parent))
    # cycles among non-self links
    state: dict[str, int] = {}
    for start in links.parent:
        node, path = start, []
        while node in links.parent and state.get(node) is None:
            state[node] = 1
            path.append(node)
            nxt = links.parent[node]
            if nxt == node:
                break
            if state.get(nxt) == 1:
                out.append(Violation("Cycle", nxt))
                break
            node = nxt
        for p in path:
            state[p] = 2
    return out


@dataclass
class ThreadInfo:
    label: str
    size: int
    start_utt_id: str
    start_speaker: str


@dataclass
class ThreadStats:
    scene_id: str
    threads: list[ThreadInfo]
    mean_length: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


def thread_stats(partition: ThreadPartition, scene: Scene | Sequence[Utterance]) -> ThreadStats:
    """Sizes and initiators; a thread starts at its minimum-position member."""
    utts = sorted(_utts(scene), key=lambda u: u.position)
    first: dict[str, Utterance] = {}
    sizes: dict[str, int] = {}
    for u in utts:
        label = partition.assignment[u.utt_id]
        first.setdefault(label, u)
        sizes[label] = sizes.get(label, 0) + 1
    threads = [ThreadInfo(lab, sizes[lab], u.utt_id, u.speaker) for lab, u in first.items()]
    mean = sum(sizes.values()) / len(threads) if threads else 0.0
    return ThreadStats(partition.scene_id, threads, mean)
