"""Synthetic threaded scenes for tests."""

import numpy as np

from scenethreads.annotation import GoldLinks, links_to_tags
from scenethreads.screenplay import Scene, Utterance

SPEAKERS = ["ANNA", "BEN", "CARA", "DEV", "ELI", "FAY"]
WORDS = "apple river stone cloud market engine garden letter window silver ticket candle harbor winter".split()


def random_scene(rng, n_utts, scene_id="S1", n_speakers=4, p_start=0.2, line0=0, turn0=0):
    """A scene with reply links that mostly go to a recent utterance by someone else."""
    speakers = SPEAKERS[:n_speakers]
    utts, parent = [], {}
    topic = {}
    line = line0
    turn = turn0
    prev_speaker = None
    while len(utts) < n_utts:
        speaker = str(rng.choice([s for s in speakers if s != prev_speaker]))
        turn += 1
        for _ in range(int(rng.integers(1, 3))):
            line += 1
            for k in range(1, int(rng.integers(1, 3)) + 1):
                if len(utts) >= n_utts:
                    break
                i = len(utts)
                uid = f"D{line}.{k}"
                if i == 0 or rng.random() < p_start:
                    par = uid
                    words = list(rng.choice(WORDS, size=2, replace=False))
                else:
                    back = min(i, int(rng.geometric(0.6)))
                    par = utts[i - back].utt_id
                    words = list(topic[par][:1]) + [str(rng.choice(WORDS))]
                topic[uid] = words
                text = " ".join(words).capitalize() + "."
                utts.append(Utterance(uid, speaker, f"T{turn}", scene_id, text, i, f"D{line}"))
                parent[uid] = par
        prev_speaker = speaker
    return Scene(scene_id, f"INT. ROOM {scene_id}", _elements(utts)), GoldLinks(scene_id, parent)


def _elements(utts):
    from scenethreads.screenplay import DialogueLine, DialogueTurn
    turns, lines = [], {}
    for u in utts:
        if not turns or turns[-1].turn_id != u.turn_id:
            turns.append(DialogueTurn(u.turn_id, u.speaker, []))
        t = turns[-1]
        if u.line_id not in lines:
            lines[u.line_id] = DialogueLine(u.line_id, [])
            t.lines.append(lines[u.line_id])
        lines[u.line_id].sentences.append(u)
    return turns


def random_corpus(seed, n_scenes, lo=5, hi=25):
    rng = np.random.default_rng(seed)
    out, line0, turn0 = [], 0, 0
    for s in range(n_scenes):
        scene, gold = random_scene(rng, int(rng.integers(lo, hi + 1)), f"S{s + 1}", line0=line0, turn0=turn0)
        line0 += len(scene.dialogue_lines())
        turn0 += len(scene.turn_ids())
        out.append((gold, scene))
    return out


def to_table(corpus):
    """Annotation TSV for (gold, scene) pairs."""
    rows = ["scene_id\tturn_id\tline_id\tspeaker\ttext\ttags"]
    for gold, scene in corpus:
        tags = links_to_tags(gold)
        by_line = {}
        for u in scene.utterances():
            by_line.setdefault(u.line_id, []).append(u)
        for lid, us in by_line.items():
            rows.append("\t".join([scene.scene_id, us[0].turn_id, lid, us[0].speaker,
                                   "|".join(u.text for u in us), "|".join(tags[u.utt_id] for u in us)]))
    return "\n".join(rows) + "\n"
