"""Pure-Python kernels. Reference semantics for ``_kernels.pyx``."""

import numpy as np


def contingency(a, b, ka, kb):
    table = np.zeros((ka, kb), dtype=np.int64)
    for x, y in zip(a.tolist(), b.tolist()):
        table[x, y] += 1
    return table


def utterance_features(speakers):
    """Per-utterance columns: distinct other speakers since the speaker last
    spoke, utterances since they last spoke (the scene length if never), and whether the
    next utterance has the same speaker."""
    spk = speakers.tolist()
    n = len(spk)
    out = np.zeros((n, 3), dtype=np.float64)
    last = {}
    for i, s in enumerate(spk):
        start = last.get(s, -1) + 1
        others = {t for t in spk[start:i] if t != s}
        out[i, 0] = len(others)
        out[i, 1] = i - last[s] if s in last else n
        out[i, 2] = 1.0 if i + 1 < n and spk[i + 1] == s else 0.0
        last[s] = i
    return out


def pair_features(speakers, turns, tok_indptr, tok_ids, ui, uj, ufeat, dup):
    spk = speakers.tolist()
    trn = turns.tolist()
    indptr = tok_indptr.tolist()
    ids = tok_ids.tolist()
    m = len(ui)
    width = 12 if dup else 9
    out = np.zeros((m, width), dtype=np.float64)
    for r, (i, j) in enumerate(zip(ui.tolist(), uj.tolist())):
        out[r, 0:3] = ufeat[i]
        ti = set(ids[indptr[i] : indptr[i + 1]])
        tj = set(ids[indptr[j] : indptr[j + 1]])
        out[r, 3] = len(ti & tj)
        out[r, 4] = abs(i - j)
        lo, hi = min(i, j), max(i, j)
        pair = (spk[i], spk[j])
        out[r, 5] = 1.0 if any(spk[k] in pair for k in range(lo + 1, hi)) else 0.0
        out[r, 6] = 1.0 if trn[i] == trn[j] else 0.0
        out[r, 7] = 1.0 if spk[i] == spk[j] else 0.0
        out[r, 8] = 1.0 if i == j else 0.0
        if dup:
            out[r, 9:12] = ufeat[j]
    return out
