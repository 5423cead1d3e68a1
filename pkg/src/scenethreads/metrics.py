"""Link and clustering metrics, inter-annotator agreement, bootstrap CIs.

Every metric returns a percentage. Corpus-level figures are computed per
scene and micro-averaged by utterance count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .annotation import GoldLinks, ThreadPartition, links_to_partition
from .errors import TooFewUnits, UtteranceSetMismatch

METRIC_NAMES = ("link_accuracy", "ari", "one_minus_vi", "shen_f1", "one_to_one", "exact_match_f1")


@dataclass
class ContingencyTable:
    """Co-membership counts; rows are gold threads, columns predicted threads."""

    counts: np.ndarray
    gold_labels: list
    pred_labels: list

    @property
    def a(self):
        return self.counts.sum(axis=1)

    @property
    def b(self):
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def _assignment(p) -> dict:
    return p.assignment if isinstance(p, ThreadPartition) else dict(p)


def contingency_table(pred, gold) -> ContingencyTable:
    pa, ga = _assignment(pred), _assignment(gold)
    if pa.keys() != ga.keys():
        raise UtteranceSetMismatch(f"{len(pa.keys() ^ ga.keys())} utterances differ between prediction and gold")
    keys = list(ga)
    gl = list(dict.fromkeys(ga[k] for k in keys))
    pl = list(dict.fromkeys(pa[k] for k in keys))
    gi = {lab: i for i, lab in enumerate(gl)}
    pi = {lab: i for i, lab in enumerate(pl)}
    a = np.fromiter((gi[ga[k]] for k in keys), dtype=np.int64, count=len(keys))
    b = np.fromiter((pi[pa[k]] for k in keys), dtype=np.int64, count=len(keys))
    return ContingencyTable(kernels.contingency(a, b, len(gl), len(pl)), gl, pl)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


# --------------------------------------------------------------------------
# individual metrics


def link_accuracy(pred: GoldLinks, gold: GoldLinks) -> float:
    if pred.parent.keys() != gold.parent.keys():
        raise UtteranceSetMismatch("prediction and gold cover different utterances")
    if not gold.parent:
        return 100.0
    hits = sum(pred.parent[u] == p for u, p in gold.parent.items())
    return 100.0 * hits / len(gold.parent)


def ari(pred, gold) -> float:
    t = contingency_table(pred, gold)
    index = _comb2(t.counts).sum()
    sa, sb = _comb2(t.a).sum(), _comb2(t.b).sum()
    total = _comb2(t.n)
    expected = sa * sb / total if total else 0.0
    max_index = 0.5 * (sa + sb)
    denom = max_index - expected
    if denom == 0:
        return 100.0 if _same_partition(t) else 0.0
    return 100.0 * (index - expected) / denom


def _same_partition(t: ContingencyTable) -> bool:
    nz = t.counts > 0
    return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))


VI_NORMALIZERS = ("log_n", "none")


def variation_of_information(pred, gold) -> float:
    """VI in nats: H(gold | pred) + H(pred | gold)."""
    t = contingency_table(pred, gold)
    n = t.n
    c = t.counts.astype(np.float64)
    nz = c > 0
    a = t.a.astype(np.float64)[:, None].repeat(c.shape[1], axis=1)
    b = t.b.astype(np.float64)[None, :].repeat(c.shape[0], axis=0)
    r = c[nz] / n
    return float(-np.sum(r * (np.log(c[nz] / a[nz]) + np.log(c[nz] / b[nz]))))


def one_minus_vi(pred, gold, normalizer: str = "log_n") -> float:
    """100 * (1 - VI / log n); ``normalizer="none"`` reports 100 * (1 - VI)."""
    vi = variation_of_information(pred, gold)
    n = len(_assignment(gold))
    if normalizer == "none":
        return 100.0 * (1.0 - vi)
    if normalizer != "log_n":
        raise ValueError(f"unknown VI normalizer {normalizer!r}")
    if n <= 1:
        return 100.0
    return 100.0 * (1.0 - vi / math.log(n))


def shen_f1(pred, gold) -> float:
    t = contingency_table(pred, gold)
    c = t.counts.astype(np.float64)
    ni = t.a.astype(np.float64)[:, None]
    nj = t.b.astype(np.float64)[None, :]
    recall = c / ni
    precision = c / nj
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(c > 0, 2 * precision * recall / (precision + recall), 0.0)
    return 100.0 * float(np.sum(t.a / t.n * f.max(axis=1)))


def one_to_one(pred, gold) -> float:
    t = contingency_table(pred, gold)
    rows, cols = linear_sum_assignment(t.counts, maximize=True)
    return 100.0 * float(t.counts[rows, cols].sum()) / t.n


def exact_match_f1(pred, gold) -> float:
    ga, pa = _assignment(gold), _assignment(pred)
    if ga.keys() != pa.keys():
        raise UtteranceSetMismatch("prediction and gold cover different utterances")
    gold_sets = {frozenset(v) for v in _groups(ga).values()}
    pred_sets = {frozenset(v) for v in _groups(pa).values()}
    matched = len(gold_sets & pred_sets)
    precision = matched / len(pred_sets) if pred_sets else 0.0
    recall = matched / len(gold_sets) if gold_sets else 0.0
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def _groups(assignment: dict) -> dict:
    out: dict = {}
    for k, lab in assignment.items():
        out.setdefault(lab, []).append(k)
    return out


# --------------------------------------------------------------------------
# corpus aggregation


@dataclass
class Unit:
    """One scene: predicted and gold links."""

    pred: GoldLinks
    gold: GoldLinks

    def __post_init__(self):
        self.pred_partition = links_to_partition(self.pred)
        self.gold_partition = links_to_partition(self.gold)

    @property
    def n(self) -> int:
        return len(self.gold.parent)


def _scene_values(unit: Unit, vi_normalizer="log_n") -> dict[str, float]:
    pp, gp = unit.pred_partition, unit.gold_partition
    return {
        "link_accuracy": link_accuracy(unit.pred, unit.gold),
        "ari": ari(pp, gp),
        "one_minus_vi": one_minus_vi(pp, gp, vi_normalizer),
        "shen_f1": shen_f1(pp, gp),
        "one_to_one": one_to_one(pp, gp),
        "exact_match_f1": exact_match_f1(pp, gp),
    }


@dataclass
class PerUnit:
    """Per-scene metric values and utterance-count weights."""

    values: dict[str, np.ndarray]
    weights: np.ndarray

    @classmethod
    def compute(cls, units: Sequence[Unit], vi_normalizer="log_n") -> "PerUnit":
        rows = [_scene_values(u, vi_normalizer) for u in units]
        return cls(
            {m: np.array([r[m] for r in rows], dtype=np.float64) for m in METRIC_NAMES},
            np.array([u.n for u in units], dtype=np.float64),
        )

    def micro(self, metric: str, idx=None) -> float:
        v, w = self.values[metric], self.weights
        if idx is not None:
            v, w = v[idx], w[idx]
        return float(np.sum(v * w) / np.sum(w))


@dataclass
class MetricsReport:
    values: dict[str, float]
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def __getattr__(self, name):
        if name in METRIC_NAMES:
            return self.values[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        out = {}
        for m, v in self.values.items():
            lo, hi = self.ci.get(m, (None, None))
            out[m] = {"point": v, "lo": lo, "hi": hi}
        return out

    def to_json(self) -> str:
        return json.dumps({"metrics": self.to_dict(), "notes": self.notes}, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["metric,point,lo,hi"]
        for m, d in self.to_dict().items():
            lines.append(",".join([m] + ["" if d[k] is None else repr(d[k]) for k in ("point", "lo", "hi")]))
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        width = max(len(m) for m in self.values)
        rows = []
        for m, v in self.values.items():
            ci = self.ci.get(m)
            tail = f"  [{ci[0]:.2f}-{ci[1]:.2f}]" if ci else ""
            rows.append(f"{m.ljust(width)}  {v:6.2f}{tail}")
        return "\n".join(rows)


def evaluate(units: Sequence[Unit], resamples: int = 0, seed: int = 0, vi_normalizer="log_n", jobs: int = 1) -> MetricsReport:
    """Micro-averaged corpus metrics, with bootstrap CIs when ``resamples > 0``."""
    per = PerUnit.compute(units, vi_normalizer)
    values = {m: per.micro(m) for m in METRIC_NAMES}
    report = MetricsReport(values, notes={"aggregation": "per-scene, micro-averaged by utterance count",
                                          "vi_normalizer": vi_normalizer, "scenes": len(units),
                                          "utterances": int(per.weights.sum())})
    if resamples:
        for m in METRIC_NAMES:
            _, lo, hi = bootstrap_ci(MicroAverage(m, per), list(range(len(units))), resamples, seed, jobs=jobs)
            report.ci[m] = (lo, hi)
    return report


def agreement(annot_a: Sequence[GoldLinks], annot_b: Sequence[GoldLinks], vi_normalizer="log_n") -> MetricsReport:
    """Full suite with A as reference and B as candidate.

    Shen F1 is direction-dependent; the report's value is the mean of both
    directions and ``notes["shen_f1_directional"]`` holds each one.
    """
    a_by = {lk.scene_id: lk for lk in annot_a}
    b_by = {lk.scene_id: lk for lk in annot_b}
    if a_by.keys() != b_by.keys():
        raise UtteranceSetMismatch("annotations cover different scenes")
    forward = [Unit(b_by[s], a_by[s]) for s in a_by]
    backward = [Unit(a_by[s], b_by[s]) for s in a_by]
    fw = PerUnit.compute(forward, vi_normalizer)
    bw = PerUnit.compute(backward, vi_normalizer)
    values = {m: fw.micro(m) for m in METRIC_NAMES}
    a_ref, b_ref = fw.micro("shen_f1"), bw.micro("shen_f1")
    values["shen_f1"] = 0.5 * (a_ref + b_ref)
    return MetricsReport(values, notes={"reference": "A", "shen_f1_directional": {"A_as_gold": a_ref, "B_as_gold": b_ref},
                                        "vi_normalizer": vi_normalizer})


# --------------------------------------------------------------------------
# bootstrap


class MicroAverage:
    """Corpus metric over unit indices, vectorized for resampling."""

    def __init__(self, metric: str, per: PerUnit):
        self.metric, self.per = metric, per

    def __call__(self, idx) -> float:
        return self.per.micro(self.metric, np.asarray(idx, dtype=np.int64))

    def many(self, idx_matrix: np.ndarray) -> np.ndarray:
        v = self.per.values[self.metric][idx_matrix]
        w = self.per.weights[idx_matrix]
        return (v * w).sum(axis=1) / w.sum(axis=1)


def resample_indices(n_units: int, resamples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, n_units, size=(resamples, n_units))


def bootstrap_ci(metric: Callable, units: Sequence, resamples: int = 1000, seed: int = 0, level: float = 95.0,
                 jobs: int = 1) -> tuple[float, float, float]:
    """Percentile bootstrap over units (scenes) resampled with replacement.

    ``metric`` maps a list of units to a number. A :class:`MicroAverage`
    is given unit indices instead and evaluated in one vectorized pass. All
    resample indices are drawn up front from ``seed``, so results do not
    depend on ``jobs``.
    """
    if len(units) < 2:
        raise TooFewUnits("bootstrap needs at least two units")
    if resamples < 100:
        raise ValueError("use at least 100 resamples")
    idx = resample_indices(len(units), resamples, seed)
    if isinstance(metric, MicroAverage):
        point = metric(np.arange(len(units)))
        stats = metric.many(idx)
    else:
        units = list(units)
        point = float(metric(units))

        def one(row):
            return float(metric([units[k] for k in row]))

        if jobs > 1:
            with ThreadPoolExecutor(jobs) as ex:
                stats = np.array(list(ex.map(one, idx)))
        else:
            stats = np.array([one(row) for row in idx])
    tail = (100.0 - level) / 2
    lo, hi = np.percentile(stats, [tail, 100.0 - tail])
    return float(point), float(lo), float(hi)
