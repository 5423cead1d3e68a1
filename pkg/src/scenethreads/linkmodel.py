"""Featurized reply-to link model.

Each (UOI, candidate) pair is described by eight structural features plus a
self-link indicator. A small scorer (linear, or one tanh hidden layer
followed by a sigmoid) gives every candidate in the UOI's pool a match score,
and the highest-scoring candidate becomes the parent. Training minimises
binary cross-entropy over gold parents and sampled negatives, optionally
with an auxiliary same-thread head.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .annotation import GoldLinks, links_to_partition
from .errors import EmptyDataset, NoPositives, ScenesMismatch
from .screenplay import Scene, Utterance

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "speakers_spoken_after",
    "utterances_since_speaker_last_spoke",
    "next_same_speaker",
    "common_tokens",
    "distance",
    "intervening_same_speakers",
    "same_turn",
    "same_speaker",
    "is_self",
)
CANDIDATE_FEATURE_NAMES = tuple(f"candidate_{n}" for n in FEATURE_NAMES[:3])
IS_SELF = FEATURE_NAMES.index("is_self")


# --------------------------------------------------------------------------
# tokenization


def word_tokens(text: str) -> list[str]:
    return re.findall(r"\w+", text.lower())


class WordPieceTokenizer:
    """Greedy longest-match-first subword tokenizer over a vocabulary file."""

    def __init__(self, vocab: Sequence[str], lowercase: bool = True, unk: str = "[UNK]"):
        self.vocab = set(vocab)
        self.lowercase = lowercase
        self.unk = unk

    @classmethod
    def from_file(cls, path, **kw) -> "WordPieceTokenizer":
        with open(path, encoding="utf-8") as fh:
            return cls([ln.rstrip("\n") for ln in fh if ln.strip()], **kw)

    def __call__(self, text: str) -> list[str]:
        if self.lowercase:
            text = text.lower()
        out = []
        for word in re.findall(r"\w+|[^\w\s]", text):
            start, pieces = 0, []
            while start < len(word):
                end = len(word)
                while end > start:
                    piece = word[start:end] if start == 0 else "##" + word[start:end]
                    if piece in self.vocab:
                        break
                    end -= 1
                if end == start:
                    pieces = [self.unk]
                    break
                pieces.append(piece)
                start = end
            out.extend(pieces)
        return out


# --------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class FeatureVector:
    speakers_spoken_after: float
    utterances_since_speaker_last_spoke: float
    next_same_speaker: float
    common_tokens: float
    distance: float
    intervening_same_speakers: float
    same_turn: float
    same_speaker: float
    is_self: float
    candidate: tuple[float, float, float] | None = None

    def as_array(self) -> np.ndarray:
        head = [getattr(self, n) for n in FEATURE_NAMES]
        return np.array(head + list(self.candidate or ()), dtype=np.float64)

    @classmethod
    def from_array(cls, row) -> "FeatureVector":
        row = [float(v) for v in row]
        cand = tuple(row[9:12]) if len(row) > 9 else None
        return cls(*row[:9], candidate=cand)


class SceneFeatures:
    """Integer-coded view of a scene's utterances for the feature kernels."""

    def __init__(self, utterances: Sequence[Utterance], tokenizer: Callable[[str], list[str]] = word_tokens,
                 candidate_features: bool = False):
        self.utterances = list(utterances)
        self.index = {u.utt_id: i for i, u in enumerate(self.utterances)}
        self.dup = candidate_features
        spk: dict[str, int] = {}
        trn: dict[str, int] = {}
        vocab: dict[str, int] = {}
        self.speakers = np.array([spk.setdefault(u.speaker, len(spk)) for u in self.utterances], dtype=np.int64)
        self.turns = np.array([trn.setdefault(u.turn_id, len(trn)) for u in self.utterances], dtype=np.int64)
        indptr, ids = [0], []
        for u in self.utterances:
            toks = sorted({vocab.setdefault(t, len(vocab)) for t in tokenizer(u.text)})
            ids.extend(toks)
            indptr.append(len(ids))
        self.tok_indptr = np.array(indptr, dtype=np.int64)
        self.tok_ids = np.array(ids, dtype=np.int64)
        self.ufeat = kernels.utterance_features(self.speakers)

    def __len__(self):
        return len(self.utterances)

    def pairs(self, ui, uj) -> np.ndarray:
        ui = np.asarray(ui, dtype=np.int64)
        uj = np.asarray(uj, dtype=np.int64)
        if len(ui) == 0:
            return np.zeros((0, 12 if self.dup else 9))
        return kernels.pair_features(self.speakers, self.turns, self.tok_indptr, self.tok_ids, ui, uj, self.ufeat, self.dup)

    def pools(self, pool_size: int):
        """All (uoi, candidate) index pairs; per UOI ordered self first, then by distance."""
        ui, uj = [], []
        for i in range(len(self)):
            for d in range(min(pool_size, i + 1)):
                ui.append(i)
                uj.append(i - d)
        return np.array(ui, dtype=np.int64), np.array(uj, dtype=np.int64)


def extract_features(uoi: Utterance, candidate: Utterance, scene: Scene, tokenizer=word_tokens,
                     candidate_features: bool = False) -> FeatureVector:
    utts = scene.utterances()
    ids = {u.utt_id for u in utts}
    if uoi.scene_id != scene.scene_id or candidate.scene_id != scene.scene_id or uoi.utt_id not in ids or candidate.utt_id not in ids:
        raise ScenesMismatch(f"{uoi.utt_id} and {candidate.utt_id} are not both in scene {scene.scene_id}")
    sf = SceneFeatures(utts, tokenizer, candidate_features)
    i, j = sf.index[uoi.utt_id], sf.index[candidate.utt_id]
    if j > i:
        raise ValueError("candidate must not come after the utterance of interest")
    return FeatureVector.from_array(sf.pairs([i], [j])[0])


# --------------------------------------------------------------------------
# scorer


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass
class TrainingConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    negatives_per_positive: int = 5
    alpha: float = 0.1
    pool_size: int = 6
    architecture: str = "one_hidden"
    hidden: int = 16
    batch_size: int = 32
    early_stopping: bool = True
    candidate_features: bool = False
    seed: int = 13

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.architecture not in ("linear", "one_hidden"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.pool_size < 2:
            raise ValueError("pool_size must be >= 2")


@dataclass
class ScorerModel:
    architecture: str
    params: dict[str, np.ndarray]
    mean: np.ndarray
    scale: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def standardize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def logits(self, Xs):
        p = self.params
        if self.architecture == "linear":
            return Xs @ p["w"] + p["b"][0]
        return np.tanh(Xs @ p["W0"].T) @ p["w1"]

    def score_matrix(self, X) -> np.ndarray:
        """Match scores for raw (unstandardized) feature rows."""
        return sigmoid(self.logits(self.standardize(np.atleast_2d(X))))

    # serialization
    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "feature_names": list(self.feature_names),
            "weights": {k: v.tolist() for k, v in self.params.items()},
            "standardization": {"mean": self.mean.tolist(), "scale": self.scale.tolist()},
            "config": self.config,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "ScorerModel":
        return cls(
            architecture=d["architecture"],
            params={k: np.array(v, dtype=np.float64) for k, v in d["weights"].items()},
            mean=np.array(d["standardization"]["mean"], dtype=np.float64),
            scale=np.array(d["standardization"]["scale"], dtype=np.float64),
            feature_names=tuple(d["feature_names"]),
            seed=d.get("seed", 0),
            config=d.get("config", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScorerModel":
        return cls.from_dict(json.loads(text))


def init_params(architecture: str, n_features: int, hidden: int, rng: np.random.Generator, aux: bool) -> dict:
    if architecture == "linear":
        params = {"w": np.zeros(n_features), "b": np.zeros(1)}
        if aux:
            params["wt"] = np.zeros(n_features)
        return params
    params = {
        "W0": rng.normal(0.0, 1.0 / np.sqrt(n_features), size=(hidden, n_features)),
        "w1": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden),
    }
    if aux:
        params["wt"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden)
    return params


def score(model: ScorerModel, fv) -> float:
    """Match score in (0, 1) for one feature vector already standardized with
    ``model.standardize``; use :meth:`ScorerModel.score_matrix` for raw rows."""
    x = fv.as_array() if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.float64)
    return float(sigmoid(model.logits(np.atleast_2d(x)))[0])


def _bce(logit, y):
    # softplus(s) - y*s == -y log sigmoid(s) - (1-y) log(1 - sigmoid(s))
    return np.logaddexp(0.0, logit) - y * logit


def loss_and_grad(architecture: str, params: dict, Xs, y, y_thread=None, alpha: float = 0.0):
    """Mean link BCE plus ``alpha`` times mean same-thread BCE, with gradients.

    The auxiliary head reads the hidden layer (the input itself for the
    linear scorer). With ``alpha == 0`` the auxiliary head is ignored and the
    loss is the link loss alone.
    """
    n = len(y)
    use_aux = alpha > 0 and "wt" in params
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    if architecture == "linear":
        rep = Xs
        s = rep @ params["w"] + params["b"][0]
    else:
        rep = np.tanh(Xs @ params["W0"].T)
        s = rep @ params["w1"]
    loss = float(np.mean(_bce(s, y)))
    ds = (sigmoid(s) - y) / n
    drep = None
    if architecture == "linear":
        grads["w"] = Xs.T @ ds
        grads["b"] = np.array([ds.sum()])
    else:
        grads["w1"] = rep.T @ ds
        drep = np.outer(ds, params["w1"])
    if use_aux:
        st = rep @ params["wt"]
        loss = loss + alpha * float(np.mean(_bce(st, y_thread)))
        dst = alpha * (sigmoid(st) - y_thread) / n
        grads["wt"] = rep.T @ dst
        if drep is not None:
            drep = drep + np.outer(dst, params["wt"])
    if drep is not None:
        grads["W0"] = (drep * (1.0 - rep**2)).T @ Xs
    return loss, grads


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def fit_standardization(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population stdev; zero-variance columns keep scale 1."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    return mean, scale


def fit_arrays(Xs, y, cfg: TrainingConfig, y_thread=None, params=None, epochs=None):
    """Mini-batch Adam on fixed, already standardized arrays. Returns (params, losses)."""
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(cfg.architecture, Xs.shape[1], cfg.hidden, rng, aux=cfg.alpha > 0 and y_thread is not None)
    opt = Adam(params, cfg.learning_rate)
    losses = []
    yt = y_thread if y_thread is not None else np.zeros_like(y)
    for _ in range(epochs or cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            _, g = loss_and_grad(cfg.architecture, params, Xs[b], y[b], yt[b], cfg.alpha)
            opt.step(params, g)
        losses.append(loss_and_grad(cfg.architecture, params, Xs, y, yt, cfg.alpha)[0])
    return params, losses


# --------------------------------------------------------------------------
# training on scenes


@dataclass
class _Prepared:
    links: GoldLinks
    sf: SceneFeatures
    parent_idx: np.ndarray
    thread_idx: np.ndarray


def _prepare(dataset, cfg, tokenizer) -> list[_Prepared]:
    out = []
    for links, scene in dataset:
        utts = scene.utterances()
        if len(links) == 0:
            raise NoPositives(f"scene {links.scene_id} has no links")
        if [u.utt_id for u in utts] != list(links.parent):
            raise ScenesMismatch(f"gold links for {links.scene_id} do not cover the scene's utterances in order")
        sf = SceneFeatures(utts, tokenizer, cfg.candidate_features)
        parent_idx = np.array([sf.index[links.parent[u.utt_id]] for u in utts], dtype=np.int64)
        part = links_to_partition(links)
        labels = {lab: k for k, lab in enumerate(dict.fromkeys(part.assignment.values()))}
        thread_idx = np.array([labels[part.assignment[u.utt_id]] for u in utts], dtype=np.int64)
        out.append(_Prepared(links, sf, parent_idx, thread_idx))
    return out


def sample_pairs(prep: _Prepared, k: int, rng: np.random.Generator):
    """Gold pair plus up to ``k`` negatives per UOI.

    Negatives come uniformly from earlier utterances of the scene and, for
    UOIs that are not thread starts, the self candidate.
    Returns (ui, uj, y_link, y_thread).
    """
    ui, uj, y, yt = [], [], [], []
    for i in range(len(prep.sf)):
        p = int(prep.parent_idx[i])
        ui.append(i)
        uj.append(p)
        y.append(1.0)
        yt.append(1.0)
        support = [j for j in range(i) if j != p]
        if p != i:
            support.append(i)
        if support:
            take = rng.choice(len(support), size=min(k, len(support)), replace=False)
            for t in np.sort(take):
                j = support[t]
                ui.append(i)
                uj.append(j)
                y.append(0.0)
                yt.append(1.0 if prep.thread_idx[i] == prep.thread_idx[j] else 0.0)
    return np.array(ui), np.array(uj), np.array(y), np.array(yt)


def _predict_prepared(model: ScorerModel, sf: SceneFeatures, pool_size: int) -> list[int]:
    ui, uj = sf.pools(pool_size)
    if len(ui) == 0:
        return []
    s = model.logits(model.standardize(sf.pairs(ui, uj)))
    parents = []
    start = 0
    for i in range(len(sf)):
        width = min(pool_size, i + 1)
        block = s[start : start + width]
        # first maximum: self, then nearest candidate
        parents.append(i - int(np.argmax(block)))
        start += width
    return parents


def train(dataset: Sequence[tuple[GoldLinks, Scene]], cfg: TrainingConfig | None = None,
          dev: Sequence[tuple[GoldLinks, Scene]] | None = None, tokenizer=word_tokens,
          log_fn: Callable[[dict], None] | None = None) -> ScorerModel:
    """Train a scorer; returns the epoch with the best dev link accuracy."""
    cfg = cfg or TrainingConfig()
    if not dataset:
        raise EmptyDataset("no training scenes")
    rng = np.random.default_rng(cfg.seed)
    prepared = _prepare(dataset, cfg, tokenizer)
    dev_prepared = _prepare(dev, cfg, tokenizer) if dev else []

    pool_X = np.vstack([p.sf.pairs(*p.sf.pools(cfg.pool_size)) for p in prepared])
    mean, scale = fit_standardization(pool_X)
    names = FEATURE_NAMES + (CANDIDATE_FEATURE_NAMES if cfg.candidate_features else ())
    params = init_params(cfg.architecture, len(names), cfg.hidden, rng, aux=cfg.alpha > 0)
    opt = Adam(params, cfg.learning_rate)
    model = ScorerModel(cfg.architecture, params, mean, scale, names, cfg.seed, asdict(cfg))

    best, best_acc = None, -1.0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        Xs_parts, y_parts, yt_parts = [], [], []
        for p in prepared:
            ui, uj, y, yt = sample_pairs(p, cfg.negatives_per_positive, rng)
            Xs_parts.append(model.standardize(p.sf.pairs(ui, uj)))
            y_parts.append(y)
            yt_parts.append(yt)
        Xs, y, yt = np.vstack(Xs_parts), np.concatenate(y_parts), np.concatenate(yt_parts)
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            loss, g = loss_and_grad(cfg.architecture, params, Xs[b], y[b], yt[b], cfg.alpha)
            total += loss * len(b)
            opt.step(params, g)
        row = {"epoch": epoch, "loss": total / len(y)}
        if dev_prepared:
            correct = sum(
                int(np.sum(np.array(_predict_prepared(model, d.sf, cfg.pool_size)) == d.parent_idx)) for d in dev_prepared
            )
            row["dev_link_accuracy"] = 100.0 * correct / sum(len(d.sf) for d in dev_prepared)
        history.append(row)
        log.info("epoch %(epoch)d loss %(loss).5f", row)
        if log_fn:
            log_fn(row)
        acc = row.get("dev_link_accuracy", 0.0)
        if not cfg.early_stopping or not dev_prepared or acc > best_acc:
            best_acc = acc
            best = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
    model.params = best
    model.config = {**asdict(cfg), "best_epoch": best_epoch, "history": history}
    return model


# --------------------------------------------------------------------------
# prediction


def predict_links(model: ScorerModel, scene: Scene | Sequence[Utterance], C: int = 6, tokenizer=word_tokens,
                  scene_id: str | None = None) -> GoldLinks:
    """Parent = argmax score over the candidate pool (self plus C-1 predecessors)."""
    if C < 2:
        raise ValueError("pool size C must be >= 2")
    utts = scene.utterances() if isinstance(scene, Scene) else list(scene)
    sid = scene_id or (scene.scene_id if isinstance(scene, Scene) else (utts[0].scene_id if utts else ""))
    dup = len(model.feature_names) > len(FEATURE_NAMES)
    sf = SceneFeatures(utts, tokenizer, dup)
    parents = _predict_prepared(model, sf, C)
    return GoldLinks(sid, {u.utt_id: utts[p].utt_id for u, p in zip(utts, parents)})


def predict_previous_baseline(scene: Scene | Sequence[Utterance], scene_id: str | None = None) -> GoldLinks:
    utts = scene.utterances() if isinstance(scene, Scene) else list(scene)
    sid = scene_id or (scene.scene_id if isinstance(scene, Scene) else (utts[0].scene_id if utts else ""))
    parent = {}
    for k, u in enumerate(utts):
        parent[u.utt_id] = utts[k - 1].utt_id if k else u.utt_id
    return GoldLinks(sid, parent)
