import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenethreads.annotation import GoldLinks
from scenethreads.errors import EmptyDataset, NoPositives, ScenesMismatch
from scenethreads.linkmodel import (FEATURE_NAMES, IS_SELF, FeatureVector, SceneFeatures, ScorerModel, TrainingConfig,
                                    WordPieceTokenizer, _prepare, extract_features, fit_standardization, init_params,
                                    loss_and_grad, predict_links, predict_previous_baseline, sample_pairs, score, sigmoid,
                                    train, word_tokens)
from scenethreads.metrics import link_accuracy
from scenethreads.screenplay import RawDocument, Scene, Utterance, parse_screenplay
from scenethreads.threads import validate_links
from synth import _elements, random_corpus, random_scene

# --------------------------------------------------------------------------
# features


def oracle(utts, i, j):
    """Features straight from their definitions, one utterance at a time."""
    ui, uj = utts[i], utts[j]
    n = len(utts)
    prev_same = [k for k in range(i) if utts[k].speaker == ui.speaker]
    since = prev_same[-1] + 1 if prev_same else 0
    f1 = len({utts[k].speaker for k in range(since, i)} - {ui.speaker})
    f2 = i - prev_same[-1] if prev_same else n
    f3 = float(i + 1 < n and utts[i + 1].speaker == ui.speaker)
    f4 = len(set(word_tokens(ui.text)) & set(word_tokens(uj.text)))
    f5 = abs(i - j)
    f6 = float(any(utts[k].speaker in (ui.speaker, uj.speaker) for k in range(min(i, j) + 1, max(i, j))))
    f7 = float(ui.turn_id == uj.turn_id)
    f8 = float(ui.speaker == uj.speaker)
    return [f1, f2, f3, f4, f5, f6, f7, f8, float(i == j)]


@pytest.fixture
def kitchen(sheldon_text):
    return parse_screenplay(RawDocument("ys", sheldon_text))[0]


def test_kitchen_scene_hand_values(kitchen):
    u = {x.utt_id: x for x in kitchen.utterances()}
    fv = extract_features(u["D13.1"], u["D12.1"], kitchen)
    # Mary last spoke three utterances ago; Georgie and Georgie Sr. spoke since
    assert fv.as_array().tolist() == [2, 3, 1, 0, 1, 0, 0, 0, 0]
    fv = extract_features(u["D13.1"], u["D10.1"], kitchen)
    assert fv.common_tokens == 2  # "s" and "he"
    assert (fv.distance, fv.intervening_same_speakers, fv.same_speaker) == (3, 0, 1)
    # first utterance of a speaker: f2 is the scene length
    assert extract_features(u["D1.1"], u["D1.1"], kitchen).utterances_since_speaker_last_spoke == 17


def test_features_match_oracle_on_kitchen(kitchen):
    utts = kitchen.utterances()
    sf = SceneFeatures(utts)
    ui, uj = np.tril_indices(len(utts))
    got = sf.pairs(ui, uj)
    want = np.array([oracle(utts, i, j) for i, j in zip(ui, uj)])
    assert np.array_equal(got, want)


def mini_scene(texts, speakers=None, turns=None):
    speakers = speakers or ["A", "B"] * len(texts)
    turns = turns or [f"L{k}" for k in range(len(texts))]
    utts = [Utterance(f"D{k + 1}.1", speakers[k], turns[k], "S1", t, k, f"D{k + 1}") for k, t in enumerate(texts)]
    return Scene("S1", "", _elements(utts)), utts


def test_small_examples():
    scene, u = mini_scene(["the cat sat", "x", "y", "the dog sat", "z", "w"])
    assert extract_features(u[5], u[3], scene).distance == 2
    assert extract_features(u[3], u[0], scene).common_tokens == 2
    fv = extract_features(u[4], u[4], scene)
    assert (fv.is_self, fv.distance, fv.same_turn, fv.same_speaker) == (1, 0, 1, 1)


def test_feature_errors(kitchen):
    utts = kitchen.utterances()
    other = Utterance("D99.1", "X", "L99", "S2", "hi", 0, "D99")
    with pytest.raises(ScenesMismatch):
        extract_features(other, utts[0], kitchen)
    with pytest.raises(ValueError):
        extract_features(utts[0], utts[3], kitchen)


@settings(max_examples=60)
@given(st.integers(0, 10_000))
def test_feature_invariants_and_oracle(seed):
    rng = np.random.default_rng(seed)
    scene, _ = random_scene(rng, int(rng.integers(1, 20)))
    utts = scene.utterances()
    sf = SceneFeatures(utts, candidate_features=True)
    ui, uj = np.tril_indices(len(utts))
    X = sf.pairs(ui, uj)
    assert X.shape[1] == 12
    assert (X >= 0).all()
    assert np.array_equal(X[:, 4] == 0, X[:, IS_SELF] == 1)
    assert (X[X[:, 6] == 1, 7] == 1).all()
    want = np.array([oracle(utts, i, j) + oracle(utts, j, j)[:3] for i, j in zip(ui, uj)])
    assert np.array_equal(X, want)


def test_feature_vector_round_trip():
    row = np.arange(12, dtype=float)
    assert np.array_equal(FeatureVector.from_array(row).as_array(), row)
    assert FeatureVector.from_array(row[:9]).candidate is None


def test_pool_order_self_first():
    scene, _ = mini_scene(list("abcdefgh"))
    ui, uj = SceneFeatures(scene.utterances()).pools(6)
    assert uj[ui == 7].tolist() == [7, 6, 5, 4, 3, 2]
    assert uj[ui == 1].tolist() == [1, 0]


def test_wordpiece():
    tok = WordPieceTokenizer(["un", "##aff", "##able", "the", "cat", "!"])
    assert tok("The unaffable cat!") == ["the", "un", "##aff", "##able", "cat", "!"]
    assert tok("dog") == ["[UNK]"]


# --------------------------------------------------------------------------
# scorer


def model_with(architecture, params, n=9):
    return ScorerModel(architecture, params, np.zeros(n), np.ones(n))


def test_zero_weights_score_half():
    m = model_with("linear", {"w": np.zeros(9), "b": np.zeros(1)})
    assert score(m, np.random.default_rng(0).normal(size=9)) == 0.5
    rng = np.random.default_rng(1)
    m = model_with("one_hidden", {"W0": rng.normal(size=(4, 9)), "w1": np.zeros(4)})
    assert score(m, rng.normal(size=9)) == 0.5


def test_hand_set_weights():
    m = model_with("linear", {"w": np.array([0.5, -2.0]), "b": np.array([0.25])}, n=2)
    assert score(m, [2.0, 1.0]) == pytest.approx(1 / (1 + np.exp(-(1.0 - 2.0 + 0.25))), abs=1e-15)
    W0 = np.array([[1.0, 0.0], [0.5, -1.0]])
    m = model_with("one_hidden", {"W0": W0, "w1": np.array([2.0, -1.0])}, n=2)
    h = [np.tanh(1.0), np.tanh(0.5 * 1.0 - 1.0 * 3.0)]
    assert score(m, [1.0, 3.0]) == pytest.approx(1 / (1 + np.exp(-(2 * h[0] - h[1]))), abs=1e-15)


def test_score_standardizes_only_in_score_matrix():
    m = ScorerModel("linear", {"w": np.array([1.0]), "b": np.zeros(1)}, np.array([10.0]), np.array([2.0]), ("x",))
    assert m.score_matrix([[12.0]])[0] == pytest.approx(sigmoid(1.0))
    assert score(m, [1.0]) == pytest.approx(sigmoid(1.0))


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9), st.integers(0, 8), st.floats(0.01, 2))
def test_score_monotone_in_weight(x, k, step):
    w = np.linspace(-1, 1, 9)
    lo = score(model_with("linear", {"w": w, "b": np.zeros(1)}), x)
    w2 = w.copy()
    w2[k] += step
    hi = score(model_with("linear", {"w": w2, "b": np.zeros(1)}), x)
    assert (hi >= lo) if x[k] >= 0 else (hi <= lo)


def numeric_grad(architecture, params, Xs, y, yt, alpha, eps=1e-6):
    out = {}
    for k, v in params.items():
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + eps
            lp = loss_and_grad(architecture, params, Xs, y, yt, alpha)[0]
            v[idx] = old - eps
            lm = loss_and_grad(architecture, params, Xs, y, yt, alpha)[0]
            v[idx] = old
            g[idx] = (lp - lm) / (2 * eps)
        out[k] = g
    return out


@pytest.mark.parametrize("architecture", ["linear", "one_hidden"])
@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.7])
def test_gradient_check(architecture, alpha):
    rng = np.random.default_rng(4)
    Xs = rng.normal(size=(20, 9))
    y = (rng.random(20) < 0.3).astype(float)
    yt = (rng.random(20) < 0.5).astype(float)
    params = init_params(architecture, 9, 5, rng, aux=True)
    for v in params.values():
        v += rng.normal(scale=0.3, size=v.shape)
    _, grads = loss_and_grad(architecture, params, Xs, y, yt, alpha)
    num = numeric_grad(architecture, params, Xs, y, yt, alpha)
    for k in params:
        if alpha == 0 and k == "wt":
            assert not grads[k].any()
            continue
        np.testing.assert_allclose(grads[k], num[k], rtol=1e-6, atol=1e-9)


def test_alpha_zero_is_link_loss_only():
    rng = np.random.default_rng(0)
    Xs, y = rng.normal(size=(10, 9)), rng.integers(0, 2, 10).astype(float)
    p = init_params("one_hidden", 9, 4, rng, aux=True)
    s = np.tanh(Xs @ p["W0"].T) @ p["w1"]
    expected = np.mean(-y * np.log(sigmoid(s)) - (1 - y) * np.log(1 - sigmoid(s)))
    assert loss_and_grad("one_hidden", p, Xs, y, np.ones(10), 0.0)[0] == pytest.approx(expected, rel=1e-12)


def test_standardization_zero_variance():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    mean, scale = fit_standardization(X)
    assert mean.tolist() == [2.0, 5.0]
    assert scale.tolist() == [1.0, 1.0]


# --------------------------------------------------------------------------
# training and prediction


def test_sample_pairs():
    corpus = random_corpus(2, 4, 8, 15)
    cfg = TrainingConfig()
    prep = _prepare(corpus, cfg, word_tokens)[0]
    ui, uj, y, yt = sample_pairs(prep, 3, np.random.default_rng(0))
    for i in range(len(prep.sf)):
        rows = np.flatnonzero(ui == i)
        p = prep.parent_idx[i]
        assert y[rows[0]] == 1 and uj[rows[0]] == p
        neg = uj[rows[1:]]
        assert len(set(neg.tolist())) == len(neg)
        assert p not in neg
        # support: earlier utterances minus the parent, plus self for non-starts; i candidates either way
        assert len(neg) == min(3, i)
        assert (neg <= i).all()
        if p == i:
            assert i not in neg


def test_training_is_reproducible():
    corpus = random_corpus(11, 20)
    cfg = TrainingConfig(epochs=3, seed=5)
    a = train(corpus, cfg, dev=corpus[:5]).to_json()
    b = train(corpus, cfg, dev=corpus[:5]).to_json()
    assert a == b
    c = train(corpus, TrainingConfig(epochs=3, seed=6), dev=corpus[:5]).to_json()
    assert c != a


def test_training_beats_previous_baseline():
    train_set, test_set = random_corpus(1, 60), random_corpus(3, 20)
    model = train(train_set, TrainingConfig(epochs=5), dev=random_corpus(2, 10))
    def acc(pred):
        hits = sum(link_accuracy(pred(s), g) * len(g) for g, s in test_set)
        return hits / sum(len(g) for g, _ in test_set)
    model_acc = acc(lambda s: predict_links(model, s))
    base_acc = acc(predict_previous_baseline)
    assert model_acc > base_acc + 5


def test_early_stopping_keeps_best_epoch():
    corpus = random_corpus(8, 15)
    model = train(corpus, TrainingConfig(epochs=6, learning_rate=0.05), dev=random_corpus(9, 5))
    hist = [r["dev_link_accuracy"] for r in model.config["history"]]
    assert model.config["best_epoch"] == 1 + int(np.argmax(hist))
    no_es = train(corpus, TrainingConfig(epochs=6, learning_rate=0.05, early_stopping=False), dev=random_corpus(9, 5))
    assert no_es.config["best_epoch"] == 6


def test_alpha_zero_has_no_aux_head():
    model = train(random_corpus(1, 5), TrainingConfig(epochs=1, alpha=0.0))
    assert "wt" not in model.params
    assert "wt" in train(random_corpus(1, 5), TrainingConfig(epochs=1)).params


def test_linear_and_candidate_features():
    corpus = random_corpus(4, 10)
    model = train(corpus, TrainingConfig(epochs=2, architecture="linear", candidate_features=True))
    assert len(model.feature_names) == 12
    links = predict_links(model, corpus[0][1])
    assert not validate_links(links, corpus[0][1])


def test_model_json_round_trip():
    corpus = random_corpus(4, 10)
    model = train(corpus, TrainingConfig(epochs=2))
    back = ScorerModel.from_json(model.to_json())
    assert back.to_json() == model.to_json()
    assert predict_links(back, corpus[1][1]).parent == predict_links(model, corpus[1][1]).parent
    assert json.loads(model.to_json())["feature_names"] == list(FEATURE_NAMES)


def test_training_errors():
    with pytest.raises(EmptyDataset):
        train([])
    g, s = random_corpus(1, 1)[0]
    with pytest.raises(ScenesMismatch):
        train([(GoldLinks("S1", dict(list(g.parent.items())[1:])), s)])
    with pytest.raises(NoPositives):
        train([(GoldLinks("S1", {}), s)])
    for bad in [dict(epochs=0), dict(alpha=-1), dict(negatives_per_positive=0), dict(architecture="deep")]:
        with pytest.raises(ValueError):
            TrainingConfig(**bad)


def test_ties_prefer_self():
    scene = random_corpus(1, 1)[0][1]
    zero = model_with("linear", {"w": np.zeros(9), "b": np.zeros(1)})
    links = predict_links(zero, scene)
    assert all(u == p for u, p in links.parent.items())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.sampled_from(["linear", "one_hidden"]))
def test_predictions_are_valid_forests(seed, C, architecture):
    rng = np.random.default_rng(seed)
    scene, _ = random_scene(rng, int(rng.integers(1, 30)))
    params = init_params(architecture, 9, 6, rng, aux=False)
    for v in params.values():
        v += rng.normal(size=v.shape)
    model = ScorerModel(architecture, params, rng.normal(size=9), rng.random(9) + 0.5)
    links = predict_links(model, scene, C)
    assert validate_links(links, scene) == []
    pos = {u.utt_id: u.position for u in scene.utterances()}
    assert all(0 <= pos[u] - pos[p] < C for u, p in links.parent.items())


def test_previous_baseline():
    scene = random_corpus(1, 1)[0][1]
    utts = scene.utterances()
    links = predict_previous_baseline(scene)
    assert links.parent[utts[0].utt_id] == utts[0].utt_id
    assert all(links.parent[b.utt_id] == a.utt_id for a, b in zip(utts, utts[1:]))
