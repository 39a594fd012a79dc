import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linear_model
from oracles import rbo_reference
from tfexplain.classifier import FunctionClassifier, band_energy_classifier
from tfexplain.dataset import SynthConfig, class_templates, ground_truth_ranking, synthetic_regions
from tfexplain.errors import InvalidArgumentError
from tfexplain.explainers import Explanation, rise_explain
from tfexplain.metrics import (
    CSV_COLUMNS,
    MetricReport,
    add_noise,
    area_under_curves,
    faithfulness_at_k,
    rbo,
    read_metrics_csv,
    robustness,
    write_metrics_csv,
    write_metrics_json,
)
from tfexplain.perturbation import TimeFrequencySpace, TimeSegmentSpace
from tfexplain.signal import istft, stft

SEG = 8


def test_rbo_examples():
    assert rbo([5], [5], 1) == pytest.approx(0.1)
    assert rbo([5], [6], 1) == 0.0
    same = list(range(8))
    assert rbo(same, same, 8) == pytest.approx(1 - 0.9 ** 8)
    assert rbo(same, same, 8) == pytest.approx(0.56953279, abs=1e-8)
    # one shared item at rank 1 only
    assert rbo([1, 2], [1, 3], 2) == pytest.approx(0.1 * (1 + 0.9 * 0.5))


def test_rbo_argument_errors():
    with pytest.raises(InvalidArgumentError):
        rbo([1], [1], 0)
    with pytest.raises(InvalidArgumentError):
        rbo([1], [1], 1, lam=1.0)


ranks = st.lists(st.integers(0, 30), min_size=1, max_size=12, unique=True)


@settings(max_examples=100, deadline=None)
@given(ranks, ranks, st.integers(1, 12), st.floats(0.05, 0.95))
def test_rbo_properties(a, b, d, lam):
    v = rbo(a, b, d, lam)
    assert v == pytest.approx(rbo(b, a, d, lam))
    assert v == pytest.approx(rbo_reference(a, b, d, lam))
    assert 0.0 <= v <= 1 - lam ** d + 1e-12
    assert rbo(a, b, d + 1, lam) >= v - 1e-15


def test_area_under_curves_by_hand():
    aup, aur = area_under_curves(["a", "b", "c"], {"a", "c"}, depth=3)
    # precision 1, 1/2, 2/3; recall 1/2, 1/2, 1
    assert aup == pytest.approx(13 / 18)
    assert aur == pytest.approx(2 / 3)


def test_area_under_curves_default_depth_and_ranking_input():
    t = class_templates(SynthConfig())[2]
    gt = ground_truth_ranking(t)
    perfect = gt.ranked_cells[:8]
    assert area_under_curves(perfect, gt) == (1.0, pytest.approx(4.5 / len(gt)))
    with pytest.raises(InvalidArgumentError):
        area_under_curves([1], set())


@settings(max_examples=60, deadline=None)
@given(ranks, st.sets(st.integers(0, 30), min_size=1), st.integers(1, 12))
def test_area_bounds_and_monotone_recall(pred, truth, depth):
    aup, aur = area_under_curves(pred, truth, depth)
    assert 0.0 <= aup <= 1.0 and 0.0 <= aur <= 1.0
    recalls = [area_under_curves(pred, truth, d)[1] * d for d in range(1, depth + 1)]
    # the running sums recover recall at each depth, which never decreases
    per_depth = np.diff([0.0] + recalls)
    assert np.all(np.diff(per_depth) >= -1e-12)


def _contributions(x, w, F):
    return np.array([x[f * SEG:(f + 1) * SEG] @ w[f * SEG:(f + 1) * SEG] for f in range(F)])


def test_faithfulness_matches_linear_closed_form(rng):
    F = 6
    L = F * SEG
    w = rng.uniform(-0.01, 0.01, L)
    X = rng.standard_normal((3, L))
    model = linear_model(w, L, bias=0.5)
    order = [4, 1, 0, 5, 2, 3]
    expl = Explanation("rise", 1, TimeSegmentSpace(L, SEG), [(f, 0.0) for f in order])
    C = np.array([_contributions(x, w, F) for x in X])
    for k in (1, 3, 6):
        top = order[:k]
        assert faithfulness_at_k(model, X, expl, k) == pytest.approx(
            C[:, top].sum(axis=1).mean(), abs=1e-12)
        assert faithfulness_at_k(model, X, expl, k, "single") == pytest.approx(
            C[:, top].mean(axis=1).mean(), abs=1e-12)


def test_constant_classifier_has_zero_faithfulness(rng):
    L = 4 * SEG
    model = FunctionClassifier(lambda X: np.tile([0.4, 0.6], (len(X), 1)), 2, L)
    expl = Explanation("rise", 1, TimeSegmentSpace(L, SEG), [(0, 1.0), (1, 0.5)])
    assert faithfulness_at_k(model, rng.standard_normal(L), expl, 2) == 0.0


def test_band_rule_faithfulness_on_true_cells():
    cfg = SynthConfig()
    rule = band_energy_classifier(synthetic_regions(cfg), 16, 8, cfg.length)
    space = TimeFrequencySpace(cfg.length)
    t = class_templates(cfg)[2]
    cells = ground_truth_ranking(t).ranked_cells[:8]
    expl = Explanation("combined", 2, space,
                       [(space.feature_index(c), 0.0) for c in cells], {"fill": "zero"})
    f1 = faithfulness_at_k(rule, t, expl, 1)
    f8 = faithfulness_at_k(rule, t, expl, 8)
    assert f8 > 0.0 and f8 >= f1


def test_faithfulness_errors(rng):
    L = 2 * SEG
    model = linear_model(np.zeros(L), L, 0.5)
    expl = Explanation("rise", 1, TimeSegmentSpace(L, SEG), [(0, 1.0)])
    with pytest.raises(InvalidArgumentError):
        faithfulness_at_k(model, np.zeros(L), expl, 2)
    with pytest.raises(InvalidArgumentError):
        faithfulness_at_k(model, np.zeros(L), expl, 1, "leave-one-in")


def test_noise_is_scaled_by_sample_spread(rng):
    X = np.vstack([np.zeros(4000), rng.standard_normal(4000) * 5])
    noisy = add_noise(X, "time", 0.1, np.random.default_rng(0))
    assert np.all(noisy[0] == 0)
    assert np.std(noisy[1] - X[1]) == pytest.approx(0.1 * X[1].std(), rel=0.05)


def test_tf_noise_perturbs_the_grid(rng):
    x = rng.standard_normal((1, 96))
    same = add_noise(x, "tf", 0.0, np.random.default_rng(0))
    assert np.allclose(same, x, atol=1e-9)
    noisy = add_noise(x, "tf", 5.0, np.random.default_rng(0))
    S0 = stft(x[0]).grid
    S1 = stft(noisy[0]).grid
    assert not np.allclose(S0, S1)
    with pytest.raises(InvalidArgumentError):
        add_noise(x, "wavelet", 0.1, np.random.default_rng(0))
    # a clipped, phase-kept grid still inverts to a finite series
    assert np.all(np.isfinite(istft(stft(noisy[0]))))


def _rank_by_energy(model, X):
    X = np.atleast_2d(X)
    space = TimeSegmentSpace(X.shape[1], SEG)
    e = (X ** 2).reshape(X.shape[0], -1, SEG).sum(axis=(0, 2))
    order = np.argsort(-e, kind="stable")
    return Explanation("rise", 0, space, [(int(f), float(e[f])) for f in order])


def test_robustness_trivial_cases(rng):
    X = rng.standard_normal((2, 6 * SEG))
    assert robustness(_rank_by_energy, None, X, "time", sigma=0.0) == 1.0
    assert robustness(_rank_by_energy, None, X, "time", sigma=0.5, top_m=6) == 1.0
    with pytest.raises(InvalidArgumentError):
        robustness(_rank_by_energy, None, X, "time", sigma=-1)


def test_robustness_falls_with_heavy_noise(trained_mlp, synth_splits):
    model, _ = trained_mlp
    test = synth_splits[2]
    X = test.of_class(0)[:3]
    space = TimeSegmentSpace(test.length, 16)

    def fn(m, S):
        return rise_explain(m, S, space, P=300, R=4, seed=0, target_class=0, fill="zero")

    light = robustness(fn, model, X, "time", sigma=1e-3, top_m=4, trials=2)
    heavy = robustness(fn, model, X, "time", sigma=1e3, top_m=4, trials=2)
    assert light == 1.0
    assert heavy < light


def test_metric_report_aggregates_over_classifiers():
    r = MetricReport("rbo@8", {"mlp": {0: 0.2, 1: 0.4}, "softmax": {0: 0.1, 1: 0.1}})
    assert r.per_classifier() == pytest.approx({"mlp": 0.3, "softmax": 0.1})
    assert r.mean == pytest.approx(0.2)
    assert r.std == pytest.approx(0.1)
    d = r.to_dict()
    assert d["values"]["mlp"]["0"] == 0.2 and d["std"] == pytest.approx(0.1)


def test_csv_schema_and_blanks(tmp_path):
    rows = [{"dataset": "synthetic", "classifier": "mlp", "method": "combined",
             "domain": "tf", "faithfulness@1": 0.1234567, "robustness": math.nan,
             "rbo@1": None, "aup": 1.0}]
    write_metrics_csv(rows, tmp_path / "m.csv")
    text = (tmp_path / "m.csv").read_text().splitlines()
    assert text[0] == ",".join(CSV_COLUMNS)
    back = read_metrics_csv(tmp_path / "m.csv")[0]
    assert back["faithfulness@1"] == "0.123457"
    assert back["robustness"] == "" and back["rbo@1"] == "" and back["aur"] == ""
    assert back["aup"] == "1.000000"
    write_metrics_json(rows, [MetricReport("aup", {"mlp": {0: 1.0}})], tmp_path / "m.json")
    assert (tmp_path / "m.json").read_text().strip().startswith("{")
