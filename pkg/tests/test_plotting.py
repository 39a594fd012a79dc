import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import linear_model
from tfexplain.classifier import band_energy_classifier
from tfexplain.dataset import SynthConfig, class_templates, ground_truth_ranking, synthetic_regions
from tfexplain.errors import InvalidArgumentError
from tfexplain.explainers import Explanation
from tfexplain.perturbation import TimeFrequencySpace, TimeSegmentSpace
from tfexplain.plotting import masked_top1, render_explanation_plot, render_metric_curves
from tfexplain.signal import frame_span

CFG = SynthConfig()


@pytest.fixture(scope="module")
def rule():
    return band_energy_classifier(synthetic_regions(CFG), 16, 8, CFG.length)


def test_zero_contribution_leaves_traces_identical(tmp_path):
    L = 32
    x = np.concatenate([np.zeros(16), np.ones(16)])
    model = linear_model(np.full(L, 0.01), L, bias=0.3)
    expl = Explanation("deletion", 1, TimeSegmentSpace(L, 16), [(0, 0.0), (1, -0.1)])
    plot = render_explanation_plot(x, expl, model, tmp_path / "z.svg")
    assert np.array_equal(plot.masked, plot.original)
    assert plot.spans == [] and not plot.shaded.any()
    assert plot.prob_before == plot.prob_after


def test_shading_sits_inside_the_removed_cell(tmp_path, rule):
    t = class_templates(CFG)[0]
    space = TimeFrequencySpace(CFG.length)
    m, k = ground_truth_ranking(t).ranked_cells[0]
    expl = Explanation("deletion", 0, space, [(space.feature_index((m, k)), -0.5)],
                       {"fill": "rbp"})
    plot = render_explanation_plot(t, expl, rule, tmp_path / "c.svg")
    lo, hi = frame_span(m, 8, 16)
    assert plot.spans
    for a, b in plot.spans:
        assert max(lo, 0) <= a and b <= hi
        # the removed cell lies in one of class 0's active segments
        assert b <= 128 or a >= 256
    assert plot.prob_after <= plot.prob_before


def test_masked_top1_matches_decomposition(rng):
    x = rng.standard_normal(64)
    space = TimeFrequencySpace(64)
    expl = Explanation("combined", 0, space, [(20, 1.0)], {"fill": "zero"})
    ref = space.decompose(x, "zero").deleted([[20]])[0]
    assert np.array_equal(masked_top1(x, expl), ref)
    with pytest.raises(InvalidArgumentError):
        masked_top1(x, Explanation("combined", 0, space, []))


def test_svgs_parse_and_are_reproducible(tmp_path, rule):
    t = class_templates(CFG)[2]
    space = TimeFrequencySpace(CFG.length)
    expl = Explanation("combined", 2, space, [(space.feature_index((20, 2)), 0.1)])
    a = render_explanation_plot(t, expl, rule, tmp_path / "a.svg").path
    b = render_explanation_plot(t, expl, rule, tmp_path / "b.svg").path
    root = ET.parse(a).getroot()
    assert root.tag.endswith("svg")
    assert open(a, "rb").read() == open(b, "rb").read()


def test_metric_curves(tmp_path):
    curves = {"combined (tf)": [0.1, 0.2, 0.25, 0.27, 0.28],
              "rise (tf)": [0.0, np.nan, 0.1, 0.1, 0.2]}
    path = render_metric_curves(curves, "rbo@k", tmp_path / "rbo.svg")
    text = open(path, encoding="utf-8").read()
    assert "combined (tf)" in text and "rise (tf)" in text
    ET.fromstring(text)
    with pytest.raises(InvalidArgumentError):
        render_metric_curves({}, "rbo@k", tmp_path / "none.svg")
