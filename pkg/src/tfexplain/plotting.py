"""SVG figures: the masking view of one explanation and metric-vs-k summaries."""

import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import InvalidArgumentError  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
SHADE_FRACTION = 0.05

STYLE = {
    "font.size": 9,
    "font.family": "sans-serif",
    "axes.linewidth": 0.8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
    "legend.fontsize": 8,
    "svg.hashsalt": "tfexplain",
    "svg.fonttype": "none",
}
COLORS = {"original": "#1f4e79", "masked": "#c0392b", "shade": "#f5b041"}


def _figure(width=6.0, height=None):
    return plt.figure(figsize=(width, height or width * GOLDEN))


def _save(fig, path):
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)


def _spans(flags):
    """Half-open ``(start, end)`` runs where ``flags`` is true."""
    edges = np.diff(np.concatenate([[0], flags.astype(int), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


@dataclass
class ExplanationPlot:
    path: str
    original: np.ndarray
    masked: np.ndarray
    shaded: np.ndarray
    spans: list
    prob_before: float
    prob_after: float


def masked_top1(sample, expl, fill=None):
    """The sample with only the top-ranked feature removed."""
    if not expl.ranked:
        raise InvalidArgumentError("explanation is empty")
    space = expl.space
    if fill is None:
        fill = expl.config.get("fill", "rbp") if space.kind == "tf" else "zero"
    x = np.asarray(sample, dtype=float)
    return space.decompose(x, fill).deleted([[expl.features[0]]])[0]


def render_explanation_plot(sample, expl, model, out, fill=None):
    """Original vs. top-1-masked trace with the changed region shaded."""
    x = np.asarray(sample, dtype=float)
    masked = masked_top1(x, expl, fill)
    c = expl.target_class
    probs = model.predict_proba(np.vstack([x, masked]))[:, c]
    span = float(x.max() - x.min())
    shaded = np.abs(masked - x) > SHADE_FRACTION * span
    runs = _spans(shaded)
    fid = expl.space.feature_id(expl.features[0])

    with plt.rc_context(STYLE):
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        n = np.arange(x.size)
        for a, b in runs:
            ax.axvspan(a - 0.5, b - 0.5, color=COLORS["shade"], alpha=0.35, lw=0)
        ax.plot(n, x, color=COLORS["original"], label="original")
        ax.plot(n, masked, color=COLORS["masked"], label=f"top-1 {fid} masked", alpha=0.85)
        ax.set_xlabel("sample")
        ax.set_ylabel("amplitude")
        ax.set_title(f"{expl.method}, class {c}")
        ax.text(0.99, 0.02, f"P(class {c}): {probs[0]:.3f} -> {probs[1]:.3f}",
                transform=ax.transAxes, ha="right", va="bottom")
        ax.legend(loc="upper right")
        _save(fig, out)
    return ExplanationPlot(str(out), x, masked, shaded, runs, float(probs[0]),
                           float(probs[1]))


def render_metric_curves(curves, metric, out, depths=(1, 2, 4, 6, 8)):
    """One line per method of ``metric@k`` against ``k``.

    ``curves`` maps a label to a sequence of values aligned with ``depths``;
    missing values (NaN) are skipped.
    """
    if not curves:
        raise InvalidArgumentError("nothing to plot")
    with plt.rc_context(STYLE):
        fig = _figure(4.5)
        ax = fig.add_subplot(1, 1, 1)
        for label in sorted(curves):
            ys = np.asarray(curves[label], dtype=float)
            ax.plot(depths, ys, marker="o", ms=3, label=label)
        ax.set_xticks(list(depths))
        ax.set_xlabel("k")
        ax.set_ylabel(metric)
        ax.legend(loc="best")
        _save(fig, out)
    return str(out)
