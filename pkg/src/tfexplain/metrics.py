"""Explanation quality: faithfulness, robustness to noise, rank-biased
overlap and areas under the precision/recall curves."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .signal import istft_batch, make_window, stft_batch

FAITHFULNESS_MODES = ("cumulative", "single")
DEPTHS = (1, 2, 4, 6, 8)
CSV_COLUMNS = (["dataset", "classifier", "method", "domain"]
               + [f"faithfulness@{k}" for k in DEPTHS] + ["robustness"]
               + [f"rbo@{k}" for k in DEPTHS] + ["aup", "aur"])


def _batch(samples, length):
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != length:
        raise InvalidArgumentError(f"samples must be an (n, {length}) array")
    return X


def faithfulness_at_k(model, samples, expl, k, mode="cumulative", fill=None):
    """Mean drop in target probability after removing the top ``k`` features.

    ``cumulative`` removes all ``k`` at once; ``single`` removes each of
    them alone and averages the ``k`` drops.  Removal uses the space's
    baseline (``fill`` defaults to the one the explanation was built with).
    """
    if not 1 <= k <= len(expl.ranked):
        raise InvalidArgumentError(f"k={k} outside [1, {len(expl.ranked)}]")
    if mode not in FAITHFULNESS_MODES:
        raise InvalidArgumentError(f"unknown faithfulness mode {mode!r}")
    space = expl.space
    if fill is None:
        fill = expl.config.get("fill", "rbp") if space.kind == "tf" else "zero"
    X = _batch(samples, space.length)
    top = np.asarray(expl.top(k), dtype=int)
    masks = top[None, :] if mode == "cumulative" else top[:, None]
    c = expl.target_class
    p_orig = model.predict_proba(X)[:, c]
    drops = []
    for x, p0 in zip(X, p_orig):
        perturbed = space.decompose(x, fill).deleted(masks)
        drops.append(p0 - model.predict_proba(perturbed)[:, c].mean())
    return float(np.mean(drops))


def add_noise(samples, domain, sigma, rng, window_size=16, hop=8):
    """Gaussian noise scaled by each sample's own spread.

    In time the noise goes on the raw samples; in the time-frequency
    domain it goes on the STFT magnitudes (clipped at zero, phase kept)
    before resynthesis.
    """
    X = np.asarray(samples, dtype=float)
    if domain == "time":
        scale = sigma * X.std(axis=1, keepdims=True)
        return X + scale * rng.standard_normal(X.shape)
    if domain == "tf":
        window = make_window("hann", window_size)
        S = stft_batch(X, window, hop)
        mag, phase = np.abs(S), np.angle(S)
        scale = sigma * mag.reshape(len(X), -1).std(axis=1)[:, None, None]
        mag = np.maximum(mag + scale * rng.standard_normal(mag.shape), 0.0)
        return istft_batch(mag * np.exp(1j * phase), window, hop, X.shape[1])
    raise InvalidArgumentError(f"unknown domain {domain!r}")


def robustness(explain_fn, model, samples, domain, sigma=0.1, top_m=8, trials=5, seed=0,
               window_size=16, hop=8):
    """Mean overlap of the top ``top_m`` features before and after noise.

    ``explain_fn(model, samples)`` must be deterministic for fixed inputs
    (its own seed fixed), so only the noise differs between runs.
    """
    if sigma < 0:
        raise InvalidArgumentError("sigma must be >= 0")
    if top_m < 1 or trials < 1:
        raise InvalidArgumentError("top_m and trials must be positive")
    if sigma == 0:
        return 1.0
    X = np.asarray(samples, dtype=float)
    before = set(explain_fn(model, X).top(top_m))
    m = min(top_m, len(before)) or 1
    scores = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        noisy = add_noise(X, domain, sigma, rng, window_size, hop)
        after = set(explain_fn(model, noisy).top(top_m))
        scores.append(len(before & after) / m)
    return float(np.mean(scores))


def rbo(list1, list2, d, lam=0.9):
    """Truncated rank-biased overlap at depth ``d`` (no extrapolation term).

    Lists shorter than ``d`` are used as they are.
    """
    if not 0.0 < lam < 1.0:
        raise InvalidArgumentError("lambda must lie in (0, 1)")
    if d < 1:
        raise InvalidArgumentError("depth must be >= 1")
    list1, list2 = list(list1), list(list2)
    seen1, seen2 = set(), set()
    total = 0.0
    for k in range(1, d + 1):
        if k <= len(list1):
            seen1.add(list1[k - 1])
        if k <= len(list2):
            seen2.add(list2[k - 1])
        total += lam ** (k - 1) * len(seen1 & seen2) / k
    return (1.0 - lam) * total


def area_under_curves(predicted, truth, depth=None):
    """``(AUP, AUR)``: means of precision@d and recall@d for ``d = 1..depth``.

    ``depth`` defaults to ``min(len(truth), 8)``.
    """
    truth_set = truth.cell_set if hasattr(truth, "cell_set") else set(truth)
    if not truth_set:
        raise InvalidArgumentError("ground truth is empty")
    if depth is None:
        depth = min(len(truth_set), 8)
    if depth < 1:
        raise InvalidArgumentError("depth must be >= 1")
    predicted = list(predicted)
    hits, precision, recall = 0, [], []
    for d in range(1, depth + 1):
        if d <= len(predicted) and predicted[d - 1] in truth_set:
            hits += 1
        precision.append(hits / d)
        recall.append(hits / len(truth_set))
    return float(np.mean(precision)), float(np.mean(recall))


@dataclass
class MetricReport:
    """One metric for one method: per-class values for every classifier.

    ``mean`` and ``std`` are taken across classifiers of their class
    averages (population standard deviation).
    """

    metric: str
    values: dict
    config: dict = field(default_factory=dict)

    def per_classifier(self):
        return {name: float(np.mean(list(per_class.values())))
                for name, per_class in self.values.items()}

    @property
    def mean(self):
        return float(np.mean(list(self.per_classifier().values())))

    @property
    def std(self):
        return float(np.std(list(self.per_classifier().values())))

    def to_dict(self):
        return {"metric": self.metric,
                "values": {n: {str(c): v for c, v in pc.items()}
                           for n, pc in self.values.items()},
                "per_classifier": self.per_classifier(),
                "mean": self.mean, "std": self.std, "config": self.config}


def _cell(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_metrics_csv(rows, path):
    """One row per dataset x classifier x method x domain; missing metrics are blank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in CSV_COLUMNS])


def read_metrics_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_metrics_json(rows, reports, path):
    doc = {"rows": [{col: row.get(col) for col in CSV_COLUMNS} for row in rows],
           "reports": [r.to_dict() for r in reports]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
