"""Perturbation explainers over a feature space.

The greedy insertion / deletion / combined search is class-level: every
iteration scores all remaining features against one shared set of random
masks, averaging the target-class probability over the whole batch of
samples.  RISE, LIME and KernelSHAP are the per-instance baselines, adapted
so that "switching a feature off" means replacing it by the space's
baseline (the RBP grid in the time-frequency space, zero in time).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, InvalidArgumentError
from .perturbation import (
    DELETION,
    INSERTION,
    sample_masks,
    space_from_dict,
)

COMBINED = "combined"
FIA_MODES = (INSERTION, DELETION, COMBINED)
METHODS = FIA_MODES + ("rise", "lime", "kernelshap")
ROW_BUDGET = 8192


@dataclass
class Explanation:
    method: str
    target_class: int
    space: object
    ranked: list
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = [f for f, _ in self.ranked]
        if len(set(idx)) != len(idx):
            raise InvalidArgumentError("ranked features contain duplicates")

    @property
    def features(self):
        return [f for f, _ in self.ranked]

    @property
    def scores(self):
        return [s for _, s in self.ranked]

    def top(self, k):
        return self.features[:k]

    def feature_ids(self, k=None):
        return [self.space.feature_id(f) for f in self.features[:k]]

    def to_dict(self):
        def fid(f):
            v = self.space.feature_id(f)
            return list(v) if isinstance(v, tuple) else v

        return {"method": self.method, "target_class": int(self.target_class),
                "space": self.space.to_dict(),
                "ranked": [{"feature": fid(f), "score": float(s)} for f, s in self.ranked],
                "config": self.config, "seed": self.config.get("seed")}

    @classmethod
    def from_dict(cls, doc):
        space = space_from_dict(doc["space"])

        def index(v):
            return space.feature_index(tuple(v) if isinstance(v, list) else v)

        ranked = [(index(r["feature"]), float(r["score"])) for r in doc["ranked"]]
        return cls(doc["method"], int(doc["target_class"]), space, ranked,
                   dict(doc.get("config", {})))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FiaConfig:
    P: int = 2000
    R: int = 10
    k: int = 8
    alpha: float = 0.2
    seed: int = 0
    fill: str = "rbp"
    # select by |alpha*ins - (1-alpha)*del| instead of the signed difference
    combined_abs: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError("alpha must lie in [0, 1]")
        if min(self.P, self.R, self.k) < 1:
            raise InvalidArgumentError("P, R and k must be positive")


def _as_samples(samples, space):
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("need a non-empty (n, L) batch of samples")
    if X.shape[1] != space.length:
        raise InvalidArgumentError(
            f"samples have length {X.shape[1]}, feature space expects {space.length}")
    return X


def _target_prob(model, signals, target):
    return model.predict_proba(signals)[:, target]


def batch_mean_prob(model, decomps, build, target):
    """Target-class probability of ``build(decomp)`` averaged over samples.

    ``build`` returns a ``(P, L)`` stack per sample; classifier calls are
    grouped across samples up to ``ROW_BUDGET`` rows.
    """
    total, pending, rows = None, [], 0

    def flush():
        nonlocal total, pending, rows
        if not pending:
            return
        probs = _target_prob(model, np.concatenate(pending), target)
        acc = probs.reshape(len(pending), -1).sum(axis=0)
        total = acc if total is None else total + acc
        pending, rows = [], 0

    for d in decomps:
        stack = build(d)
        pending.append(stack)
        rows += stack.shape[0]
        if rows >= ROW_BUDGET:
            flush()
    flush()
    return total / len(decomps)


def _masked_mean(masks, values, F):
    """Per-feature mean of ``values[p]`` over the masks containing that feature."""
    R = masks.shape[1]
    counts = np.bincount(masks.ravel(), minlength=F).astype(float)
    sums = np.bincount(masks.ravel(), weights=np.repeat(values, R), minlength=F)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts, counts


def fia_scores(model, decomps, masks, mode, target, p_original, fixed=()):
    """Scores of one greedy iteration for one stream.

    Returns ``(scores, counts)``: ``scores[f]`` is the mean over masks that
    contain ``f`` of ``P_perturbed - p_original`` (NaN where ``f`` was never
    drawn).
    """
    fixed = list(fixed)
    if mode == INSERTION:
        def build(d):
            return d.inserted(masks, fixed)
    elif mode == DELETION:
        def build(d):
            return d.deleted(masks, fixed)
    else:
        raise InvalidArgumentError(f"unknown stream {mode!r}")
    probs = batch_mean_prob(model, decomps, build, target)
    return _masked_mean(masks, probs - p_original, decomps[0].feature_count)


def _pick(values, remaining, largest=True):
    """Index in ``remaining`` with the extreme value; ties go to the lowest index."""
    vals = values[remaining]
    best = vals.max() if largest else vals.min()
    return int(remaining[np.flatnonzero(vals == best)[0]])


def fia_explain(model, samples, space, mode=COMBINED, cfg=None, target_class=None,
                mask_source=None):
    """Greedy class-level feature search over ``space``.

    ``target_class`` defaults to the majority predicted class of the batch.
    ``mask_source(remaining, R, rng)`` overrides random mask sampling (used
    with :func:`~tfexplain.perturbation.exhaustive_masks` for exact checks).
    """
    cfg = cfg or FiaConfig()
    if mode not in FIA_MODES:
        raise InvalidArgumentError(f"unknown FIA mode {mode!r}")
    X = _as_samples(samples, space)
    if target_class is None:
        target_class = int(np.bincount(model.predict(X)).argmax())
    F = space.feature_count
    if cfg.k > F:
        raise InvalidArgumentError(f"k={cfg.k} exceeds the {F} available features")
    decomps = [space.decompose(x, cfg.fill) for x in X]
    p_original = float(np.mean(_target_prob(model, X, target_class)))
    rng = np.random.default_rng(cfg.seed)

    selected, ranked = [], []
    for it in range(cfg.k):
        remaining = np.setdiff1d(np.arange(F), selected)
        R = min(cfg.R, remaining.size)
        if mask_source is None:
            masks = sample_masks(F, R, cfg.P, rng, excluded=selected)
        else:
            masks = np.asarray(mask_source(remaining, R, rng), dtype=int)
        if np.isin(masks, selected).any():
            raise InvalidArgumentError("masks may not contain already selected features")

        ins = dele = None
        if mode in (INSERTION, COMBINED):
            ins, counts = fia_scores(model, decomps, masks, INSERTION, target_class,
                                     p_original, selected)
        if mode in (DELETION, COMBINED):
            dele, counts = fia_scores(model, decomps, masks, DELETION, target_class,
                                      p_original, selected)
        uncovered = remaining[counts[remaining] == 0]
        if uncovered.size:
            raise CoverageError(
                f"iteration {it}: {uncovered.size} features were never drawn "
                f"(e.g. {space.feature_id(uncovered[0])}); increase P")

        if mode == INSERTION:
            f = _pick(ins, remaining, largest=True)
            score = ins[f]
        elif mode == DELETION:
            f = _pick(dele, remaining, largest=False)
            score = dele[f]
        else:
            comb = cfg.alpha * ins - (1.0 - cfg.alpha) * dele
            if cfg.combined_abs:
                comb = np.abs(comb)
            f = _pick(comb, remaining, largest=True)
            score = comb[f]
        selected.append(f)
        ranked.append((f, float(score)))

    config = {"P": cfg.P, "R": cfg.R, "k": cfg.k, "alpha": cfg.alpha,
              "seed": cfg.seed, "fill": cfg.fill, "samples": int(X.shape[0]),
              "p_original": p_original}
    if mode == COMBINED:
        config["combined_abs"] = cfg.combined_abs
    return Explanation(mode, target_class, space, ranked, config)


def _ranking(scores):
    """All features by descending score, ties to the lower index."""
    order = np.lexsort((np.arange(scores.size), -scores))
    return [(int(f), float(scores[f])) for f in order]


def rise_explain(model, samples, space, P=2000, R=10, seed=0, target_class=None,
                 fill="rbp", masks=None):
    """Mean target probability over the perturbations in which a feature survives.

    Each perturbation deletes ``R`` random features; probabilities are
    averaged over the batch first.
    """
    X = _as_samples(samples, space)
    if target_class is None:
        target_class = int(np.bincount(model.predict(X)).argmax())
    F = space.feature_count
    if masks is None:
        masks = sample_masks(F, min(R, F), P, seed)
    masks = np.asarray(masks, dtype=int)
    decomps = [space.decompose(x, fill) for x in X]
    probs = batch_mean_prob(model, decomps, lambda d: d.deleted(masks), target_class)

    hit = np.zeros((masks.shape[0], F), dtype=bool)
    hit[np.arange(masks.shape[0])[:, None], masks] = True
    keep = ~hit
    kept = keep.sum(axis=0)
    if np.any(kept == 0):
        f = int(np.flatnonzero(kept == 0)[0])
        raise CoverageError(f"feature {space.feature_id(f)} is masked in every "
                            "perturbation; increase P or decrease R")
    importance = (probs @ keep) / kept
    config = {"P": int(masks.shape[0]), "R": int(masks.shape[1]), "seed": seed,
              "fill": fill, "samples": int(X.shape[0])}
    return Explanation("rise", target_class, space, _ranking(importance), config)


def _single(sample, space):
    X = _as_samples(sample, space)
    if X.shape[0] != 1:
        raise InvalidArgumentError("this explainer is local: pass exactly one sample")
    return X[0]


def _weighted_ridge(Z, y, weights, ridge):
    """Weighted ridge fit with an unpenalised intercept; returns the coefficients."""
    A = np.hstack([np.ones((Z.shape[0], 1)), Z])
    sw = np.sqrt(weights)[:, None]
    if np.linalg.matrix_rank(A * sw) < A.shape[1]:
        raise InvalidArgumentError(
            f"singular regression: {Z.shape[0]} perturbations cannot identify "
            f"{Z.shape[1]} features; increase P")
    penalty = np.full(A.shape[1], float(ridge))
    penalty[0] = 0.0
    lhs = A.T @ (A * weights[:, None]) + np.diag(penalty)
    rhs = A.T @ (weights * y)
    return np.linalg.solve(lhs, rhs)[1:]


def lime_explain(model, sample, space, P=2000, kernel_width=0.25, ridge=1e-6, seed=0,
                 target_class=None, fill="rbp", z=None):
    """Local weighted ridge surrogate on binary feature-presence vectors."""
    x = _single(sample, space)
    if target_class is None:
        target_class = int(model.predict(x[None])[0])
    F = space.feature_count
    if z is None:
        z = np.random.default_rng(seed).random((P, F)) < 0.5
    Z = np.asarray(z, dtype=float)
    if Z.shape[1] != F:
        raise InvalidArgumentError(f"z has {Z.shape[1]} columns, space has {F} features")
    d = space.decompose(x, fill)
    y = _target_prob(model, d.with_presence(Z), target_class)
    dist = 1.0 - Z.sum(axis=1) / F
    if math.isinf(kernel_width):
        weights = np.ones(Z.shape[0])
    else:
        weights = np.exp(-dist ** 2 / kernel_width ** 2)
    coef = _weighted_ridge(Z, y, weights, ridge)
    config = {"P": int(Z.shape[0]), "kernel_width": kernel_width, "ridge": ridge,
              "seed": seed, "fill": fill}
    return Explanation("lime", target_class, space, _ranking(coef), config)


def shapley_kernel(F, size):
    """Shapley kernel weight of a coalition with ``size`` of ``F`` players."""
    return (F - 1) / (math.comb(F, size) * size * (F - size))


def _coalitions(F, P, rng):
    """Coalition matrix and regression weights.

    All ``2^F - 2`` proper non-empty coalitions when ``P`` allows, weighted
    by the Shapley kernel; otherwise ``P`` paired samples drawn in
    proportion to the kernel, each with unit weight.
    """
    if F < 31 and 2 ** F - 2 <= P:
        codes = np.arange(1, 2 ** F - 1)
        Z = ((codes[:, None] >> np.arange(F)) & 1).astype(float)
        sizes = Z.sum(axis=1).astype(int)
        w = np.array([shapley_kernel(F, s) for s in sizes])
        return Z, w
    sizes = np.arange(1, F)
    probs = (F - 1) / (sizes * (F - sizes))
    probs /= probs.sum()
    half = (P + 1) // 2
    drawn = rng.choice(sizes, size=half, p=probs)
    Z = np.zeros((half, F))
    for i, s in enumerate(drawn):
        Z[i, rng.choice(F, size=s, replace=False)] = 1.0
    Z = np.vstack([Z, 1.0 - Z])[:P]
    return Z, np.ones(Z.shape[0])


def kernelshap_explain(model, sample, space, P=2000, seed=0, target_class=None,
                       fill="rbp"):
    """Kernel-weighted least squares with the efficiency constraint enforced exactly."""
    x = _single(sample, space)
    if target_class is None:
        target_class = int(model.predict(x[None])[0])
    F = space.feature_count
    if F < 2:
        raise InvalidArgumentError("KernelSHAP needs at least two features")
    rng = np.random.default_rng(seed)
    Z, w = _coalitions(F, P, rng)
    d = space.decompose(x, fill)
    ends = _target_prob(model, np.vstack([d.baseline, x]), target_class)
    f_empty, f_full = float(ends[0]), float(ends[1])
    y = _target_prob(model, d.with_presence(Z), target_class) - f_empty
    delta = f_full - f_empty

    # eliminate the last player: phi_F = delta - sum(phi_1..F-1)
    A = Z[:, :-1] - Z[:, -1:]
    b = y - Z[:, -1] * delta
    sw = np.sqrt(w)[:, None]
    if np.linalg.matrix_rank(A * sw) < F - 1:
        raise InvalidArgumentError(
            f"singular regression: {Z.shape[0]} coalitions cannot identify {F} "
            "features; paired sampling needs P >= 2 * (F - 1), increase P")
    head, *_ = np.linalg.lstsq(A * sw, b * sw[:, 0], rcond=None)
    phi = np.append(head, delta - head.sum())
    config = {"P": int(Z.shape[0]), "seed": seed, "fill": fill,
              "f_full": f_full, "f_empty": f_empty}
    return Explanation("kernelshap", target_class, space, _ranking(phi), config)


def aggregate_class_explanation(per_sample):
    """Mean score per feature across per-sample explanations, descending."""
    if not per_sample:
        raise InvalidArgumentError("nothing to aggregate")
    first = per_sample[0]
    for e in per_sample[1:]:
        if (e.method, e.target_class, e.space) != (first.method, first.target_class,
                                                   first.space):
            raise InvalidArgumentError("cannot aggregate explanations of different "
                                       "methods, classes or spaces")
    totals = np.zeros(first.space.feature_count)
    for e in per_sample:
        for f, s in e.ranked:
            totals[f] += s
    means = totals / len(per_sample)
    present = sorted({f for e in per_sample for f, _ in e.ranked})
    order = sorted(present, key=lambda f: (-means[f], f))
    config = dict(first.config)
    config["aggregated"] = len(per_sample)
    return Explanation(first.method, first.target_class, first.space,
                       [(f, float(means[f])) for f in order], config)


def explain(method, model, samples, space, fia=None, target_class=None,
            lime_kernel_width=0.25, ridge=1e-6, max_local=None):
    """Class-level explanation by ``method`` name.

    FIA and RISE consume the whole batch; LIME and KernelSHAP explain each
    of the first ``max_local`` samples and are averaged.
    """
    fia = fia or FiaConfig()
    X = _as_samples(samples, space)
    if method in FIA_MODES:
        return fia_explain(model, X, space, method, fia, target_class)
    if method == "rise":
        return rise_explain(model, X, space, fia.P, fia.R, fia.seed, target_class, fia.fill)
    if method in ("lime", "kernelshap"):
        if target_class is None:
            target_class = int(np.bincount(model.predict(X)).argmax())
        local = X if max_local is None else X[:max_local]
        parts = []
        for i, x in enumerate(local):
            if method == "lime":
                parts.append(lime_explain(model, x, space, fia.P, lime_kernel_width, ridge,
                                          fia.seed + i, target_class, fia.fill))
            else:
                parts.append(kernelshap_explain(model, x, space, fia.P, fia.seed + i,
                                                target_class, fia.fill))
        return aggregate_class_explanation(parts)
    raise InvalidArgumentError(f"unknown method {method!r}; expected one of {METHODS}")
