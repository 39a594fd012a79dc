"""End-to-end experiment: data, classifier, explanations, metrics, plots.

Each stage reads and writes plain files in one run directory, so the CLI
subcommands can run stages separately and ``run`` chains them.
"""

import json
import logging
import os
import platform
from dataclasses import replace

import matplotlib
import numpy as np

from . import __version__
from .classifier import (
    TrainConfig,
    band_energy_classifier,
    external_classifier,
    load_model,
    save_model,
    train_classifier,
)
from .dataset import (
    LabeledDataset,
    SynthConfig,
    class_templates,
    generate_synthetic,
    ground_truth_ranking,
    load_ucr,
    split_dataset,
    synthetic_regions,
)
from .errors import InvalidArgumentError, UnsupportedConfigurationError
from .explainers import Explanation, explain
from .metrics import (
    DEPTHS,
    MetricReport,
    area_under_curves,
    faithfulness_at_k,
    rbo,
    robustness,
    write_metrics_csv,
    write_metrics_json,
)
from .perturbation import make_space
from .plotting import render_explanation_plot, render_metric_curves

log = logging.getLogger(__name__)


def synth_config(cfg):
    return SynthConfig(samples_per_class=cfg.samples_per_class,
                       noise_sigma=cfg.noise_sigma, seed=cfg.seed)


def load_dataset(cfg):
    """The full dataset named by ``cfg.dataset`` (several UCR files are combined)."""
    if cfg.dataset == "synthetic":
        return generate_synthetic(synth_config(cfg))
    parts = [load_ucr(p) for p in cfg.dataset_paths()]
    if len(parts) == 1:
        return parts[0]
    if len({p.length for p in parts}) != 1:
        raise InvalidArgumentError("combined dataset files differ in series length")
    raw = [p.label_values[c] for p in parts for c in p.y]
    uniques = sorted(set(raw))
    index = {v: i for i, v in enumerate(uniques)}
    name = os.path.splitext(os.path.basename(cfg.dataset_paths()[0]))[0]
    return LabeledDataset(np.vstack([p.X for p in parts]), [index[v] for v in raw],
                          len(uniques), name=name.replace("_TRAIN", "").replace("_TEST", ""),
                          label_values=uniques)


def prepare_data(cfg):
    data = load_dataset(cfg)
    train, val, test = split_dataset(data, seed=cfg.seed)
    return data, train, val, test


def build_classifier(cfg, data, train, val):
    """Return ``(model, training_metrics)``; loads ``cfg.model`` when given."""
    if cfg.model:
        return load_model(cfg.model), None
    kind = cfg.classifier
    if kind == "band-rule":
        if cfg.dataset != "synthetic":
            raise UnsupportedConfigurationError(
                "the band-rule classifier needs the synthetic dataset's known regions")
        regions = synthetic_regions(synth_config(cfg), cfg.window, cfg.hop)
        return band_energy_classifier(regions, cfg.window, cfg.hop, data.length), None
    if kind.startswith("external:"):
        return external_classifier(kind[len("external:"):], class_count=data.class_count,
                                   input_length=data.length), None
    tcfg = TrainConfig(kind=kind, hidden_width=cfg.hidden_width,
                       learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                       max_epochs=cfg.epochs, patience=cfg.patience, seed=cfg.seed)
    return train_classifier(train, val, tcfg)


def write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_manifest(cfg, out, stages):
    doc = {"config": cfg.to_dict(), "seed": cfg.seed, "stages": stages,
           "versions": {"tfexplain": __version__, "numpy": np.__version__,
                        "matplotlib": matplotlib.__version__,
                        "python": platform.python_version()}}
    write_json(doc, os.path.join(out, "manifest.json"))


def explanation_path(out, class_id, method, domain):
    suffix = "" if domain == "tf" else f"_{domain}"
    return os.path.join(out, "explanations", f"{class_id}_{method}{suffix}.json")


def class_samples(cfg, test, c):
    X = test.of_class(c)
    if X.shape[0] == 0:
        return X
    return X[:cfg.samples]


def _space(cfg, domain, length):
    return make_space(domain, length, cfg.window, cfg.hop, cfg.segment_length)


def _explain_fn(cfg, method, space, target):
    fia = cfg.fia()
    changes = {"fill": "zero"} if space.kind == "time" else {}
    F = space.feature_count
    # short series: never ask for more features than the space holds
    if fia.k > F:
        changes["k"] = F
    if fia.R >= F > 1:
        changes["R"] = F - 1
    if changes.keys() - {"fill"}:
        log.warning("%s space has %d features; using k=%d, R=%d", space.kind, F,
                    changes.get("k", fia.k), changes.get("R", fia.R))
    if changes:
        fia = replace(fia, **changes)

    def run(model, samples):
        return explain(method, model, samples, space, fia, target_class=target,
                       lime_kernel_width=cfg.kernel_width, ridge=cfg.ridge)
    return run


def run_explanations(cfg, model, test, out):
    """Write one explanation per class x method x domain; returns them keyed."""
    os.makedirs(os.path.join(out, "explanations"), exist_ok=True)
    results = {}
    for domain in cfg.domains():
        space = _space(cfg, domain, test.length)
        for c in range(test.class_count):
            X = class_samples(cfg, test, c)
            if X.shape[0] == 0:
                log.warning("class %d has no test samples; skipped", c)
                continue
            for method in cfg.methods:
                log.info("explaining class %d with %s (%s)", c, method, domain)
                expl = _explain_fn(cfg, method, space, c)(model, X)
                expl.save(explanation_path(out, c, method, domain))
                results[(domain, c, method)] = expl
    return results


def load_explanations(cfg, out, class_count):
    results = {}
    for domain in cfg.domains():
        for c in range(class_count):
            for method in cfg.methods:
                path = explanation_path(out, c, method, domain)
                if os.path.isfile(path):
                    results[(domain, c, method)] = Explanation.load(path)
    if not results:
        raise InvalidArgumentError(f"no explanations found under {out}/explanations")
    return results


def evaluate(cfg, model, test, explanations, classifier_name=None):
    """Rows for metrics.csv plus one MetricReport per metric, method and domain."""
    classifier_name = classifier_name or cfg.classifier
    truths = None
    if cfg.dataset == "synthetic":
        templates = class_templates(synth_config(cfg))
        truths = [ground_truth_ranking(t, cfg.window, cfg.hop, class_id=c)
                  for c, t in enumerate(templates)]
    rows, reports = [], []
    for domain in cfg.domains():
        for method in cfg.methods:
            per_class = {}
            for (d, c, m), expl in sorted(explanations.items()):
                if d != domain or m != method:
                    continue
                X = class_samples(cfg, test, c)
                vals = {}
                for k in DEPTHS:
                    if k <= len(expl.ranked):
                        vals[f"faithfulness@{k}"] = faithfulness_at_k(
                            model, X, expl, k, cfg.faithfulness_mode)
                if cfg.robustness:
                    fn = _explain_fn(cfg, method, expl.space, c)
                    vals["robustness"] = robustness(
                        fn, model, X, domain, cfg.sigma, min(8, len(expl.ranked)),
                        cfg.trials, cfg.seed, cfg.window, cfg.hop)
                if truths is not None and domain == "tf" and len(truths[c]):
                    predicted = expl.feature_ids()
                    truth = truths[c]
                    for k in DEPTHS:
                        vals[f"rbo@{k}"] = rbo(predicted, truth.ranked_cells, k)
                    vals["aup"], vals["aur"] = area_under_curves(predicted, truth)
                per_class[c] = vals
            if not per_class:
                continue
            metrics = sorted({name for v in per_class.values() for name in v})
            row = {"dataset": test.name.rsplit("-", 1)[0], "classifier": classifier_name,
                   "method": method, "domain": domain}
            for name in metrics:
                values = {c: v[name] for c, v in per_class.items() if name in v}
                report = MetricReport(name, {classifier_name: values},
                                      {"method": method, "domain": domain})
                row[name] = report.mean
                reports.append(report)
            rows.append(row)
    return rows, reports


def write_metrics(rows, reports, out):
    write_metrics_csv(rows, os.path.join(out, "metrics.csv"))
    write_metrics_json(rows, reports, os.path.join(out, "metrics.json"))


def render_plots(cfg, model, test, explanations, rows, out):
    plots = os.path.join(out, "plots")
    os.makedirs(plots, exist_ok=True)
    written = []
    for (domain, c, method), expl in sorted(explanations.items()):
        X = class_samples(cfg, test, c)
        if X.shape[0] == 0 or not expl.ranked:
            continue
        suffix = "" if domain == "tf" else f"_{domain}"
        path = os.path.join(plots, f"{c}_{method}{suffix}.svg")
        render_explanation_plot(X[0], expl, model, path)
        written.append(path)
    for prefix in ("rbo", "faithfulness"):
        curves = {}
        for row in rows:
            ys = [row.get(f"{prefix}@{k}", float("nan")) for k in DEPTHS]
            if not all(np.isnan(ys)):
                curves[f"{row['method']} ({row['domain']})"] = ys
        if curves:
            path = os.path.join(plots, f"{prefix}_at_k.svg")
            render_metric_curves(curves, f"{prefix}@k", path, DEPTHS)
            written.append(path)
    return written


def run_experiment(cfg):
    """Full pipeline into ``cfg.out``; returns the metrics rows."""
    cfg.validate()
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    data, train, val, test = prepare_data(cfg)
    model, train_metrics = build_classifier(cfg, data, train, val)
    try:
        save_model(model, os.path.join(out, "model.json"))
        if train_metrics is not None:
            write_json(train_metrics, os.path.join(out, "train_metrics.json"))
        explanations = run_explanations(cfg, model, test, out)
        rows, reports = evaluate(cfg, model, test, explanations)
        write_metrics(rows, reports, out)
        stages = ["data", "model", "explain", "eval"]
        if cfg.plots:
            render_plots(cfg, model, test, explanations, rows, out)
            stages.append("plot")
        write_manifest(cfg, out, stages)
    finally:
        close = getattr(model, "close", None)
        if close:
            close()
    return rows
