"""Command-line entry point.

Subcommands share one set of flags; each flag overrides the matching
config-file key.  Failures print a JSON error document on stderr (and
write ``error.json`` into ``--out`` when possible) and exit nonzero.
"""

import argparse
import json
import logging
import os
import sys

from .classifier import classification_metrics, save_model
from .config import DOMAINS, ExperimentConfig, apply_overrides, load_config
from .dataset import class_templates, ground_truth_ranking, write_ucr
from .errors import TFExplainError
from .explainers import METHODS
from .metrics import FAITHFULNESS_MODES, read_metrics_csv
from .perturbation import FILLS
from .pipeline import (
    build_classifier,
    evaluate,
    load_dataset,
    load_explanations,
    prepare_data,
    render_plots,
    run_experiment,
    run_explanations,
    synth_config,
    write_json,
    write_manifest,
    write_metrics,
)

# flag -> help; the destination name is the config key
FLAGS = {
    "--config": "INI config file or a previous run's manifest.json",
    "--dataset": "'synthetic' or UCR file path(s), comma separated to combine",
    "--classifier": "softmax | mlp | band-rule | external:<command>",
    "--model": "use a saved model.json instead of training",
    "--method": "comma-separated subset of " + ",".join(METHODS),
    "--domain": "/".join(DOMAINS),
    "--window": "STFT window size (even)",
    "--hop": "STFT hop, must be window/2",
    "--perturbations": "perturbations per iteration (P)",
    "--mask-size": "features per mask (R)",
    "--alpha": "insertion weight of the combined method",
    "--topk": "features to extract",
    "--seed": "global seed",
    "--out": "run directory",
    "--faithfulness-mode": "/".join(FAITHFULNESS_MODES),
    "--deletion-fill": "/".join(FILLS),
    "--samples": "test samples per class used for explanations",
}
TYPES = {"--window": int, "--hop": int, "--perturbations": int, "--mask-size": int,
         "--alpha": float, "--topk": int, "--seed": int, "--samples": int}
CHOICES = {"--domain": DOMAINS, "--faithfulness-mode": FAITHFULNESS_MODES,
           "--deletion-fill": FILLS}


def build_parser():
    parser = argparse.ArgumentParser(prog="tfexplain", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    for flag, text in FLAGS.items():
        common.add_argument(flag, default=None, help=text, type=TYPES.get(flag, str),
                            choices=CHOICES.get(flag))
    common.add_argument("--no-robustness", action="store_true",
                        help="skip the (slow) robustness metric")
    common.add_argument("--no-plots", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("synth", "write the synthetic dataset and its ground truth"),
        ("train", "train or build the classifier and save model.json"),
        ("explain", "write explanations for every class"),
        ("eval", "score saved explanations into metrics.csv / metrics.json"),
        ("plot", "render SVG figures from saved explanations"),
        ("run", "full pipeline"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def config_from_args(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {flag[2:]: getattr(args, flag[2:].replace("-", "_"))
                 for flag in FLAGS if flag != "--config"}
    if args.no_robustness:
        overrides["robustness"] = False
    if args.no_plots:
        overrides["plots"] = False
    return apply_overrides(cfg, overrides)


def _model_for(cfg, data, train, val):
    saved = os.path.join(cfg.out, "model.json")
    if not cfg.model and os.path.isfile(saved):
        cfg = apply_overrides(cfg, {"model": saved})
    return build_classifier(cfg, data, train, val)[0]


def cmd_synth(cfg):
    data = load_dataset(apply_overrides(cfg, {"dataset": "synthetic"}))
    write_ucr(data, os.path.join(cfg.out, "synthetic.tsv"))
    truths = {}
    for c, t in enumerate(class_templates(synth_config(cfg))):
        gt = ground_truth_ranking(t, cfg.window, cfg.hop, class_id=c)
        truths[str(c)] = {"ranked_cells": [list(x) for x in gt.ranked_cells],
                          "magnitudes": list(gt.magnitudes),
                          "magnitude_threshold": gt.magnitude_threshold}
    with open(os.path.join(cfg.out, "ground_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truths, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(data)} series of length {data.length} to {cfg.out}")


def cmd_train(cfg):
    data, train, val, test = prepare_data(cfg)
    model, metrics = build_classifier(cfg, data, train, val)
    save_model(model, os.path.join(cfg.out, "model.json"))
    if metrics is not None:
        metrics["test"] = classification_metrics(test.y, model.predict(test.X),
                                                 data.class_count)
        write_json(metrics, os.path.join(cfg.out, "train_metrics.json"))
        print(f"test accuracy {metrics['test']['accuracy']:.4f}")
    write_manifest(cfg, cfg.out, ["data", "model"])


def cmd_explain(cfg):
    data, train, val, test = prepare_data(cfg)
    model = _model_for(cfg, data, train, val)
    results = run_explanations(cfg, model, test, cfg.out)
    write_manifest(cfg, cfg.out, ["data", "model", "explain"])
    for (domain, c, method), expl in sorted(results.items()):
        print(f"class {c} {method} ({domain}): {expl.feature_ids()[:8]}")


def cmd_eval(cfg):
    data, train, val, test = prepare_data(cfg)
    model = _model_for(cfg, data, train, val)
    expl = load_explanations(cfg, cfg.out, data.class_count)
    rows, reports = evaluate(cfg, model, test, expl)
    write_metrics(rows, reports, cfg.out)
    print(f"wrote {len(rows)} metric rows to {os.path.join(cfg.out, 'metrics.csv')}")


def _numeric_row(row):
    labels = ("dataset", "classifier", "method", "domain")
    return {k: v if k in labels else (float(v) if v else float("nan"))
            for k, v in row.items()}


def cmd_plot(cfg):
    data, train, val, test = prepare_data(cfg)
    model = _model_for(cfg, data, train, val)
    expl = load_explanations(cfg, cfg.out, data.class_count)
    path = os.path.join(cfg.out, "metrics.csv")
    rows = [_numeric_row(r) for r in read_metrics_csv(path)] if os.path.isfile(path) else []
    written = render_plots(cfg, model, test, expl, rows, cfg.out)
    print(f"wrote {len(written)} figures")


def cmd_run(cfg):
    rows = run_experiment(cfg)
    print(f"run complete: {len(rows)} metric rows in {cfg.out}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "explain": cmd_explain,
            "eval": cmd_eval, "plot": cmd_plot, "run": cmd_run}


def _report_error(exc, out):
    kind = getattr(exc, "kind", "internal-error")
    doc = {"error": {"kind": kind, "type": type(exc).__name__, "message": str(exc)}}
    text = json.dumps(doc)
    print(text, file=sys.stderr)
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError:
            pass
    return 2 if isinstance(exc, TFExplainError) else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    try:
        cfg = config_from_args(args)
        out = cfg.out
        if args.command != "synth":
            cfg.validate()
        os.makedirs(cfg.out, exist_ok=True)
        COMMANDS[args.command](cfg)
    except (TFExplainError, OSError, ValueError) as exc:
        return _report_error(exc, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
