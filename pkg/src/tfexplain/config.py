"""Experiment configuration: defaults, INI files, manifests and flag overrides.

Every key has one spelling shared by the config file and the command
line (``mask-size`` in a file is ``--mask-size`` on the command line).
Keys live under a section in files; the section only groups them.
"""

import configparser
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import DatasetNotFoundError, FormatError, InvalidArgumentError
from .explainers import METHODS, FiaConfig
from .metrics import FAITHFULNESS_MODES
from .perturbation import FILLS

DOMAINS = ("tf", "time", "both")
CLASSIFIERS = ("softmax", "mlp", "band-rule")


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    classifier: str = "mlp"
    model: str = ""
    methods: list = field(default_factory=lambda: ["insertion", "deletion", "combined"])
    domain: str = "tf"
    window: int = 16
    hop: int = 8
    segment_length: int = 16
    perturbations: int = 2000
    mask_size: int = 10
    alpha: float = 0.2
    topk: int = 8
    seed: int = 0
    out: str = "run"
    faithfulness_mode: str = "cumulative"
    deletion_fill: str = "rbp"
    samples: int = 10
    sigma: float = 0.1
    trials: int = 5
    robustness: bool = True
    plots: bool = True
    samples_per_class: int = 1000
    noise_sigma: float = 0.1
    hidden_width: int = 128
    learning_rate: float = 2e-4
    batch_size: int = 64
    epochs: int = 200
    patience: int = 10
    kernel_width: float = 0.25
    ridge: float = 1e-6

    def validate(self):
        if self.classifier not in CLASSIFIERS and not self.classifier.startswith("external:"):
            raise InvalidArgumentError(
                f"unknown classifier {self.classifier!r}; expected one of "
                f"{', '.join(CLASSIFIERS)} or external:<command>")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InvalidArgumentError(f"unknown method(s) {bad}; expected {METHODS}")
        if self.domain not in DOMAINS:
            raise InvalidArgumentError(f"unknown domain {self.domain!r}")
        if self.hop * 2 != self.window:
            raise InvalidArgumentError("hop must be window / 2")
        if self.faithfulness_mode not in FAITHFULNESS_MODES:
            raise InvalidArgumentError(f"unknown faithfulness mode {self.faithfulness_mode!r}")
        if self.deletion_fill not in FILLS:
            raise InvalidArgumentError(f"unknown deletion fill {self.deletion_fill!r}")
        if self.samples < 1 or self.trials < 1:
            raise InvalidArgumentError("samples and trials must be positive")
        self.fia()
        if self.dataset != "synthetic":
            for path in self.dataset_paths():
                if not os.path.isfile(path):
                    raise DatasetNotFoundError(f"dataset file not found: {path}")
        if self.model and not os.path.isfile(self.model):
            raise InvalidArgumentError(f"model file not found: {self.model}")
        return self

    def dataset_paths(self):
        """UCR files to combine; several may be given separated by commas."""
        return [p.strip() for p in self.dataset.split(",") if p.strip()]

    def domains(self):
        return ["tf", "time"] if self.domain == "both" else [self.domain]

    def fia(self):
        return FiaConfig(P=self.perturbations, R=self.mask_size, k=self.topk,
                         alpha=self.alpha, seed=self.seed, fill=self.deletion_fill)

    def to_dict(self):
        return asdict(self)


SECTIONS = {
    "experiment": ("dataset", "classifier", "model", "method", "methods", "domain", "seed",
                   "out", "samples", "plots"),
    "stft": ("window", "hop", "segment-length"),
    "fia": ("perturbations", "mask-size", "alpha", "topk", "deletion-fill"),
    "baselines": ("kernel-width", "ridge"),
    "metrics": ("faithfulness-mode", "sigma", "trials", "robustness"),
    "synthetic": ("samples-per-class", "noise-sigma"),
    "train": ("hidden-width", "learning-rate", "batch-size", "epochs", "patience"),
}
_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _key_to_field(key):
    name = key.strip().lower().replace("-", "_")
    if name == "method":
        name = "methods"
    if name not in _FIELDS:
        raise FormatError(f"unknown config key {key!r}")
    return name


def _coerce(name, value):
    default = getattr(ExperimentConfig(), name)
    if isinstance(value, str):
        text = value.strip()
        if isinstance(default, list):
            return [v.strip() for v in text.split(",") if v.strip()]
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise FormatError(f"{name}: expected a boolean, got {value!r}")
        try:
            return type(default)(text)
        except ValueError:
            raise FormatError(f"{name}: cannot parse {value!r}") from None
    return value


def apply_overrides(cfg, overrides):
    """Return a copy of ``cfg`` with non-None ``overrides`` (keys in either spelling)."""
    doc = cfg.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        name = _key_to_field(key)
        doc[name] = _coerce(name, value)
    return ExperimentConfig(**doc)


def load_config(path):
    """Read an INI config or a run manifest (``.json``)."""
    if not os.path.isfile(path):
        raise InvalidArgumentError(f"config file not found: {path}")
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: {exc}") from None
        return apply_overrides(ExperimentConfig(), doc.get("config", doc))
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise FormatError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        allowed = SECTIONS.get(section)
        if allowed is None:
            raise FormatError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in allowed:
                raise FormatError(f"{path}: key {key!r} does not belong in [{section}]")
            values[key] = value
    return apply_overrides(ExperimentConfig(), values)
