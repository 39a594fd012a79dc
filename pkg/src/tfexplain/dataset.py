"""Synthetic benchmark with known time-frequency ground truth, UCR text I/O,
and seeded splitting."""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetNotFoundError, FormatError, InvalidArgumentError
from .signal import frame_count, make_window, stft


@dataclass
class LabeledDataset:
    """Equal-length univariate series with dense 0-based labels.

    ``label_values`` keeps the original label of every dense index so a
    dataset can be written back out unchanged.
    """

    X: np.ndarray
    y: np.ndarray
    class_count: int
    name: str = "dataset"
    label_values: list = field(default=None)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2:
            raise InvalidArgumentError("X must be a 2-D (samples, length) array")
        if self.y.shape != (self.X.shape[0],):
            raise InvalidArgumentError("y must hold one label per sample")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise InvalidArgumentError(
                f"labels must lie in [0, {self.class_count})")
        if self.label_values is None:
            self.label_values = list(range(self.class_count))

    def __len__(self):
        return self.X.shape[0]

    @property
    def length(self):
        return self.X.shape[1]

    def of_class(self, c):
        return self.X[self.y == c]

    def subset(self, index, name=None):
        index = np.asarray(index, dtype=int)
        return LabeledDataset(self.X[index], self.y[index], self.class_count,
                              name or self.name, list(self.label_values))


@dataclass(frozen=True)
class SynthConfig:
    """Three-class synthetic design.

    Cycle counts are per segment.  The defaults put the mid and high tones
    on bin centres of a 16-sample window, which keeps the classes'
    time-frequency footprints apart (the low tone sits near DC).
    """

    segment_length: int = 128
    segments: int = 3
    cycles_low: float = 1.0
    cycles_mid: float = 8.0
    cycles_high: float = 40.0
    noise_sigma: float = 0.1
    samples_per_class: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.segments != 3:
            raise InvalidArgumentError("the synthetic design uses exactly 3 segments")
        if self.segment_length < 2:
            raise InvalidArgumentError("segment_length must be >= 2")
        if not self.cycles_low < 2:
            raise InvalidArgumentError("cycles_low must be < 2")
        if not 4 < self.cycles_mid < 10:
            raise InvalidArgumentError("cycles_mid must lie in (4, 10)")
        if not self.cycles_high > 10:
            raise InvalidArgumentError("cycles_high must be > 10")
        if not self.cycles_high / self.segment_length < 0.5:
            raise InvalidArgumentError(
                f"cycles_high={self.cycles_high} over {self.segment_length} "
                "samples exceeds the Nyquist limit")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise_sigma must be >= 0")
        if self.samples_per_class < 1:
            raise InvalidArgumentError("samples_per_class must be >= 1")

    @property
    def length(self):
        return self.segments * self.segment_length

    # (segment, cycles) pairs active in each class
    def layout(self):
        return [
            [(0, self.cycles_low), (2, self.cycles_high)],
            [(0, self.cycles_high), (2, self.cycles_low)],
            [(1, self.cycles_mid)],
        ]


def class_templates(cfg):
    """Noise-free signal of each class, shape ``(3, length)``."""
    n = np.arange(cfg.segment_length)
    out = np.zeros((3, cfg.length))
    for c, parts in enumerate(cfg.layout()):
        for seg, cycles in parts:
            start = seg * cfg.segment_length
            out[c, start:start + cfg.segment_length] = np.sin(
                2 * np.pi * cycles * n / cfg.segment_length)
    return out


def generate_synthetic(cfg=None):
    cfg = cfg or SynthConfig()
    templates = class_templates(cfg)
    n_total = 3 * cfg.samples_per_class
    X = np.empty((n_total, cfg.length))
    y = np.repeat(np.arange(3), cfg.samples_per_class)
    for i in range(n_total):
        # per-sample stream keyed on (seed, index): order-independent
        rng = np.random.default_rng([cfg.seed, i])
        X[i] = templates[y[i]] + cfg.noise_sigma * rng.standard_normal(cfg.length)
    return LabeledDataset(X, y, 3, name="synthetic", label_values=[1, 2, 3])


def tone_bins(cycles, segment_length, window_size, n_bins):
    """Bins within one bin of a tone's (fractional) centre frequency."""
    centre = cycles * window_size / segment_length
    return [k for k in range(n_bins) if abs(k - centre) <= 1.0]


def synthetic_regions(cfg, window_size=16, hop=8):
    """Per-class ground-truth regions as ``((m0, m1), (k0, k1))`` half-open boxes.

    A frame belongs to the segment containing its centre sample.  These
    boxes double as the band definitions of the rule classifier.
    """
    n_frames = frame_count(cfg.length, window_size, hop)
    n_bins = window_size // 2 + 1
    regions = []
    for parts in cfg.layout():
        boxes = []
        for seg, cycles in parts:
            m0 = -(-seg * cfg.segment_length // hop)
            m1 = min(-(-(seg + 1) * cfg.segment_length // hop), n_frames)
            bins = tone_bins(cycles, cfg.segment_length, window_size, n_bins)
            boxes.append(((m0, m1), (bins[0], bins[-1] + 1)))
        regions.append(boxes)
    return regions


def region_cells(boxes):
    return {(m, k) for (m0, m1), (k0, k1) in boxes
            for m in range(m0, m1) for k in range(k0, k1)}


@dataclass(frozen=True)
class GroundTruthRanking:
    class_id: object
    ranked_cells: tuple
    magnitudes: tuple
    magnitude_threshold: float

    def __len__(self):
        return len(self.ranked_cells)

    @property
    def cell_set(self):
        return set(self.ranked_cells)


def ground_truth_ranking(template, window_size=16, hop=8, threshold=None,
                         relative_threshold=1e-6, class_id=None):
    """Cells of the template's STFT sorted by descending magnitude.

    Cells at or below ``threshold`` are dropped; when no absolute threshold
    is given it is ``relative_threshold`` times the peak magnitude.  Equal
    magnitudes (to nine significant digits relative to the peak) are
    ordered by ``(frame, bin)`` so float noise never decides the order.
    """
    S = stft(np.asarray(template, dtype=float), make_window("hann", window_size), hop)
    mag = np.abs(S.grid)
    peak = float(mag.max())
    if threshold is None:
        threshold = relative_threshold * peak
    if peak == 0.0:
        return GroundTruthRanking(class_id, (), (), float(threshold))
    keep = np.argwhere(mag > threshold)
    vals = mag[keep[:, 0], keep[:, 1]]
    rounded = np.round(vals / peak, 9)
    order = np.lexsort((keep[:, 1], keep[:, 0], -rounded))
    cells = tuple((int(keep[i, 0]), int(keep[i, 1])) for i in order)
    return GroundTruthRanking(class_id, cells, tuple(float(vals[i]) for i in order),
                              float(threshold))


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"line {lineno}: unparseable label {token!r}") from None
    if not math.isfinite(value):
        raise FormatError(f"line {lineno}: non-finite label {token!r}")
    return int(value) if value.is_integer() else value


def load_ucr(path, name=None):
    """Read a UCR-style text file: label first, then the samples.

    Tab, comma and plain whitespace delimiters are detected from the
    first non-empty line.  Labels are remapped to ``0..C-1`` in ascending
    order of their original value.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DatasetNotFoundError(f"dataset file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = [(i + 1, ln.strip()) for i, ln in enumerate(fh)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise FormatError(f"{path}: no data rows")
    first = lines[0][1]
    sep = "\t" if "\t" in first else ("," if "," in first else None)

    labels, rows, width = [], [], None
    for lineno, ln in lines:
        tokens = [t for t in (ln.split(sep) if sep else ln.split())]
        if len(tokens) < 2:
            raise FormatError(f"line {lineno}: expected a label and at least one sample")
        label = _parse_label(tokens[0].strip(), lineno)
        try:
            values = [float(t) for t in tokens[1:]]
        except ValueError:
            raise FormatError(f"line {lineno}: unparseable sample value") from None
        if not all(math.isfinite(v) for v in values):
            raise FormatError(f"line {lineno}: non-finite sample value")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise FormatError(
                f"line {lineno}: ragged row ({len(values)} samples, expected {width})")
        labels.append(label)
        rows.append(values)

    uniques = sorted(set(labels))
    index = {v: i for i, v in enumerate(uniques)}
    y = np.array([index[v] for v in labels])
    return LabeledDataset(np.array(rows), y, len(uniques),
                          name=name or os.path.splitext(os.path.basename(path))[0],
                          label_values=uniques)


def write_ucr(dataset, path, delimiter="\t"):
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(dataset.X, dataset.y):
            fh.write(delimiter.join([str(dataset.label_values[label])]
                                    + [repr(float(v)) for v in row]))
            fh.write("\n")


def split_dataset(dataset, ratios=(0.8, 0.1, 0.1), seed=0):
    """Seeded shuffle followed by contiguous train/val/test slices."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise InvalidArgumentError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"ratios must sum to 1, got {sum(ratios)!r}")
    n = len(dataset)
    n_train = int(math.floor(ratios[0] * n + 1e-9))
    n_val = int(math.floor(ratios[1] * n + 1e-9))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise InvalidArgumentError(
            f"split sizes {n_train}/{n_val}/{n_test} leave an empty split")
    perm = np.random.default_rng(seed).permutation(n)
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return tuple(dataset.subset(p, f"{dataset.name}-{tag}")
                 for p, tag in zip(parts, ("train", "val", "test")))
