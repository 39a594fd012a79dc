"""Short-time Fourier analysis with exact overlap-add resynthesis.

Frames are left-aligned on a zero-padded copy of the signal: ``hop``
zeros are prepended and the tail is padded so the frames tile the buffer
exactly.  Every original sample is then covered by two frames, which is
what makes the inverse exact at the edges as well as in the interior.

Only the one-sided spectrum (``window_size // 2 + 1`` bins) is stored;
the inverse uses ``irfft`` so the conjugate half is implied.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidArgumentError,
    ReconstructionContractError,
    UnsupportedConfigurationError,
)

WINDOW_KINDS = ("hann",)
ENVELOPE_EPS = 1e-12


@dataclass(frozen=True)
class WindowSpec:
    kind: str
    size: int
    coefficients: np.ndarray


@dataclass(frozen=True)
class Spectrogram:
    """Complex ``(n_frames, n_bins)`` grid plus the geometry needed to invert it."""

    grid: np.ndarray
    window_size: int
    hop: int
    original_length: int
    window_kind: str = "hann"

    @property
    def n_frames(self):
        return self.grid.shape[-2]

    @property
    def n_bins(self):
        return self.grid.shape[-1]

    @property
    def shape(self):
        return self.grid.shape

    def with_grid(self, grid):
        grid = np.asarray(grid)
        if grid.shape != self.grid.shape:
            raise ReconstructionContractError(
                f"grid shape {grid.shape} does not match {self.grid.shape}")
        return Spectrogram(grid, self.window_size, self.hop,
                           self.original_length, self.window_kind)


def make_window(kind, size):
    """Periodic window of ``size`` samples.

    The periodic Hann window sums to exactly one when shifted by
    ``size // 2``, so ``size`` must be even.
    """
    kind = str(kind).lower()
    if kind not in WINDOW_KINDS:
        raise InvalidArgumentError(f"unknown window kind {kind!r}")
    if isinstance(size, bool) or int(size) != size or size < 2 or size % 2:
        raise InvalidArgumentError(
            f"window size must be an even integer >= 2, got {size!r}")
    size = int(size)
    n = np.arange(size)
    coefficients = 0.5 * (1.0 - np.cos(2.0 * np.pi * n / size))
    coefficients.setflags(write=False)
    return WindowSpec(kind, size, coefficients)


def _check_geometry(window_size, hop):
    if hop * 2 != window_size:
        raise UnsupportedConfigurationError(
            f"hop must be window_size / 2 (got window {window_size}, hop {hop})")


def padded_length(length, window_size, hop):
    """Length of the zero-padded buffer the frames tile."""
    needed = max(length + 2 * hop, window_size)
    return int(-(-needed // hop) * hop)


def frame_count(length, window_size, hop):
    return (padded_length(length, window_size, hop) - window_size) // hop + 1


def frame_span(m, hop, window_size):
    """Half-open range of original-signal sample indices covered by frame ``m``.

    The range can stick out past either end of the signal.
    """
    start = m * hop - hop
    return start, start + window_size


def frame_center(m, hop):
    """Original-signal sample index at the centre of frame ``m``."""
    return m * hop


def synthesis_envelope(length, window):
    """Summed squared window over the padded buffer (``sum_m w[n - mH]**2``)."""
    w = window.coefficients
    N = window.size
    H = N // 2
    total = padded_length(length, N, H)
    M = (total - N) // H + 1
    env = np.zeros(total)
    for m in range(M):
        env[m * H:m * H + N] += w * w
    return env


def stft(x, window=None, hop=None, window_size=16):
    """Forward transform of one real signal.

    ``window`` defaults to a Hann window of ``window_size`` samples and
    ``hop`` to half the window.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidArgumentError("stft expects a 1-D signal; use stft_batch")
    if window is None:
        window = make_window("hann", window_size)
    if hop is None:
        hop = window.size // 2
    grid = stft_batch(x[None, :], window, hop)[0]
    return Spectrogram(grid, window.size, hop, x.shape[0], window.kind)


def stft_batch(X, window, hop):
    """Forward transform of a ``(n, L)`` batch; returns ``(n, M, K)`` complex."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidArgumentError("stft_batch expects a 2-D array")
    N = window.size
    _check_geometry(N, hop)
    n, L = X.shape
    if L < N:
        raise InvalidArgumentError(
            f"signal length {L} is shorter than the window ({N})")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("signal contains non-finite values")
    total = padded_length(L, N, hop)
    buf = np.zeros((n, total))
    buf[:, hop:hop + L] = X
    M = (total - N) // hop + 1
    idx = np.arange(M)[:, None] * hop + np.arange(N)[None, :]
    frames = buf[:, idx] * window.coefficients
    return np.fft.rfft(frames, axis=-1)


def istft(S, window=None):
    """Inverse of :func:`stft`, trimmed to the original length."""
    if not isinstance(S, Spectrogram):
        raise ReconstructionContractError(
            "istft needs a Spectrogram carrying its window geometry")
    if window is None:
        window = make_window(S.window_kind, S.window_size)
    if window.kind != S.window_kind or window.size != S.window_size:
        raise ReconstructionContractError(
            f"window {window.kind}/{window.size} does not match the analysis "
            f"window {S.window_kind}/{S.window_size}")
    return istft_batch(S.grid[None], window, S.hop, S.original_length)[0]


def istft_batch(grids, window, hop, length):
    """Inverse of :func:`stft_batch`.

    Each frame is resynthesised with the analysis window applied a second
    time and the overlap-added result is divided by the summed squared
    window, so modified grids are tapered smoothly at frame edges.
    """
    grids = np.asarray(grids)
    N = window.size
    _check_geometry(N, hop)
    if grids.ndim != 3 or grids.shape[-1] != N // 2 + 1:
        raise ReconstructionContractError(
            f"grid shape {grids.shape} is not (n, M, {N // 2 + 1})")
    M = grids.shape[1]
    if M != frame_count(length, N, hop):
        raise ReconstructionContractError(
            f"{M} frames cannot come from a length-{length} signal")
    frames = np.fft.irfft(grids, n=N, axis=-1) * window.coefficients
    total = padded_length(length, N, hop)
    out = np.zeros((grids.shape[0], total))
    # 50% overlap: even frames never overlap each other, nor do odd ones.
    for parity in (0, 1):
        sel = frames[:, parity::2]
        starts = np.arange(parity, M, 2) * hop
        pos = starts[:, None] + np.arange(N)[None, :]
        out[:, pos.ravel()] += sel.reshape(grids.shape[0], -1)
    env = synthesis_envelope(length, window)
    out /= np.maximum(env, ENVELOPE_EPS)
    return out[:, hop:hop + length]
