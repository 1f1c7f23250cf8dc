"""Signal conditioning and Welch spectra for heart-sound segments.

Pipeline order is fixed: low-pass at the native rate, resample to 2 kHz,
segment, standardize each segment, then estimate its Welch PSD.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .dataset import TARGET_RATE, AudioRecording, Segment

PSD_MAGIC = b"PSD1"


@dataclass(frozen=True)
class FilterSpec:
    cutoff: float = 900.0
    order: int = 4
    design_rate: float = 44100.0
    kind: str = "lowpass-butterworth"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("filter order must be a positive integer")
        if not 0 < self.cutoff < self.design_rate / 2:
            raise ValueError(
                f"cutoff {self.cutoff} Hz must lie in (0, {self.design_rate / 2}) for rate {self.design_rate} Hz"
            )

    def sos(self) -> np.ndarray:
        return sps.butter(self.order, self.cutoff, btype="lowpass", fs=self.design_rate, output="sos")

    def response_db(self, freqs) -> np.ndarray:
        """Magnitude response of the designed filter in dB at ``freqs`` (Hz)."""
        _, h = sps.sosfreqz(self.sos(), worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=self.design_rate)
        return 20 * np.log10(np.maximum(np.abs(h), 1e-300))


@dataclass(frozen=True)
class WelchConfig:
    window_len: int = 256
    overlap: int = 128
    fft_len: int = 256
    sample_rate: float = TARGET_RATE
    window: str = "hamming"

    def __post_init__(self):
        if not 0 <= self.overlap < self.window_len <= self.fft_len:
            raise ValueError(
                f"need 0 <= overlap < window_len <= fft_len, got {self.overlap}, {self.window_len}, {self.fft_len}"
            )
        if self.window != "hamming":
            raise ValueError("only the Hamming window is supported")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    def n_frames(self, length: int) -> int:
        return 1 + (length - self.window_len) // (self.window_len - self.overlap)

    def taps(self) -> np.ndarray:
        # Symmetric Hamming window.
        return np.hamming(self.window_len)


@dataclass
class PowerSpectrum:
    psd: np.ndarray
    bin_width: float

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.psd.size) * self.bin_width


# -- conditioning ------------------------------------------------------------

def butterworth_lowpass(x, spec: FilterSpec) -> np.ndarray:
    """Causal (forward-only) Butterworth low-pass, same length as ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot filter an empty signal")
    return sps.sosfilt(spec.sos(), x)


def _phase_kernels(n_phases: int, taps: int, beta: float) -> np.ndarray:
    half = taps // 2
    offsets = np.arange(-half + 1, half + 1)  # input taps relative to floor(position)
    frac = np.arange(n_phases)[:, None] / n_phases
    t = offsets[None, :] - frac
    # Kaiser window evaluated at fractional positions.
    win = np.i0(beta * np.sqrt(np.clip(1 - (t / half) ** 2, 0, None))) / np.i0(beta)
    h = np.sinc(t) * win
    return h / h.sum(axis=1, keepdims=True)


def decimate(x, from_rate: int, to_rate: int, taps: int = 64, beta: float = 8.0) -> np.ndarray:
    """Rational-ratio downsampling by windowed-sinc interpolation.

    Each output sample ``k`` sits at input position ``k * from_rate / to_rate``
    and is interpolated from ``taps`` neighbouring inputs. The ratio's
    fractional positions repeat with period ``to_rate / gcd``, so only that
    many kernels (phases) are built. Kernels have unit sum, so constants pass
    exactly. No anti-alias filtering happens here: the input must already be
    band-limited below ``to_rate / 2``.
    """
    x = np.asarray(x, dtype=np.float64)
    from_rate, to_rate = int(from_rate), int(to_rate)
    if from_rate <= 0 or to_rate <= 0:
        raise ValueError("sample rates must be positive")
    if to_rate >= from_rate:
        raise ValueError(f"decimate needs to_rate < from_rate, got {from_rate} -> {to_rate}")
    if taps < 2 or taps % 2:
        raise ValueError("taps must be an even integer >= 2")
    g = gcd(from_rate, to_rate)
    up, down = to_rate // g, from_rate // g
    n_out = x.size * to_rate // from_rate
    if n_out == 0:
        return np.zeros(0)

    kernels = _phase_kernels(up, taps, beta)
    k = np.arange(n_out, dtype=np.int64)
    base = (k * down) // up
    phase = (k * down) % up
    half = taps // 2
    padded = np.pad(x, (half, half), mode="edge")
    idx = base[:, None] + np.arange(-half + 1, half + 1)[None, :] + half
    return np.einsum("kt,kt->k", padded[idx], kernels[phase])


def energy_normalize(x) -> tuple[np.ndarray, bool]:
    """Standardize to zero mean, unit (population) std.

    Returns ``(normalized, degenerate)``; a constant input gives the zero
    vector with ``degenerate=True``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("energy_normalize needs at least 2 samples")
    mu = x.mean()
    sigma = x.std()
    if sigma < 1e-12:
        return np.zeros_like(x), True
    out = (x - mu) / sigma
    # Second pass removes the O(eps) residual mean left by the first.
    out -= out.mean()
    return out, False


# -- spectra -------------------------------------------------------------------

def welch_psd(x, cfg: WelchConfig = WelchConfig()) -> PowerSpectrum:
    """One-sided Welch PSD: Hamming-windowed, overlapped periodograms, averaged."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("welch_psd expects a 1-D signal")
    if x.size < cfg.window_len:
        raise ValueError(f"signal of length {x.size} is shorter than window_len {cfg.window_len}")
    step = cfg.window_len - cfg.overlap
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[::step]
    w = cfg.taps()
    spec = np.fft.rfft(frames * w, n=cfg.fft_len, axis=-1)
    p = (spec.real ** 2 + spec.imag ** 2).mean(axis=0) / (cfg.sample_rate * np.sum(w ** 2))
    if cfg.fft_len % 2 == 0:
        p[1:-1] *= 2
    else:
        p[1:] *= 2
    return PowerSpectrum(p, cfg.sample_rate / cfg.fft_len)


def make_input_tensor(spectra: Sequence) -> np.ndarray:
    """Stack B spectra of length F into the (1, F, 1, B) network input."""
    vecs = [np.asarray(s.psd if isinstance(s, PowerSpectrum) else s, dtype=np.float64) for s in spectra]
    if not vecs:
        raise ValueError("empty spectrum batch")
    F = vecs[0].size
    for b, v in enumerate(vecs):
        if v.ndim != 1 or v.size != F:
            raise ValueError(f"ragged batch: spectrum {b} has shape {v.shape}, expected ({F},)")
    return np.stack(vecs, axis=-1).reshape(1, F, 1, len(vecs))


def extract_sample(tensor: np.ndarray, b: int) -> np.ndarray:
    return tensor[0, :, 0, b]


# -- cache ---------------------------------------------------------------------

def write_psd_cache(path, tensor: np.ndarray) -> None:
    """``magic | F u32 | B u32 | float64[F*B]``, little-endian, row-major (F, B)."""
    _, F, _, B = tensor.shape
    with open(path, "wb") as fh:
        fh.write(PSD_MAGIC)
        fh.write(struct.pack("<II", F, B))
        fh.write(np.ascontiguousarray(tensor.reshape(F, B), dtype="<f8").tobytes())


def read_psd_cache(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != PSD_MAGIC:
        raise ValueError(f"{path}: not a PSD cache (bad magic {raw[:4]!r})")
    F, B = struct.unpack("<II", raw[4:12])
    body = raw[12:]
    if len(body) != 8 * F * B:
        raise ValueError(f"{path}: truncated cache, expected {8 * F * B} data bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(1, F, 1, B).astype(np.float64)


# -- pipeline ------------------------------------------------------------------

def condition_recording(rec: AudioRecording, cutoff: float = 900.0, order: int = 4,
                        to_rate: int = TARGET_RATE) -> AudioRecording:
    """Low-pass at the native rate, then resample to ``to_rate``."""
    if rec.sample_rate < to_rate:
        raise ValueError(f"recording {rec.id!r} at {rec.sample_rate} Hz is below the {to_rate} Hz target")
    spec = FilterSpec(cutoff=cutoff, order=order, design_rate=rec.sample_rate)
    y = butterworth_lowpass(rec.samples, spec)
    if rec.sample_rate != to_rate:
        y = decimate(y, rec.sample_rate, to_rate)
    return AudioRecording(rec.id, y, to_rate, rec.label)


def segment_spectrum(seg: Segment, cfg: WelchConfig = WelchConfig()) -> PowerSpectrum | None:
    """Normalize a segment in place and return its PSD, or None if degenerate."""
    seg.samples, seg.degenerate = energy_normalize(seg.samples)
    if seg.degenerate:
        return None
    return welch_psd(seg.samples, cfg)
