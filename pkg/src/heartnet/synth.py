"""Synthetic two-class corpora: band-limited tones vs. filtered noise.

Used by the end-to-end checks and the demo script; the two classes separate
cleanly in Welch-PSD space (sharp lines vs. a smooth noise band).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .dataset import AudioRecording, ClassLabel, Segment, SEGMENT_LEN, TARGET_RATE, write_manifest

TONE_LABEL = ClassLabel("A", "Abnormal")
NOISE_LABEL = ClassLabel("A", "Normal")


def tone_signal(n: int, rate: float, rng, n_tones: int | None = None) -> np.ndarray:
    t = np.arange(n) / rate
    k = n_tones or int(rng.integers(1, 4))
    x = np.zeros(n)
    for _ in range(k):
        f = rng.uniform(40.0, 400.0)
        x += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x + 0.1 * rng.standard_normal(n)


def noise_signal(n: int, rate: float, rng) -> np.ndarray:
    lo = rng.uniform(20.0, 150.0)
    hi = lo + rng.uniform(100.0, 350.0)
    sos = sps.butter(4, [lo, hi], btype="bandpass", fs=rate, output="sos")
    return sps.sosfilt(sos, rng.standard_normal(n + 2000))[2000:]


def synthetic_segments(n: int, seed: int = 0, rate: int = TARGET_RATE) -> list[Segment]:
    """``n`` raw 5 s segments alternating tone / noise classes."""
    rng = np.random.default_rng(seed)
    segs = []
    for i in range(n):
        if i % 2 == 0:
            x, lab = tone_signal(SEGMENT_LEN, rate, rng), TONE_LABEL
        else:
            x, lab = noise_signal(SEGMENT_LEN, rate, rng), NOISE_LABEL
        segs.append(Segment(f"syn{i:05d}_000", f"syn{i:05d}", x, lab))
    return segs


def synthetic_recordings(n: int, seconds: float, rate: int, seed: int = 0,
                         labels=(TONE_LABEL, NOISE_LABEL)) -> list[AudioRecording]:
    rng = np.random.default_rng(seed)
    recs = []
    m = int(round(seconds * rate))
    for i in range(n):
        lab = labels[i % len(labels)]
        x = tone_signal(m, rate, rng) if lab.condition == "Abnormal" else noise_signal(m, rate, rng)
        x = 0.5 * x / np.max(np.abs(x))
        recs.append(AudioRecording(f"rec{i:04d}", x, rate, lab))
    return recs


def write_corpus(directory, recordings: list[AudioRecording], float_wav: bool = False) -> tuple[Path, Path]:
    """Write ``<id>.wav`` files (16-bit PCM unless ``float_wav``) plus manifest.csv."""
    directory = Path(directory)
    audio = directory / "audio"
    audio.mkdir(parents=True, exist_ok=True)
    for rec in recordings:
        if float_wav:
            data = rec.samples.astype(np.float32)
        else:
            data = np.clip(np.round(rec.samples * 32767), -32768, 32767).astype(np.int16)
        wavfile.write(audio / f"{rec.id}.wav", rec.sample_rate, data)
    manifest = directory / "manifest.csv"
    write_manifest(manifest, [(r.id, r.label) for r in recordings])
    return manifest, audio


def synthetic_experiment(model_name: str = "lscn", n: int = 400, seed: int = 0, epochs: int = 10,
                         lr: float = 0.01, batch_size: int = 64):
    """Preprocess ``n`` synthetic segments, split 70/15/15 and train a binary model.

    Returns ``(model, result)``; ``result.best_val_acc`` is the headline number.
    """
    from .dsp import make_input_tensor, segment_spectrum
    from .dataset import SegmentIndex, make_split
    from .models import build
    from .training import fit

    segs = synthetic_segments(n, seed=seed)
    spectra = [segment_spectrum(s) for s in segs]
    X = make_input_tensor(spectra)
    index = SegmentIndex()
    for s in segs:
        index.append(s)
    y = index.targets("binary")
    plan = make_split(segs, seed, mode="binary")
    pos = {sid: i for i, sid in enumerate(index.segment_ids)}
    tr = [pos[i] for i in plan.train_ids]
    va = [pos[i] for i in plan.val_ids]
    model = build(model_name, X.shape[1], 2, seed=seed, transform="log")
    result = fit(model, X[..., tr], y[tr], X[..., va], y[va], epochs=epochs, lr=lr,
                 batch_size=batch_size, seed=seed)
    return model, result
