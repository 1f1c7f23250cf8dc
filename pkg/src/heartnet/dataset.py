"""Recording ingestion, 5-second segmentation and stratified splits.

Labels follow the PhysioNet/CinC 2016 layout: six source groups (A-F), each
split into Normal and Abnormal recordings, giving twelve class codes
``AA, AN, BA, BN, ..., FA, FN`` (group letter + condition initial).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)

GROUPS = ("A", "B", "C", "D", "E", "F")
CONDITIONS = ("Abnormal", "Normal")
CLASS_CODES = tuple(g + c[0] for g in GROUPS for c in CONDITIONS)
BINARY_CODES = ("Normal", "Abnormal")

SEGMENT_SECONDS = 5
TARGET_RATE = 2000
SEGMENT_LEN = SEGMENT_SECONDS * TARGET_RATE

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)

# Reference per-class counts for the 2016 corpus, used by the integration
# checks and the reproduction script.
CORPUS_RECORDINGS = dict(zip(CLASS_CODES, (117, 292, 386, 104, 7, 24, 27, 28, 1958, 183, 80, 34)))
CORPUS_SEGMENTS = dict(zip(CLASS_CODES, (738, 1852, 386, 104, 51, 240, 51, 87, 8129, 665, 502, 210)))


class DatasetError(Exception):
    """Base class for data ingestion failures."""


class ManifestError(DatasetError):
    def __init__(self, path, line: int, reason: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class MissingAudioError(DatasetError):
    def __init__(self, record_id: str, path):
        self.record_id = record_id
        super().__init__(f"record {record_id!r}: audio file not found: {path}")


class AudioFormatError(DatasetError):
    def __init__(self, record_id: str, reason: str):
        self.record_id = record_id
        super().__init__(f"record {record_id!r}: {reason}")


@dataclass(frozen=True, order=True)
class ClassLabel:
    group: str
    condition: str

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group {self.group!r}, expected one of {GROUPS}")
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}, expected one of {CONDITIONS}")

    @classmethod
    def from_code(cls, code: str) -> "ClassLabel":
        if code not in CLASS_CODES:
            raise ValueError(f"unknown class code {code!r}")
        cond = "Abnormal" if code[1] == "A" else "Normal"
        return cls(code[0], cond)

    @property
    def code(self) -> str:
        return self.group + self.condition[0]

    @property
    def index(self) -> int:
        return CLASS_CODES.index(self.code)

    @property
    def binary(self) -> str:
        return self.condition

    @property
    def binary_index(self) -> int:
        return BINARY_CODES.index(self.condition)

    def target(self, mode: str) -> int:
        """Integer class target under ``mode`` ('twelve' or 'binary')."""
        if mode == "twelve":
            return self.index
        if mode == "binary":
            return self.binary_index
        raise ValueError(f"unknown label mode {mode!r}")


def num_classes(mode: str) -> int:
    return {"twelve": 12, "binary": 2}[mode]


def class_names(mode: str) -> tuple[str, ...]:
    return CLASS_CODES if mode == "twelve" else BINARY_CODES


def binary_projection() -> np.ndarray:
    """Index map from the twelve class indices to the binary indices."""
    return np.array([ClassLabel.from_code(c).binary_index for c in CLASS_CODES])


def parse_condition(text: str) -> str:
    t = text.strip().lower()
    if t in ("abnormal", "a", "1"):
        return "Abnormal"
    if t in ("normal", "n", "-1", "0"):
        return "Normal"
    raise ValueError(f"unrecognised condition {text!r}")


@dataclass
class AudioRecording:
    id: str
    samples: np.ndarray
    sample_rate: int
    label: ClassLabel

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError(f"recording {self.id!r}: samples must be a non-empty 1-D array")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"recording {self.id!r}: sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class Segment:
    id: str
    source_id: str
    samples: np.ndarray
    label: ClassLabel
    degenerate: bool = False


@dataclass
class SplitPlan:
    seed: int
    train_ids: list[str]
    val_ids: list[str]
    test_ids: list[str]
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS
    by_recording: bool = False

    def sets(self) -> dict[str, list[str]]:
        return {"train": self.train_ids, "val": self.val_ids, "test": self.test_ids}

    def write(self, path) -> None:
        """Audit file: one ``set,segment_id`` row per segment."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["set", "segment_id"])
            for name, ids in self.sets().items():
                for sid in ids:
                    w.writerow([name, sid])

    @classmethod
    def read(cls, path, seed: int = -1) -> "SplitPlan":
        sets: dict[str, list[str]] = {"train": [], "val": [], "test": []}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                sets[row["set"]].append(row["segment_id"])
        return cls(seed, sets["train"], sets["val"], sets["test"])


# -- loading -----------------------------------------------------------------

def read_wav(path, record_id: str = "") -> tuple[np.ndarray, int]:
    """Decode a mono 16-bit PCM or 32-bit float WAV to floats in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise MissingAudioError(record_id, path) from None
    except ValueError as exc:
        raise AudioFormatError(record_id, f"cannot decode WAV: {exc}") from None
    if data.ndim != 1:
        raise AudioFormatError(record_id, f"expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(record_id, f"unsupported sample format {data.dtype}")
    return samples, int(rate)


def load_manifest(manifest_path, audio_dir) -> list[AudioRecording]:
    """Read ``record_id,group,condition`` rows and decode each ``<id>.wav``.

    Recordings are returned in manifest order.
    """
    manifest_path = Path(manifest_path)
    audio_dir = Path(audio_dir)
    rows = read_manifest(manifest_path)
    recs = []
    for record_id, label in rows:
        wav = audio_dir / f"{record_id}.wav"
        if not wav.exists():
            raise MissingAudioError(record_id, wav)
        samples, rate = read_wav(wav, record_id)
        if samples.size == 0:
            raise AudioFormatError(record_id, "empty audio")
        recs.append(AudioRecording(record_id, samples, rate, label))
    return recs


def read_manifest(manifest_path) -> list[tuple[str, ClassLabel]]:
    rows = []
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["record_id", "group", "condition"]:
            raise ManifestError(manifest_path, 1, "header must be 'record_id,group,condition'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ManifestError(manifest_path, line, f"expected 3 fields, got {len(row)}")
            rid, group, cond = (c.strip() for c in row)
            if not rid:
                raise ManifestError(manifest_path, line, "empty record_id")
            try:
                label = ClassLabel(group.upper(), parse_condition(cond))
            except ValueError as exc:
                raise ManifestError(manifest_path, line, str(exc)) from None
            rows.append((rid, label))
    return rows


def write_manifest(path, rows: Iterable[tuple[str, ClassLabel]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "group", "condition"])
        for rid, label in rows:
            w.writerow([rid, label.group, label.condition])


# -- segmentation ---------------------------------------------------------------

def segment_recording(rec: AudioRecording) -> list[Segment]:
    """Cut a 2 kHz recording into consecutive non-overlapping 5 s windows.

    A trailing remainder shorter than 5 s is dropped.
    """
    if rec.sample_rate != TARGET_RATE:
        raise ValueError(
            f"recording {rec.id!r} is at {rec.sample_rate} Hz; segment_recording needs {TARGET_RATE} Hz"
        )
    n = rec.samples.size // SEGMENT_LEN
    return [
        Segment(
            id=f"{rec.id}_{k:03d}",
            source_id=rec.id,
            samples=rec.samples[k * SEGMENT_LEN:(k + 1) * SEGMENT_LEN].copy(),
            label=rec.label,
        )
        for k in range(n)
    ]


# -- splitting -----------------------------------------------------------------

def split_counts(n: int) -> tuple[int, int, int]:
    """Per-class (train, val, test) sizes: floors for train/val, rest to test."""
    n_train = int(np.floor(SPLIT_FRACTIONS[0] * n + 1e-9))
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n + 1e-9))
    return n_train, n_val, n - n_train - n_val


def make_split(segments: Sequence[Segment], seed: int, *, by_recording: bool = False,
               mode: str = "twelve") -> SplitPlan:
    """Stratified 70/15/15 split, reproducible under ``seed``.

    Stratification runs over the twelve class codes (or the binary view when
    ``mode='binary'``). With ``by_recording=True`` whole recordings are
    assigned, so sibling segments never straddle sets; the fractions then
    apply to recording counts.
    """
    present = {s.label.target(mode) for s in segments}
    for idx, name in enumerate(class_names(mode)):
        if idx not in present:
            raise ValueError(f"class {name} has no segments; cannot stratify")

    # Sorted grouping keeps the plan independent of input order.
    units: dict[int, dict[str, list[str]]] = {}
    for s in segments:
        key = s.source_id if by_recording else s.id
        units.setdefault(s.label.target(mode), {}).setdefault(key, []).append(s.id)

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in sorted(units):
        keys = sorted(units[cls])
        order = rng.permutation(len(keys))
        n_tr, n_va, _ = split_counts(len(keys))
        for rank, i in enumerate(order):
            dest = train if rank < n_tr else val if rank < n_tr + n_va else test
            dest.extend(units[cls][keys[i]])
    return SplitPlan(seed, train, val, test, by_recording=by_recording)


# -- class weighting -------------------------------------------------------------

def class_weights(segments: Sequence[Segment], mode: str) -> np.ndarray:
    """Inverse-frequency weights ``N / (C * N_c)``, indexed by class target."""
    C = num_classes(mode)
    counts = np.bincount([s.label.target(mode) for s in segments], minlength=C)
    return weights_from_counts(counts, class_names(mode))


def weights_from_counts(counts, names: Sequence[str] | None = None) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        label = names[missing[0]] if names is not None else str(missing[0])
        raise ValueError(f"class {label} is absent; inverse-frequency weight undefined")
    return counts.sum() / (counts.size * counts.astype(np.float64))


@dataclass
class SegmentIndex:
    """Row metadata for a cached PSD batch (same order as the cache)."""

    segment_ids: list[str] = field(default_factory=list)
    source_ids: list[str] = field(default_factory=list)
    labels: list[ClassLabel] = field(default_factory=list)

    def __len__(self):
        return len(self.segment_ids)

    def append(self, seg: Segment) -> None:
        self.segment_ids.append(seg.id)
        self.source_ids.append(seg.source_id)
        self.labels.append(seg.label)

    def targets(self, mode: str) -> np.ndarray:
        return np.array([lab.target(mode) for lab in self.labels], dtype=np.int64)

    def as_segments(self) -> list[Segment]:
        """Sample-free Segment stubs, enough for splitting and weighting."""
        empty = np.empty(0)
        return [Segment(i, s, empty, lab) for i, s, lab in zip(self.segment_ids, self.source_ids, self.labels)]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["segment_id", "source_id", "label"])
            for row in zip(self.segment_ids, self.source_ids, (lab.code for lab in self.labels)):
                w.writerow(row)

    @classmethod
    def read(cls, path) -> "SegmentIndex":
        idx = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                idx.segment_ids.append(row["segment_id"])
                idx.source_ids.append(row["source_id"])
                idx.labels.append(ClassLabel.from_code(row["label"]))
        return idx
