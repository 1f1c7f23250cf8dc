import hashlib
from pathlib import Path

import pytest

from heartnet.dataset import CLASS_CODES, ClassLabel
from heartnet.synth import synthetic_recordings, write_corpus


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_config(directory, **values) -> Path:
    path = Path(directory) / "run.cfg"
    lines = ["# test run"] + [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def binary_corpus(tmp_path_factory):
    """40 recordings of 12 s at 4 kHz: tones (Abnormal) vs. filtered noise (Normal)."""
    root = tmp_path_factory.mktemp("binary_corpus")
    write_corpus(root, synthetic_recordings(40, 12.0, 4000, seed=1))
    return root


@pytest.fixture(scope="session")
def twelve_corpus(tmp_path_factory):
    """Three 12 s recordings per class code."""
    root = tmp_path_factory.mktemp("twelve_corpus")
    labels = [ClassLabel.from_code(c) for c in CLASS_CODES]
    write_corpus(root, synthetic_recordings(36, 12.0, 2000, seed=2, labels=labels))
    return root
