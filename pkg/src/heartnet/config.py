"""Run configuration: a flat ``key = value`` text file with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


PATH_KEYS = ("manifest", "audio_dir", "out", "cache", "index")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    manifest: str = "manifest.csv"
    audio_dir: str = "audio"
    out: str = "runs/default"
    cache: str = ""          # defaults to <out>/psd_cache.bin
    index: str = ""          # defaults to <out>/segments.csv
    model: str = "lscn"
    classes: int = 12
    seed: int = 0
    epochs: int = 40
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    class_weighting: bool = False
    split_by_recording: bool = False
    folds: int = 5
    fixed_split: bool = False
    averaging: str = "macro"
    filter_cutoff: float = 900.0
    filter_order: int = 4
    target_rate: int = 2000
    welch_window: int = 256
    welch_overlap: int = 128
    welch_fft: int = 256
    skip_bad: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch normalization needs two samples)")
        if self.classes not in (12, 2):
            raise ConfigError(f"classes must be 12 or 2, got {self.classes}")
        if self.model not in ("mbdcn", "lscn", "cnn1d", "mlp"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.folds < 1:
            raise ConfigError("folds must be >= 1")
        if self.averaging not in ("macro", "weighted"):
            raise ConfigError("averaging must be 'macro' or 'weighted'")

    @property
    def label_mode(self) -> str:
        return "twelve" if self.classes == 12 else "binary"

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def cache_path(self) -> Path:
        return Path(self.cache) if self.cache else self.out_dir / "psd_cache.bin"

    @property
    def index_path(self) -> Path:
        return Path(self.index) if self.index else self.out_dir / "segments.csv"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = ["# resolved run configuration"]
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in PATH_KEYS and v:
                v = Path(v).absolute()  # the snapshot must not depend on where it is written
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def snapshot(self, directory) -> Path:
        path = Path(directory) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path


def _coerce(name: str, typ, raw: str):
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {typ}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, types[key], raw)
    return values


def load_config(path=None, **overrides) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values = parse_config(p.read_text(), str(p))
        base = p.parent
        # Relative paths in a config file resolve against the file's directory.
        for key in PATH_KEYS:
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
