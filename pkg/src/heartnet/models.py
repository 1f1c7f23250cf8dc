"""MBDCN, LSCN, 1D-CNN and MLP classifiers over Welch spectra.

Every builder returns a :class:`Model` whose ``forward`` maps a spectrum
batch (``(1, F, 1, B)`` or ``(1, F, B)``) to ``(B, num_classes)``
probabilities. Parameters are initialized from ``numpy.random.default_rng(seed)``
in construction order, so equal seeds give identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    LSTM,
    BatchNorm1d,
    Branches,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    MaxPool1d,
    Param,
    ReLU,
    Sequential,
    Softmax,
    ToSequence,
)
from .nn.checkpoint import CheckpointError, load_arrays, save_arrays

BRANCH_KERNELS = (3, 5, 9, 11)
BRANCH_WIDTHS = (32, 64)
FUSE_CHANNELS = 64
LSTM_UNITS = (600, 100)
CNN1D_CHANNELS = (22, 32, 64, 86)
MLP_WIDTHS = (512, 256, 128, 64, 32, 16)
DROPOUT_RATE = 0.2

MODEL_NAMES = ("mbdcn", "lscn", "cnn1d", "mlp")
TRANSFORMS = ("linear", "log")


def transform_features(x, kind: str):
    """``log``: log10 of the PSD, then zero-mean unit-std per spectrum."""
    if kind == "linear":
        return x
    if kind != "log":
        raise ValueError(f"unknown feature transform {kind!r}; choose from {TRANSFORMS}")
    z = np.log10(np.maximum(x, 1e-20))
    z = z - z.mean(axis=1, keepdims=True)
    return z / np.maximum(z.std(axis=1, keepdims=True), 1e-12)


@dataclass
class Model:
    name: str
    num_classes: int
    n_features: int
    seed: int
    net: Sequential
    dtype: type = np.float32
    info: dict = field(default_factory=dict)
    transform: str = "linear"

    def _prep(self, x):
        x = np.asarray(x)
        if x.ndim == 4:
            if x.shape[0] != 1 or x.shape[2] != 1:
                raise ValueError(f"expected a (1, F, 1, B) tensor, got {x.shape}")
            x = x[:, :, 0, :]
        if x.ndim != 3 or x.shape[:2] != (1, self.n_features):
            raise ValueError(f"expected input (1, {self.n_features}, B), got {x.shape}")
        return transform_features(x, self.transform).astype(self.dtype, copy=False)

    def forward(self, x, train: bool = False) -> np.ndarray:
        return self.net.forward(self._prep(x), train)

    __call__ = forward

    def logits(self, x, train: bool = False) -> np.ndarray:
        h = self._prep(x)
        for _, layer in self.net.layers[:-1]:
            h = layer.forward(h, train)
        return h

    def backward(self, grad_logits) -> np.ndarray:
        """Backprop a gradient taken w.r.t. the pre-softmax logits."""
        g = grad_logits
        for _, layer in reversed(self.net.layers[:-1]):
            g = layer.backward(g)
        return g

    def layer(self, path: str):
        node = self.net
        for part in path.split("."):
            children = dict(node.layers if isinstance(node, Sequential) else node.branches)
            node = children[part]
        return node

    def trunk(self, x, train: bool = False) -> np.ndarray:
        return self.layer("trunk").forward(self._prep(x), train)

    def params(self) -> dict[str, Param]:
        out = {}
        for path, layer in self.net.named_layers():
            for pname, p in layer.params().items():
                out[f"{path}.{pname}"] = p
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for path, layer in self.net.named_layers():
            for bname, b in layer.buffers().items():
                out[f"{path}.{bname}"] = b
        return out

    def n_params(self) -> int:
        return sum(p.data.size for p in self.params().values())

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [(k, p.data) for k, p in self.params().items()] + list(self.buffers().items())

    def load_state(self, entries) -> None:
        targets = {k: p.data for k, p in self.params().items()}
        targets.update(self.buffers())
        seen = set()
        for name, arr in entries:
            if name not in targets:
                raise CheckpointError(f"unexpected array {name!r} in checkpoint")
            if targets[name].shape != arr.shape:
                raise CheckpointError(f"{name}: shape {arr.shape} != model {targets[name].shape}")
            targets[name][...] = arr
            seen.add(name)
        missing = set(targets) - seen
        if missing:
            raise CheckpointError(f"checkpoint lacks {sorted(missing)[:3]}...")

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "num_classes": self.num_classes,
            "n_features": self.n_features,
            "seed": self.seed,
            "transform": self.transform,
            **self.info,
        }

    def save(self, path) -> None:
        """Binary checkpoint plus ``<path>.json`` descriptor sidecar."""
        save_arrays(path, self.state())
        with open(f"{path}.json", "w") as fh:
            json.dump(self.descriptor(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_model(path, expect: dict | None = None) -> Model:
    """Rebuild from the descriptor sidecar, then load weights.

    ``expect`` holds descriptor fields (name, num_classes, n_features) that
    must match; a mismatch refuses the load.
    """
    with open(f"{path}.json") as fh:
        desc = json.load(fh)
    if expect:
        for key, val in expect.items():
            if desc.get(key) != val:
                raise CheckpointError(f"checkpoint descriptor {key}={desc.get(key)!r}, expected {val!r}")
    model = build(desc["name"], desc["n_features"], desc["num_classes"], seed=desc["seed"],
                  transform=desc.get("transform", "linear"))
    model.load_state(load_arrays(path))
    return model


# -- builders ----------------------------------------------------------------

def _mb_trunk(F, rng, dtype, kernels, widths, fuse_channels):
    branches = []
    for k in kernels:
        layers, c_in = [], 1
        for j, w in enumerate(widths, start=1):
            layers += [
                (f"conv{j}", Conv1d(c_in, w, k, rng, dtype)),
                (f"bn{j}", BatchNorm1d(w, dtype)),
                (f"relu{j}", ReLU()),
            ]
            c_in = w
        branches.append((f"k{k}", Sequential(layers)))
    cat = len(kernels) * widths[-1]
    trunk = Sequential([
        ("branches", Branches(branches)),
        ("fuse", Conv1d(cat, fuse_channels, 3, rng, dtype)),
        ("fuse_relu", ReLU()),
        ("pool", MaxPool1d()),
    ])
    return trunk, cat


def _check_features(F, minimum, name):
    if F < minimum:
        raise ValueError(f"{name} needs at least {minimum} input features, got {F}")


def build_mbdcn(F: int, num_classes: int, seed: int = 0, dtype=np.float32,
                kernels=BRANCH_KERNELS, widths=BRANCH_WIDTHS, fuse_channels=FUSE_CHANNELS) -> Model:
    _check_features(F, 16, "MBDCN")
    rng = np.random.default_rng(seed)
    trunk, cat = _mb_trunk(F, rng, dtype, kernels, widths, fuse_channels)
    pooled = F // 2
    net = Sequential([
        ("trunk", trunk),
        ("flatten", Flatten()),
        ("fc", Dense(fuse_channels * pooled, num_classes, rng, dtype)),
        ("softmax", Softmax()),
    ])
    info = {"kernels": list(kernels), "branch_widths": list(widths), "depthcat_width": cat,
            "fuse_channels": fuse_channels, "pooled_length": pooled}
    return Model("mbdcn", num_classes, F, seed, net, dtype, info)


def build_lscn(F: int, num_classes: int, seed: int = 0, dtype=np.float32,
               lstm_units=LSTM_UNITS, dropout=DROPOUT_RATE,
               kernels=BRANCH_KERNELS, widths=BRANCH_WIDTHS, fuse_channels=FUSE_CHANNELS) -> Model:
    """MBDCN trunk, then the pooled positions read as a sequence by stacked LSTMs."""
    _check_features(F, 16, "LSCN")
    rng = np.random.default_rng(seed)
    trunk, cat = _mb_trunk(F, rng, dtype, kernels, widths, fuse_channels)
    layers = [("trunk", trunk), ("to_seq", ToSequence())]
    d_in = fuse_channels
    for j, units in enumerate(lstm_units, start=1):
        last = j == len(lstm_units)
        layers.append((f"lstm{j}", LSTM(d_in, units, rng, dtype, return_sequences=not last)))
        d_in = units
    layers += [
        ("dropout", Dropout(dropout, np.random.default_rng([seed, 1]))),
        ("fc", Dense(d_in, num_classes, rng, dtype)),
        ("softmax", Softmax()),
    ]
    info = {"kernels": list(kernels), "branch_widths": list(widths), "depthcat_width": cat,
            "fuse_channels": fuse_channels, "pooled_length": F // 2,
            "lstm_input_dim": fuse_channels, "lstm_units": list(lstm_units), "dropout": dropout}
    return Model("lscn", num_classes, F, seed, Sequential(layers), dtype, info)


def build_cnn1d(F: int, num_classes: int = 12, seed: int = 0, dtype=np.float32,
                channels=CNN1D_CHANNELS) -> Model:
    _check_features(F, 32, "CNN1D")
    rng = np.random.default_rng(seed)
    layers, c_in, L = [], 1, F
    for j, c in enumerate(channels, start=1):
        layers += [
            (f"conv{j}", Conv1d(c_in, c, 3, rng, dtype)),
            (f"relu{j}", ReLU()),
            (f"pool{j}", MaxPool1d()),
        ]
        c_in, L = c, L // 2
    layers += [
        ("flatten", Flatten()),
        ("fc", Dense(c_in * L, num_classes, rng, dtype)),
        ("softmax", Softmax()),
    ]
    info = {"channels": list(channels), "dense_input": c_in * L}
    return Model("cnn1d", num_classes, F, seed, Sequential(layers), dtype, info)


def build_mlp(F: int, num_classes: int, seed: int = 0, dtype=np.float32,
              widths=MLP_WIDTHS, dropout=DROPOUT_RATE) -> Model:
    _check_features(F, 1, "MLP")
    rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng([seed, 1])
    layers, d_in = [("flatten", Flatten())], F
    for j, w in enumerate(widths, start=1):
        layers += [
            (f"fc{j}", Dense(d_in, w, rng, dtype)),
            (f"relu{j}", ReLU()),
            (f"drop{j}", Dropout(dropout, drop_rng)),
        ]
        d_in = w
    layers += [("out", Dense(d_in, num_classes, rng, dtype)), ("softmax", Softmax())]
    info = {"widths": list(widths), "dropout": dropout}
    return Model("mlp", num_classes, F, seed, Sequential(layers), dtype, info)


BUILDERS = {"mbdcn": build_mbdcn, "lscn": build_lscn, "cnn1d": build_cnn1d, "mlp": build_mlp}


def build(name: str, F: int, num_classes: int, seed: int = 0, dtype=np.float32,
          transform: str = "linear") -> Model:
    try:
        builder = BUILDERS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}") from None
    if transform not in TRANSFORMS:
        raise ValueError(f"unknown feature transform {transform!r}; choose from {TRANSFORMS}")
    model = builder(F, num_classes, seed=seed, dtype=dtype)
    model.transform = transform
    return model
