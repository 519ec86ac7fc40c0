"""Softmax-linear and one-hidden-layer (tanh) classifiers trained by mini-batch SGD.

The inner training loop runs in a backend kernel (compiled when available,
numpy otherwise, see ``_backend``). Everything else here is plain numpy.
"""

import json
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from ._util import digest_arrays, rng, write_atomic
from .errors import DataError, DivergenceError, InvalidArgument

_ARCH_RE = re.compile(r"^\s*(softmax|mlp)\s*(?:\(\s*(\d+)\s*\))?\s*$")


@dataclass(frozen=True)
class TrainConfig:
    architecture: str = "mlp"
    hidden_width: int = 32
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ("softmax", "mlp"):
            raise InvalidArgument(f"architecture must be 'softmax' or 'mlp', got {self.architecture!r}")
        if self.architecture == "mlp" and int(self.hidden_width) < 1:
            raise InvalidArgument("hidden_width must be >= 1")
        if int(self.epochs) < 1:
            raise InvalidArgument("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise InvalidArgument("batch_size must be >= 1")
        # lr == 0 is allowed: it leaves parameters at their initialization
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise InvalidArgument("learning_rate must be finite and >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidArgument("momentum must lie in [0, 1)")
        if not self.weight_init_scale >= 0:
            raise InvalidArgument("weight_init_scale must be >= 0")

    @property
    def arch_tag(self):
        return "softmax" if self.architecture == "softmax" else f"mlp({self.hidden_width})"

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return TrainConfig(**values)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        if "architecture" in obj:
            arch, width = parse_arch(obj["architecture"])
            obj["architecture"] = arch
            if width is not None:
                obj["hidden_width"] = width
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise InvalidArgument(f"unknown training options: {sorted(unknown)}")
        return cls(**obj)


def parse_arch(text):
    """'softmax' -> ('softmax', None); 'mlp(16)' -> ('mlp', 16)."""
    m = _ARCH_RE.match(str(text))
    if not m:
        raise InvalidArgument(f"cannot parse architecture {text!r}")
    return m.group(1), (int(m.group(2)) if m.group(2) else None)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Trained weights. ``arrays`` is (W, b) or (W1, b1, W2, b2)."""

    architecture: str
    arrays: tuple
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        arrays = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in self.arrays)
        expected = 2 if self.architecture == "softmax" else 4
        if len(arrays) != expected:
            raise InvalidArgument(f"{self.architecture} needs {expected} arrays, got {len(arrays)}")
        for W, b in zip(arrays[::2], arrays[1::2]):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise InvalidArgument("inconsistent weight/bias shapes")
        if len(arrays) == 4 and arrays[2].shape[0] != arrays[0].shape[1]:
            raise InvalidArgument("hidden widths disagree")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidArgument("parameters must be finite")
        object.__setattr__(self, "arrays", arrays)

    @property
    def input_dim(self):
        return self.arrays[0].shape[0]

    @property
    def class_count(self):
        return self.arrays[-1].shape[0]

    @property
    def final_loss(self):
        return self.history[-1][0] if self.history else None

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.architecture == other.architecture
                and all(np.array_equal(a, b) for a, b in zip(self.arrays, other.arrays)))

    __hash__ = None

    def digest(self):
        return digest_arrays(*self.arrays)

    def to_json(self):
        return {
            "architecture": self.architecture,
            "shapes": [list(a.shape) for a in self.arrays],
            "arrays": [a.ravel().tolist() for a in self.arrays],
        }

    @classmethod
    def from_json(cls, obj):
        arrays = [np.asarray(v, dtype=np.float64).reshape(shape)
                  for v, shape in zip(obj["arrays"], obj["shapes"])]
        return cls(obj["architecture"], tuple(arrays))


def save_params(params, path):
    write_atomic(path, json.dumps(params.to_json()) + "\n")


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        return ModelParams.from_json(json.load(fh))


def save_curve(params, path):
    """Per-epoch training curve as ``epoch,loss,acc``."""
    lines = ["epoch,loss,acc"]
    lines += [f"{e},{loss!r},{acc!r}" for e, (loss, acc) in enumerate(params.history, start=1)]
    write_atomic(path, "\n".join(lines) + "\n")


def init_params(dim, class_count, config):
    """Uniform in [-s, s] with s = weight_init_scale / sqrt(fan_in); zero biases."""
    g = rng(config.seed, 3)
    if config.architecture == "softmax":
        shapes = [(dim, class_count)]
    else:
        shapes = [(dim, config.hidden_width), (config.hidden_width, class_count)]
    arrays = []
    for fan_in, fan_out in shapes:
        s = config.weight_init_scale / math.sqrt(fan_in)
        arrays.append(g.uniform(-s, s, size=(fan_in, fan_out)))
        arrays.append(np.zeros(fan_out))
    return ModelParams(config.architecture, tuple(arrays))


def fit(features, labels, class_count, config, backend=None):
    """Train on raw arrays; returns :class:`ModelParams` with a per-epoch history.

    ``backend`` picks the kernel implementation by name; default is whichever
    was selected at import.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    n = X.shape[0]
    if n < 1:
        raise DataError("cannot train on an empty sample set")
    kern = _backend.kernels if backend is None else _backend.load(backend)
    arrays = [a.copy() for a in init_params(X.shape[1], class_count, config).arrays]
    velocity = [np.zeros_like(a) for a in arrays]
    epoch_fn = kern.softmax_epoch if config.architecture == "softmax" else kern.mlp_epoch
    shuffles = rng(config.seed, 4)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = shuffles.permutation(n).astype(np.int64)
        total, correct, bad = epoch_fn(*arrays, *velocity, X, y, order,
                                       int(config.batch_size), float(config.learning_rate),
                                       float(config.momentum))
        if bad >= 0:
            raise DivergenceError(epoch, bad)
        # Per-batch losses can all be finite while their sum, or the
        # parameters after the epoch's last update, are not.
        if not np.isfinite(total) or not all(np.isfinite(a).all() for a in arrays):
            raise DivergenceError(epoch, -(-n // config.batch_size) - 1)
        history.append((total / n, correct / n))
    return ModelParams(config.architecture, tuple(arrays), tuple(history))


def train(dataset, config, indices=None, backend=None):
    """Train a fresh model on ``dataset`` (or the rows in ``indices``)."""
    if indices is None:
        X, y = dataset.features, dataset.labels
    else:
        idx = np.asarray(indices, dtype=np.int64)
        X, y = dataset.features[idx], dataset.labels[idx]
    return fit(X, y, dataset.class_count, config, backend=backend)


def logits(params, features):
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != params.input_dim:
        raise InvalidArgument(f"expected {params.input_dim} features, got {X.shape[-1]}")
    a = params.arrays
    if params.architecture == "softmax":
        return X @ a[0] + a[1]
    return np.tanh(X @ a[0] + a[1]) @ a[2] + a[3]


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    zmax = z.max(axis=-1, keepdims=True)
    return z - (zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True)))


def predict_proba(params, features):
    """Class probabilities for one feature vector ``(d,)`` or a batch ``(n, d)``."""
    return np.exp(log_softmax(logits(params, features)))


def predict(params, features):
    return logits(params, features).argmax(axis=-1)


def loss(params, features, labels):
    """Cross-entropy ``-ln p_y`` per sample, evaluated in log space."""
    lp = log_softmax(logits(params, features))
    y = np.asarray(labels, dtype=np.int64)
    if lp.ndim == 1:
        return float(-lp[int(y)])
    return -np.take_along_axis(lp, y[:, None], axis=1)[:, 0]


def batch_gradient(params, features, labels, backend=None):
    """Mean loss and mean parameter gradients from the training kernel."""
    kern = _backend.kernels if backend is None else _backend.load(backend)
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise InvalidArgument("features must be (n, d) with one label per row")
    if y.size and (y.min() < 0 or y.max() >= params.class_count):
        raise InvalidArgument(f"labels must lie in 0..{params.class_count - 1}")
    fn = kern.softmax_grad if params.architecture == "softmax" else kern.mlp_grad
    mean_loss, _, grads = fn(*params.arrays, X, y)
    return mean_loss, grads


def gradient_check(config, features, labels, class_count, params=None, step=1e-5,
                   floor=1e-6, backend=None):
    """Max relative gap between kernel gradients and central finite differences.

    The relative gap per entry is ``|a - f| / max(|a|, |f|, floor)``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if params is None:
        params = init_params(X.shape[1], class_count, config)
    _, grads = batch_gradient(params, X, y, backend=backend)
    arrays = [a.copy() for a in params.arrays]

    def mean_loss():
        return float(np.mean(loss(ModelParams(params.architecture, tuple(arrays)), X, y)))

    worst = 0.0
    for a, g in zip(arrays, grads):
        flat = a.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = mean_loss()
            flat[i] = orig - step
            down = mean_loss()
            flat[i] = orig
            fd = (up - down) / (2 * step)
            rel = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), floor)
            worst = max(worst, rel)
    return worst
