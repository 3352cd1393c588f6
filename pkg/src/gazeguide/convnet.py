"""A small dense-tensor CNN with exact backpropagation and SGD with momentum.

Tensors are float64 numpy arrays in NCHW layout.  Layers own their
parameters (``W``, ``b``), a ``frozen`` flag and a learn-rate factor.  The
network keeps every layer output from a forward pass so that both
backpropagation and GradCAM can reuse it.
"""

from __future__ import annotations

import copy
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Conv",
    "ReLU",
    "MaxPool",
    "Dense",
    "Network",
    "ActivationRecord",
    "TrainConfig",
    "TrainingDivergence",
    "EarlyStopping",
    "default_network",
    "softmax_cross_entropy",
    "loss_and_grads",
    "sgdm_step",
    "train_network",
    "fine_tune",
    "evaluate_accuracy",
    "stratified_split",
    "save_model",
    "load_model",
    "write_history",
]

log = logging.getLogger(__name__)

sliding_window_view = np.lib.stride_tricks.sliding_window_view


class TrainingDivergence(FloatingPointError):
    """Loss became NaN/Inf during training."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


# --- layers -------------------------------------------------------------------

class Layer:
    kind = "layer"
    has_params = False

    def __init__(self, frozen: bool = False, lr_factor: float = 1.0):
        self.frozen = frozen
        self.lr_factor = lr_factor
        self.params: dict[str, np.ndarray] = {}

    def build(self, in_shape, rng):
        return in_shape

    def spec_line(self) -> str:
        raise NotImplementedError


class Conv(Layer):
    kind = "conv"
    has_params = True

    def __init__(self, out_channels: int, kernel: int, stride: int = 1, pad: int = 0, **kw):
        super().__init__(**kw)
        self.out_channels, self.kernel, self.stride, self.pad = out_channels, kernel, stride, pad

    def build(self, in_shape, rng):
        c, h, w = in_shape
        k, s, p = self.kernel, self.stride, self.pad
        ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"conv kernel {k} does not fit input {in_shape}")
        fan_in = c * k * k
        self.params = {
            "W": rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(self.out_channels, c, k, k)),
            "b": np.zeros(self.out_channels),
        }
        return (self.out_channels, ho, wo)

    def _cols(self, x):
        p, k, s = self.pad, self.kernel, self.stride
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        return cols, (n, c, ho, wo, x.shape)

    def forward(self, x):
        cols, geom = self._cols(x)
        n, _, ho, wo, _ = geom
        W = self.params["W"]
        y = cols @ W.reshape(W.shape[0], -1).T + self.params["b"]
        return y.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2), (cols, geom)

    def backward(self, dy, cache, need_dx=True):
        cols, (n, c, ho, wo, padded_shape) = cache
        W = self.params["W"]
        o, k, s, p = W.shape[0], self.kernel, self.stride, self.pad
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, o)
        grads = {"W": (dy2.T @ cols).reshape(W.shape), "b": dy2.sum(axis=0)}
        if not need_dx:
            return None, grads
        dcols = (dy2 @ W.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros(padded_shape)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return dxp, grads

    def spec_line(self):
        return f"conv {self.out_channels} {self.kernel} {self.stride} {self.pad}"


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, mask, need_dx=True):
        return dy * mask, {}

    def spec_line(self):
        return "relu"


class MaxPool(Layer):
    kind = "pool"

    def __init__(self, kernel: int = 2, stride: int = 2, **kw):
        super().__init__(**kw)
        self.kernel, self.stride = kernel, stride

    def build(self, in_shape, rng):
        c, h, w = in_shape
        k, s = self.kernel, self.stride
        return (c, (h - k) // s + 1, (w - k) // s + 1)

    def forward(self, x):
        k, s = self.kernel, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        flat = win.reshape(n, c, ho, wo, k * k)
        # argmax picks the first maximum on ties, which fixes the gradient route
        idx = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, dy, cache, need_dx=True):
        idx, in_shape = cache
        n, c, h, w = in_shape
        k, s = self.kernel, self.stride
        _, _, ho, wo = idx.shape
        rows = (np.arange(ho) * s)[None, None, :, None] + idx // k
        cols = (np.arange(wo) * s)[None, None, None, :] + idx % k
        flat = ((np.arange(n)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * h + rows) * w + cols
        dx = np.zeros(n * c * h * w)
        np.add.at(dx, flat.ravel(), dy.ravel())
        return dx.reshape(in_shape), {}

    def spec_line(self):
        return f"pool {self.kernel} {self.stride}"


class Dense(Layer):
    kind = "dense"
    has_params = True

    def __init__(self, units: int, **kw):
        super().__init__(**kw)
        self.units = units

    def build(self, in_shape, rng):
        fan_in = int(np.prod(in_shape))
        self.params = {
            "W": rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(self.units, fan_in)),
            "b": np.zeros(self.units),
        }
        return (self.units,)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        return flat @ self.params["W"].T + self.params["b"], (flat, x.shape)

    def backward(self, dy, cache, need_dx=True):
        flat, in_shape = cache
        grads = {"W": dy.T @ flat, "b": dy.sum(axis=0)}
        if not need_dx:
            return None, grads
        return (dy @ self.params["W"]).reshape(in_shape), grads

    def spec_line(self):
        return f"dense {self.units}"


# --- network ------------------------------------------------------------------

@dataclass
class ActivationRecord:
    """Outputs of every layer (``outputs[i]`` is layer *i*'s output) plus the
    backprop caches.  ``outputs[-1]`` are the logits."""

    inputs: np.ndarray
    outputs: list[np.ndarray]
    caches: list
    start: int = 0


class Network:
    def __init__(self, input_shape: Sequence[int], layers: Sequence[Layer], seed: int = 0):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.layers = list(layers)
        rng = np.random.default_rng(seed)
        self.shapes = [self.input_shape]
        for layer in self.layers:
            self.shapes.append(tuple(layer.build(self.shapes[-1], rng)))
        if len(self.shapes[-1]) != 1:
            raise ValueError("network must end in a Dense layer")

    @property
    def num_outputs(self) -> int:
        return self.shapes[-1][0]

    def conv_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Conv)]

    def forward(self, x, start: int = 0, stop: int | None = None) -> tuple[ActivationRecord, np.ndarray]:
        """Run layers ``start..stop-1``; ``x`` must be the input to layer ``start``."""
        x = np.asarray(x, dtype=np.float64)
        stop = len(self.layers) if stop is None else stop
        expected = self.shapes[start]
        if x.shape[1:] != expected:
            name = "network input" if start == 0 else f"layer {start} ({self.layers[start].kind})"
            raise ValueError(f"{name}: expected shape (N, {', '.join(map(str, expected))}), got {x.shape}")
        outputs, caches = [], []
        h = x
        for layer in self.layers[start:stop]:
            h, cache = layer.forward(h)
            outputs.append(h)
            caches.append(cache)
        return ActivationRecord(x, outputs, caches, start), h

    def backward(self, record: ActivationRecord, dout, stop_at: int | None = None,
                 include_frozen: bool = False):
        """Backpropagate ``dout``, the gradient w.r.t. the last recorded output.

        Returns ``(grads, d)``.  ``grads[j]`` holds the parameter gradients of
        layer ``record.start + j`` (``None`` for parameter-free or frozen
        layers unless ``include_frozen``).  With ``stop_at`` the pass halts
        early and ``d`` is the gradient w.r.t. the output of layer
        ``stop_at``; otherwise ``d`` is ``None``.
        """
        n_rec = len(record.outputs)
        grads: list = [None] * n_rec
        lo = record.start if stop_at is None else stop_at + 1
        d = dout
        for li in range(record.start + n_rec - 1, lo - 1, -1):
            j = li - record.start
            layer = self.layers[li]
            need_dx = li > lo or stop_at is not None
            dx, g = layer.backward(d, record.caches[j], need_dx=need_dx)
            if layer.has_params and (include_frozen or not layer.frozen):
                grads[j] = g
            d = dx
        return grads, (d if stop_at is not None else None)

    def predict_logits(self, x, batch_size: int = 256, start: int = 0) -> np.ndarray:
        out = []
        for i in range(0, len(x), batch_size):
            out.append(self.forward(x[i:i + batch_size], start=start)[1])
        if not out:
            return np.zeros((0, self.num_outputs))
        return np.concatenate(out)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def param_items(self):
        for i, layer in enumerate(self.layers):
            for name in ("W", "b"):
                if name in layer.params:
                    yield i, name, layer.params[name]


def default_network(num_categories: int, input_shape=(3, 32, 32), seed: int = 0,
                    hidden: int = 64) -> Network:
    """Conv(16,5)-ReLU-Pool-Conv(32,3)-ReLU-Pool-Conv(32,3)-ReLU-Dense(64)-ReLU-Dense(C)."""
    layers = [
        Conv(16, 5, 1, 2), ReLU(), MaxPool(2, 2),
        Conv(32, 3, 1, 1), ReLU(), MaxPool(2, 2),
        Conv(32, 3, 1, 1), ReLU(),
        Dense(hidden), ReLU(),
        Dense(num_categories),
    ]
    return Network(input_shape, layers, seed=seed)


# --- loss / optimizer -----------------------------------------------------------

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return float(loss), d / n


def loss_and_grads(net: Network, batch, labels, start: int = 0, include_frozen: bool = False):
    """Mean softmax cross-entropy and per-layer parameter gradients.

    ``grads`` is indexed by absolute layer index; entries are ``None`` for
    parameter-free layers, frozen layers and layers before ``start``.
    """
    record, logits = net.forward(batch, start=start)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite loss {loss}")
    rel, _ = net.backward(record, dlogits, include_frozen=include_frozen)
    grads = [None] * start + rel
    return loss, grads


def sgdm_step(net: Network, grads, velocities, base_lr: float, momentum: float = 0.9):
    """In-place SGD with momentum: ``v <- m*v - lr*factor*g``; ``w <- w + v``.

    ``velocities`` is a dict keyed by ``(layer_index, param_name)``; it is
    updated in place and returned.  Frozen layers are never touched.
    """
    for i, layer in enumerate(net.layers):
        if layer.frozen or not layer.has_params or grads[i] is None:
            continue
        lr = base_lr * layer.lr_factor
        for name, g in grads[i].items():
            v = velocities.get((i, name))
            v = -lr * g if v is None else momentum * v - lr * g
            velocities[(i, name)] = v
            layer.params[name] = layer.params[name] + v
    return velocities


# --- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 42
    base_lr: float = 1e-4
    momentum: float = 0.9
    max_epochs: int = 30
    patience: int = 5
    val_fraction: float = 0.15
    min_delta: float = 1e-4
    head_lr_factor: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")


class EarlyStopping:
    """Stop once validation loss fails to improve by ``min_delta`` for
    ``patience`` consecutive epochs; remembers the best epoch."""

    def __init__(self, patience: int = 5, min_delta: float = 1e-4):
        self.patience, self.min_delta = patience, min_delta
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Return ``(improved, stop)`` after recording ``val_loss``."""
        if val_loss < self.best - self.min_delta:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


@dataclass
class History:
    rows: list = field(default_factory=list)  # (epoch, train_loss, val_loss, val_acc)
    best_epoch: int = 0
    stopped_epoch: int = 0


def stratified_split(labels, val_fraction: float, rng):
    """Shuffle each category and hold out ``round(val_fraction*n)`` (>= 1)."""
    labels = np.asarray(labels)
    train, val = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_val = min(max(1, int(np.floor(val_fraction * idx.size + 0.5))), idx.size - 1)
        val.extend(idx[:n_val])
        train.extend(idx[n_val:])
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(val), dtype=np.int64)


def _first_trainable(net: Network) -> int:
    for i, layer in enumerate(net.layers):
        if layer.has_params and not layer.frozen:
            return i
    raise ValueError("network has no trainable layers")


def train_network(net: Network, x, y, config: TrainConfig, *, rng=None,
                  split=None) -> History:
    """Train in place with SGDM and early stopping; restores the best weights.

    The output of the frozen leading layers is computed once and reused,
    which is exact because frozen layers never change and no augmentation
    is applied.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    y = np.asarray(y, dtype=np.int64)
    train_idx, val_idx = split if split is not None else stratified_split(y, config.val_fraction, rng)
    start = _first_trainable(net)
    if start:
        feats = np.concatenate([net.forward(x[i:i + 256], stop=start)[1]
                                for i in range(0, len(x), 256)])
    else:
        feats = np.asarray(x, dtype=np.float64)

    history = History()
    stopper = EarlyStopping(config.patience, config.min_delta)
    best = [dict((k, v.copy()) for k, v in layer.params.items()) for layer in net.layers]
    velocities: dict = {}
    for epoch in range(1, config.max_epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        losses = []
        for b in range(0, order.size, config.batch_size):
            idx = order[b:b + config.batch_size]
            try:
                loss, grads = loss_and_grads(net, feats[idx], y[idx], start=start)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"training diverged in epoch {epoch}: {exc}", epoch) from None
            sgdm_step(net, grads, velocities, config.base_lr, config.momentum)
            losses.append(loss * idx.size)
        train_loss = float(np.sum(losses) / order.size)
        val_logits = net.predict_logits(feats[val_idx], start=start)
        val_loss, _ = softmax_cross_entropy(val_logits, y[val_idx])
        if not np.isfinite(val_loss):
            raise TrainingDivergence(f"validation loss diverged in epoch {epoch}", epoch)
        val_acc = float(np.mean(val_logits.argmax(axis=1) == y[val_idx]))
        history.rows.append((epoch, train_loss, val_loss, val_acc))
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            best = [dict((k, v.copy()) for k, v in layer.params.items()) for layer in net.layers]
        history.stopped_epoch = epoch
        if stop:
            break
    for layer, params in zip(net.layers, best):
        layer.params = params
    history.best_epoch = stopper.best_epoch
    return history


def fine_tune(base_net: Network, x, y, config: TrainConfig | None = None,
              num_categories: int | None = None) -> tuple[Network, History]:
    """Transfer-learn a copy of ``base_net`` on ``(x, y)``.

    The final Dense layer is replaced by a freshly initialized one sized to
    the category count (learn-rate factor ``config.head_lr_factor``), every
    conv layer is frozen, and training runs with early stopping on a
    stratified train/validation split drawn from ``config.seed``.
    """
    config = config or TrainConfig()
    y = np.asarray(y, dtype=np.int64)
    num_categories = int(y.max()) + 1 if num_categories is None else num_categories
    counts = np.bincount(y, minlength=num_categories)
    if num_categories < 2:
        raise ValueError("fine_tune needs at least two categories")
    if (counts == 0).any():
        raise ValueError(f"empty categories: {np.flatnonzero(counts == 0).tolist()}")
    if (counts < 2).any():
        raise ValueError("every category needs at least two images for a train/val split")
    rng = np.random.default_rng(config.seed)
    net = base_net.copy()
    head = Dense(num_categories, lr_factor=config.head_lr_factor)
    net.shapes[-1] = tuple(head.build(net.shapes[-2], rng))
    net.layers[-1] = head
    for layer in net.layers:
        if isinstance(layer, Conv):
            layer.frozen = True
    history = train_network(net, x, y, config, rng=rng)
    return net, history


def evaluate_accuracy(net: Network, x, y, num_categories: int | None = None):
    """Accuracy and confusion counts ``conf[true, predicted]``.

    Ties in the logits resolve to the lowest category index.
    """
    y = np.asarray(y, dtype=np.int64)
    num_categories = net.num_outputs if num_categories is None else num_categories
    pred = net.predict_logits(x).argmax(axis=1) if len(y) else np.zeros(0, dtype=np.int64)
    conf = np.zeros((num_categories, num_categories), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    acc = float(np.mean(pred == y)) if len(y) else 0.0
    return acc, conf


# --- GSNN1 model file ---------------------------------------------------------

def save_model(path: str | os.PathLike, net: Network) -> None:
    """ASCII header (one layer per line) then float32 LE parameters."""
    lines = ["GSNN1", "input " + " ".join(map(str, net.input_shape))]
    for layer in net.layers:
        lines.append(f"{layer.spec_line()} frozen={int(layer.frozen)} lr={layer.lr_factor!r}")
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for _, _, p in net.param_items():
            fh.write(p.astype("<f4").tobytes())


def load_model(path: str | os.PathLike) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.index(b"\nend\n") + len(b"\nend\n")
    lines = data[:end].decode("ascii").split("\n")
    if lines[0] != "GSNN1":
        raise ValueError(f"{path}: not a GSNN1 model file")
    input_shape = tuple(int(v) for v in lines[1].split()[1:])
    layers = []
    for line in lines[2:]:
        if line in ("end", ""):
            break
        parts = line.split()
        opts = dict(p.split("=") for p in parts if "=" in p)
        args = [int(p) for p in parts[1:] if "=" not in p]
        kw = {"frozen": bool(int(opts.get("frozen", 0))), "lr_factor": float(opts.get("lr", 1.0))}
        kind = parts[0]
        if kind == "conv":
            layers.append(Conv(*args, **kw))
        elif kind == "relu":
            layers.append(ReLU(**kw))
        elif kind == "pool":
            layers.append(MaxPool(*args, **kw))
        elif kind == "dense":
            layers.append(Dense(*args, **kw))
        else:
            raise ValueError(f"{path}: unknown layer kind {kind!r}")
    net = Network(input_shape, layers)
    body = np.frombuffer(data[end:], dtype="<f4")
    pos = 0
    for i, name, p in list(net.param_items()):
        n = p.size
        if pos + n > body.size:
            raise ValueError(f"{path}: truncated parameter data")
        net.layers[i].params[name] = body[pos:pos + n].astype(np.float64).reshape(p.shape)
        pos += n
    if pos != body.size:
        raise ValueError(f"{path}: trailing parameter data")
    return net


def write_history(path: str | os.PathLike, history: History) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for epoch, tl, vl, va in history.rows:
            w.writerow([epoch, f"{tl:.8g}", f"{vl:.8g}", f"{va:.6f}"])
