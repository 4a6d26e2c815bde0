"""Network assembly: layer descriptors, initialization, forward/backward.

A ModelSpec is an ordered list of layer descriptors plus the input geometry
(C, T, H, W). Parameters live outside the ModelSpec as a flat list of arrays in
declaration order (weights before bias within a layer), which is also the
order used by the serializer and the SGD step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError
from ..rng import generator
from . import ops
from .losses import batch_cross_entropy, softmax

__all__ = [
    "Conv3d",
    "MaxPool3d",
    "Flatten",
    "Dropout",
    "Dense",
    "Softmax",
    "ModelSpec",
    "default_model_spec",
    "param_shapes",
    "init_params",
    "Network",
]


@dataclass(frozen=True)
class Conv3d:
    filters: int
    kernel: tuple[int, int, int]
    kind: str = field(default="conv3d", init=False)


@dataclass(frozen=True)
class MaxPool3d:
    window: tuple[int, int, int]
    stride: tuple[int, int, int]
    kind: str = field(default="maxpool3d", init=False)


@dataclass(frozen=True)
class Flatten:
    kind: str = field(default="flatten", init=False)


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind: str = field(default="dropout", init=False)


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str | None = None  # None or "tanh"
    kind: str = field(default="dense", init=False)


@dataclass(frozen=True)
class Softmax:
    kind: str = field(default="softmax", init=False)


_LAYER_KINDS = {
    "conv3d": Conv3d,
    "maxpool3d": MaxPool3d,
    "flatten": Flatten,
    "dropout": Dropout,
    "dense": Dense,
    "softmax": Softmax,
}


def _layer_to_dict(layer) -> dict:
    d = {"kind": layer.kind}
    if isinstance(layer, Conv3d):
        d.update(filters=layer.filters, kernel=list(layer.kernel))
    elif isinstance(layer, MaxPool3d):
        d.update(window=list(layer.window), stride=list(layer.stride))
    elif isinstance(layer, Dropout):
        d.update(rate=layer.rate)
    elif isinstance(layer, Dense):
        d.update(units=layer.units, activation=layer.activation)
    return d


def _layer_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "conv3d":
        return Conv3d(int(d["filters"]), tuple(int(v) for v in d["kernel"]))
    if kind == "maxpool3d":
        return MaxPool3d(
            tuple(int(v) for v in d["window"]), tuple(int(v) for v in d["stride"])
        )
    if kind == "flatten":
        return Flatten()
    if kind == "dropout":
        return Dropout(float(d["rate"]))
    if kind == "dense":
        act = d.get("activation")
        return Dense(int(d["units"]), None if act is None else str(act))
    if kind == "softmax":
        return Softmax()
    raise ParameterError(f"unknown layer kind {kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Input geometry plus the ordered layer stack."""

    input_shape: tuple[int, int, int, int]  # (C, T, H, W)
    layers: tuple

    def shapes(self) -> list[tuple[int, ...]]:
        """Output shape after each layer (index 0 = the input itself).

        Raises ShapeError when consecutive layers do not compose.
        """
        if len(self.input_shape) != 4 or min(self.input_shape) < 1:
            raise ShapeError(f"bad input shape {self.input_shape}")
        shapes: list[tuple[int, ...]] = [tuple(int(v) for v in self.input_shape)]
        for i, layer in enumerate(self.layers):
            cur = shapes[-1]
            if isinstance(layer, Conv3d):
                if len(cur) != 4:
                    raise ShapeError(f"layer {i}: conv3d needs a 4-d input, got {cur}")
                c, t, h, w = cur
                kt, kh, kw = layer.kernel
                nxt = (layer.filters, t - kt + 1, h - kh + 1, w - kw + 1)
                if min(nxt) < 1:
                    raise ShapeError(f"layer {i}: kernel {layer.kernel} exceeds input {cur}")
            elif isinstance(layer, MaxPool3d):
                if len(cur) != 4:
                    raise ShapeError(f"layer {i}: maxpool3d needs a 4-d input, got {cur}")
                c, t, h, w = cur
                pt, ph, pw = layer.window
                st, sh, sw = layer.stride
                if pt > t or ph > h or pw > w:
                    raise ShapeError(f"layer {i}: window {layer.window} exceeds input {cur}")
                nxt = (c, (t - pt) // st + 1, (h - ph) // sh + 1, (w - pw) // sw + 1)
            elif isinstance(layer, Flatten):
                nxt = (int(np.prod(cur)),)
            elif isinstance(layer, Dropout):
                if not 0.0 <= layer.rate < 1.0:
                    raise ParameterError(f"layer {i}: dropout rate {layer.rate} not in [0, 1)")
                nxt = cur
            elif isinstance(layer, Dense):
                if len(cur) != 1:
                    raise ShapeError(f"layer {i}: dense needs a flat input, got {cur}")
                if layer.activation not in (None, "tanh"):
                    raise ParameterError(f"layer {i}: unsupported activation {layer.activation!r}")
                nxt = (layer.units,)
            elif isinstance(layer, Softmax):
                if len(cur) != 1:
                    raise ShapeError(f"layer {i}: softmax needs a flat input, got {cur}")
                if i != len(self.layers) - 1:
                    raise ShapeError(f"layer {i}: softmax must be the final layer")
                nxt = cur
            else:
                raise ParameterError(f"layer {i}: unknown layer {layer!r}")
            shapes.append(nxt)
        return shapes

    @property
    def n_classes(self) -> int:
        for layer in reversed(self.layers):
            if isinstance(layer, Dense):
                return layer.units
        raise ShapeError("model has no dense output layer")

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [_layer_to_dict(l) for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            shape = tuple(int(v) for v in d["input_shape"])
            layers = tuple(_layer_from_dict(ld) for ld in d["layers"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed model description: {exc}") from exc
        spec = cls(shape, layers)
        spec.shapes()
        return spec


def default_model_spec(n_classes: int, input_shape=(1, 16, 64, 64)) -> ModelSpec:
    """Two tanh conv blocks with pooling, then a dropout-regularized head."""
    if n_classes < 1:
        raise ParameterError(f"need at least 1 class, got {n_classes}")
    return ModelSpec(
        input_shape=tuple(input_shape),
        layers=(
            Conv3d(8, (3, 3, 3)),
            MaxPool3d((2, 2, 2), (2, 2, 2)),
            Conv3d(16, (3, 3, 3)),
            MaxPool3d((2, 2, 2), (2, 2, 2)),
            Flatten(),
            Dropout(0.3),
            Dense(64, activation="tanh"),
            Dropout(0.3),
            Dense(n_classes),
            Softmax(),
        ),
    )


def param_shapes(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Shapes of the flat parameter list, in declaration order."""
    shapes = spec.shapes()
    out: list[tuple[int, ...]] = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv3d):
            out.append((layer.filters, shapes[i][0]) + tuple(layer.kernel))
            out.append((layer.filters,))
        elif isinstance(layer, Dense):
            out.append((layer.units, shapes[i][0]))
            out.append((layer.units,))
    return out


def init_params(spec: ModelSpec, seed: int) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``.

    Returns the flat parameter list in declaration order.
    """
    shapes = spec.shapes()
    rng = generator(seed, "init")
    params: list[np.ndarray] = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv3d):
            c = shapes[i][0]
            kt, kh, kw = layer.kernel
            fan_in = c * kt * kh * kw
            fan_out = layer.filters * kt * kh * kw
            s = np.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-s, s, size=(layer.filters, c, kt, kh, kw)))
            params.append(np.zeros(layer.filters))
        elif isinstance(layer, Dense):
            fan_in = shapes[i][0]
            s = np.sqrt(6.0 / (fan_in + layer.units))
            params.append(rng.uniform(-s, s, size=(layer.units, fan_in)))
            params.append(np.zeros(layer.units))
    return params


class Network:
    """Runtime pairing of a ModelSpec with its parameters.

    Not safe for concurrent forward passes on one instance (the backward
    cache is per-instance); clone or evaluate sequentially.
    """

    def __init__(self, spec: ModelSpec, params: list[np.ndarray] | None = None, seed=None):
        self.spec = spec
        self.shapes = spec.shapes()
        if params is None:
            if seed is None:
                raise ParameterError("need params or a seed to initialize them")
            params = init_params(spec, seed)
        self.params = params
        self._check_params()
        self._seed = seed
        self._dropout_rngs = {}
        if seed is not None:
            for i, layer in enumerate(spec.layers):
                if isinstance(layer, Dropout):
                    self._dropout_rngs[i] = generator(seed, "dropout", i)
        self._cache = None

    def _check_params(self) -> None:
        expect = param_shapes(self.spec)
        got = [tuple(p.shape) for p in self.params]
        if got != expect:
            raise ShapeError(f"parameter shapes {got} do not match the model spec {expect}")

    # -- forward ----------------------------------------------------------

    def forward_logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Run all layers except the trailing softmax; caches for backward."""
        xb = np.asarray(x, dtype=np.float64)
        single = xb.ndim == len(self.spec.input_shape)
        if single:
            xb = xb[None]
        if xb.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeError(
                f"input shape {xb.shape[1:]} != model input {tuple(self.spec.input_shape)}"
            )
        cache = []
        pi = 0
        cur = xb
        for i, layer in enumerate(self.spec.layers):
            if isinstance(layer, Conv3d):
                w, b = self.params[pi], self.params[pi + 1]
                pi += 2
                if train:
                    out, pre, cols = ops.conv3d_forward(cur, w, b, return_cols=True)
                else:
                    out, pre = ops.conv3d_forward(cur, w, b)
                    cols = None
                cache.append(("conv3d", cur, pre, out, w, cols))
                cur = out
            elif isinstance(layer, MaxPool3d):
                cur, idx = ops.maxpool3d_forward(cur, layer.window, layer.stride)
                cache.append(("maxpool3d", idx))
            elif isinstance(layer, Flatten):
                cache.append(("flatten", cur.shape))
                cur = cur.reshape(cur.shape[0], -1)
            elif isinstance(layer, Dropout):
                rng = self._dropout_rngs.get(i) if train else None
                if train and layer.rate > 0.0 and rng is None:
                    raise ParameterError("training with dropout requires a seeded network")
                cur, mask = ops.dropout(cur, layer.rate, "train" if train else "eval", rng)
                cache.append(("dropout", mask, layer.rate))
            elif isinstance(layer, Dense):
                w, b = self.params[pi], self.params[pi + 1]
                pi += 2
                lin = ops.dense_forward(cur, w, b)
                if layer.activation == "tanh":
                    act = ops.tanh_forward(lin)
                    cache.append(("dense", cur, w, act))
                    cur = act
                else:
                    cache.append(("dense", cur, w, None))
                    cur = lin
            elif isinstance(layer, Softmax):
                cache.append(("softmax",))
        self._cache = (cache, single, cur.ndim)
        logits = cur
        return logits[0] if single else logits

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Full forward pass; applies the trailing softmax when present."""
        logits = self.forward_logits(x, train)
        if self.spec.layers and isinstance(self.spec.layers[-1], Softmax):
            return softmax(logits)
        return logits

    # -- backward ---------------------------------------------------------

    def backward_from_logits(self, grad_logits: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients (flat, declaration order) for the cached pass."""
        if self._cache is None:
            raise ParameterError("backward called before forward")
        cache, single, out_ndim = self._cache
        grad = np.asarray(grad_logits, dtype=np.float64)
        if grad.ndim == out_ndim - 1:
            grad = grad[None]
        elif grad.ndim != out_ndim:
            raise ShapeError(f"grad rank {grad.ndim} does not match cached output")
        grads: list[np.ndarray] = []
        first_param_layer = next(
            (j for j, e in enumerate(cache) if e[0] in ("conv3d", "dense")), None
        )
        for j in range(len(cache) - 1, -1, -1):
            entry = cache[j]
            kind = entry[0]
            if kind == "softmax":
                continue  # folded into the cross-entropy gradient
            if kind == "conv3d":
                _, x, pre, out, w, cols = entry
                need_gx = j != first_param_layer
                gx, gw, gb = ops.conv3d_backward(
                    grad, x, pre, w, activation=out, need_grad_input=need_gx, cols=cols
                )
                grads.append(gb)
                grads.append(gw)
                grad = gx
            elif kind == "maxpool3d":
                grad = ops.maxpool3d_backward(grad, entry[1])
            elif kind == "flatten":
                grad = grad.reshape(entry[1])
            elif kind == "dropout":
                grad = ops.dropout_backward(grad, entry[1], entry[2])
            elif kind == "dense":
                _, x, w, act = entry
                if act is not None:
                    grad = ops.tanh_backward(grad, act)
                gx, gw, gb = ops.dense_backward(grad, x, w)
                grads.append(gb)
                grads.append(gw)
                grad = gx
        grads.reverse()
        return grads

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray, train: bool = True):
        """Cross-entropy loss, probabilities, and parameter gradients."""
        logits = self.forward_logits(x, train)
        logits = np.atleast_2d(logits)
        loss, probs, grad_logits = batch_cross_entropy(logits, np.atleast_1d(labels))
        grads = self.backward_from_logits(grad_logits)
        return loss, probs, grads
