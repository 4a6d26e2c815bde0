"""Tensor operations for the 3D convolutional classifier.

Everything runs in 64-bit floats. Feature tensors are either a single sample
(C, T, H, W) — channels, frames, rows, cols — or a batch (N, C, T, H, W);
every op accepts both and returns gradients shaped like its inputs.

The convolution computes

    out[j, z, x, y] = tanh(b[j] + sum_m sum_p sum_q sum_r
                           w[j, m, r, p, q] * in[m, z + r, x + p, y + q])

i.e. valid (no padding) correlation with stride 1 over time and both spatial
axes, with the tanh folded into the layer. Kernels are stored as
(out_channels, in_channels, kt, kh, kw). The inner sums are evaluated as a
single matrix product between an unrolled patch matrix (one row per output
voxel) and the flattened kernels, so BLAS does the heavy lifting; the input
gradient redistributes that product back with one strided add per offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ParameterError, ShapeError

__all__ = [
    "conv3d_forward",
    "conv3d_backward",
    "PoolIndex",
    "maxpool3d_forward",
    "maxpool3d_backward",
    "dense_forward",
    "dense_backward",
    "tanh_forward",
    "tanh_backward",
    "dropout",
    "dropout_backward",
    "sgd_step",
]


def _as_batch(x: np.ndarray, ndim: int, what: str) -> tuple[np.ndarray, bool]:
    """Promote a single sample to a batch of one; remember whether we did."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim == ndim:
        return x, False
    raise ShapeError(f"{what}: expected {ndim - 1}-d or {ndim}-d array, got shape {x.shape}")


def _im2col(xb: np.ndarray, kt: int, kh: int, kw: int) -> np.ndarray:
    """Unroll every receptive field into a row: (N*To*Ho*Wo, C*kt*kh*kw)."""
    n = xb.shape[0]
    win = sliding_window_view(xb, (kt, kh, kw), axis=(2, 3, 4))
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 4, 1, 5, 6, 7))
    return cols.reshape(n * win.shape[2] * win.shape[3] * win.shape[4], -1)


def conv3d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, return_cols=False):
    """Valid 3-d convolution with tanh activation.

    Returns (out, pre) where pre is the pre-activation sum; backward needs it.
    With ``return_cols`` the unrolled patch matrix is appended to the result
    so a following backward pass can skip rebuilding it.
    """
    xb, single = _as_batch(x, 5, "conv3d input")
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 5:
        raise ShapeError(f"conv3d weights must be rank 5, got shape {weights.shape}")
    f, c, kt, kh, kw = weights.shape
    if bias.shape != (f,):
        raise ShapeError(f"conv3d bias shape {bias.shape} != ({f},)")
    n, cx, t, h, w = xb.shape
    if cx != c:
        raise ShapeError(f"conv3d input has {cx} channels, weights expect {c}")
    to, ho, wo = t - kt + 1, h - kh + 1, w - kw + 1
    if to < 1 or ho < 1 or wo < 1:
        raise ShapeError(f"kernel {(kt, kh, kw)} too large for input {(t, h, w)}")

    cols = _im2col(xb, kt, kh, kw)
    pre = (cols @ weights.reshape(f, -1).T).reshape(n, to, ho, wo, f)
    pre = np.ascontiguousarray(np.moveaxis(pre, -1, 1))
    pre += bias[:, None, None, None]
    out = np.tanh(pre)
    if single:
        out, pre = out[0], pre[0]
    if return_cols:
        return out, pre, cols
    return out, pre


def conv3d_backward(
    grad_out: np.ndarray,
    x: np.ndarray,
    pre: np.ndarray,
    weights: np.ndarray,
    activation: np.ndarray | None = None,
    need_grad_input: bool = True,
    cols: np.ndarray | None = None,
):
    """Gradients of the tanh conv layer.

    ``activation`` (= tanh(pre)) may be supplied to skip recomputing it, and
    ``cols`` may carry the patch matrix from the forward pass. Returns
    (grad_input, grad_weights, grad_bias); grad_input is None when
    ``need_grad_input`` is False (first layer of a network).
    """
    xb, single = _as_batch(x, 5, "conv3d input")
    gb, gs = _as_batch(grad_out, 5, "conv3d grad_out")
    pb, _ = _as_batch(pre, 5, "conv3d pre-activation")
    weights = np.asarray(weights, dtype=np.float64)
    if gs != single or gb.shape != pb.shape:
        raise ShapeError("conv3d backward: grad_out and saved tensors disagree")
    f, c, kt, kh, kw = weights.shape
    n, _, to, ho, wo = gb.shape
    expect = (n, f, xb.shape[2] - kt + 1, xb.shape[3] - kh + 1, xb.shape[4] - kw + 1)
    if gb.shape != expect:
        raise ShapeError(f"conv3d grad_out shape {gb.shape} != forward output {expect}")

    act = np.tanh(pb) if activation is None else np.asarray(activation, dtype=np.float64)
    if act.ndim == 4:
        act = act[None]
    gu = gb * (1.0 - act * act)
    gu_cl = np.ascontiguousarray(gu.transpose(0, 2, 3, 4, 1)).reshape(-1, f)

    if cols is None:
        cols = _im2col(xb, kt, kh, kw)
    grad_w = (gu_cl.T @ cols).reshape(weights.shape)
    grad_b = gu_cl.sum(axis=0)
    grad_x = None
    if need_grad_input:
        gcols = (gu_cl @ weights.reshape(f, -1)).reshape(n, to, ho, wo, c, kt, kh, kw)
        gx_cl = np.zeros((n,) + xb.shape[2:] + (c,))  # channels-last accumulator
        for r in range(kt):
            for p in range(kh):
                for q in range(kw):
                    gx_cl[:, r : r + to, p : p + ho, q : q + wo, :] += gcols[..., r, p, q]
        grad_x = np.ascontiguousarray(np.moveaxis(gx_cl, -1, 1))
        if single:
            grad_x = grad_x[0]
    return grad_x, grad_w, grad_b


@dataclass
class PoolIndex:
    """Where each pooled value came from; consumed by maxpool3d_backward."""

    input_shape: tuple[int, ...]
    window: tuple[int, int, int]
    stride: tuple[int, int, int]
    flat: np.ndarray  # argmax within each window, row-major (t, h, w)


def maxpool3d_forward(x: np.ndarray, window, stride):
    """Max over tiled windows; remainder voxels are dropped (floor semantics).

    Returns (out, PoolIndex). Ties pick the lowest linear index inside the
    window, scanning time-major then rows then cols.
    """
    xb, single = _as_batch(x, 5, "maxpool3d input")
    pt, ph, pw = (int(v) for v in window)
    st, sh, sw = (int(v) for v in stride)
    if min(pt, ph, pw) < 1 or min(st, sh, sw) < 1:
        raise ParameterError(f"window {window} and stride {stride} must be >= 1")
    n, c, t, h, w = xb.shape
    if pt > t or ph > h or pw > w:
        raise ShapeError(f"pool window {(pt, ph, pw)} larger than input {(t, h, w)}")
    win = sliding_window_view(xb, (pt, ph, pw), axis=(2, 3, 4))[:, :, ::st, ::sh, ::sw]
    flat_win = win.reshape(win.shape[:5] + (-1,))
    flat = flat_win.argmax(axis=-1)
    out = np.take_along_axis(flat_win, flat[..., None], axis=-1)[..., 0]
    shape = xb.shape[1:] if single else xb.shape
    if single:
        out, flat = out[0], flat[0]
    return out, PoolIndex(shape, (pt, ph, pw), (st, sh, sw), flat)


def maxpool3d_backward(grad_out: np.ndarray, index: PoolIndex) -> np.ndarray:
    """Route each output gradient to its recorded argmax; overlaps accumulate."""
    single = len(index.input_shape) == 4
    shape = (1,) + tuple(index.input_shape) if single else tuple(index.input_shape)
    gb, _ = _as_batch(grad_out, 5, "maxpool3d grad_out")
    flat = index.flat if not single else index.flat[None]
    if gb.shape != flat.shape:
        raise ShapeError(f"grad_out shape {gb.shape} != pooled shape {flat.shape}")
    pt, ph, pw = index.window
    st, sh, sw = index.stride
    n, c, t, h, w = shape
    ni, ci, ti, hi, wi = np.indices(gb.shape, sparse=False)
    tt = ti * st + flat // (ph * pw)
    hh = hi * sh + (flat // pw) % ph
    ww = wi * sw + flat % pw
    linear = (((ni * c + ci) * t + tt) * h + hh) * w + ww
    gx = np.bincount(linear.ravel(), weights=gb.ravel(), minlength=n * c * t * h * w)
    gx = gx.reshape(shape)
    return gx[0] if single else gx


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """out = W x + b, no activation. x: (D,) or (N, D); W: (out, D); b: (out,)."""
    xb, single = _as_batch(x, 2, "dense input")
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or bias.shape != (weights.shape[0],):
        raise ShapeError(f"dense weights {weights.shape} / bias {bias.shape} malformed")
    if xb.shape[1] != weights.shape[1]:
        raise ShapeError(f"dense input width {xb.shape[1]} != weight width {weights.shape[1]}")
    out = xb @ weights.T + bias
    return out[0] if single else out


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray):
    """Returns (grad_input = Wᵀ g, grad_weights = g ⊗ x, grad_bias = g)."""
    xb, single = _as_batch(x, 2, "dense input")
    gb, gs = _as_batch(grad_out, 2, "dense grad_out")
    weights = np.asarray(weights, dtype=np.float64)
    if gs != single or gb.shape != (xb.shape[0], weights.shape[0]):
        raise ShapeError(f"dense grad_out shape {gb.shape} inconsistent with layer")
    grad_x = gb @ weights
    grad_w = gb.T @ xb
    grad_b = gb.sum(axis=0)
    if single:
        return grad_x[0], grad_w, grad_b
    return grad_x, grad_w, grad_b


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_backward(grad_out: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Chain rule given the forward output: d tanh = 1 - tanh^2."""
    return np.asarray(grad_out) * (1.0 - np.asarray(out) ** 2)


def dropout(x: np.ndarray, rate: float, mode: str = "train", rng=None):
    """Inverted dropout. Returns (out, mask); mask is None in eval mode.

    Train mode zeroes each value independently with probability ``rate`` and
    scales survivors by 1/(1-rate) so eval mode is an identity. Eval mode never
    touches the generator, so train/eval call sequences stay reproducible.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if mode == "eval":
        return x, None
    if rate == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    if rng is None:
        raise ParameterError("train-mode dropout with rate > 0 needs a generator")
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray | None, rate: float) -> np.ndarray:
    """Backward of dropout; mask None means the forward ran in eval mode."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if mask is None:
        return grad_out
    if mask.shape != grad_out.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} != grad shape {grad_out.shape}")
    return grad_out * mask / (1.0 - rate)


def sgd_step(params, grads, learning_rate: float):
    """p <- p - lr * g, in place, for a list of parameter arrays."""
    if learning_rate <= 0:
        raise ParameterError(f"learning rate must be positive, got {learning_rate}")
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
    for p, g in zip(params, grads):
        g = np.asarray(g)
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} != grad shape {g.shape}")
        p -= learning_rate * g
    return params
