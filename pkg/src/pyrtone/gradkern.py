"""Reverse-mode differentiation engine for the tone-mapping pipeline.

A Tensor wraps a float64 numpy array and remembers the operation that
produced it. Calling backward(loss) replays the recorded operations in
reverse topological order (the tape) and accumulates gradients into every
requires_grad leaf. Gradients of leaves persist across backward calls and
accumulate additively; intermediate gradients are reset on every pass.

The op set is deliberately small: elementwise arithmetic, |.| and powers,
reductions, LReLU, sigmoid, dilated bias-free 2-D convolution, bias-free
adaptive normalization, and the pyramid resampling pair. Forward values are
computed by the same kernels the non-differentiable path uses.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    # Make ndarray binary ops defer to our reflected operators.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, _parents=(), _op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def sum(self):
        return _reduce(self, "sum")

    def mean(self):
        return _reduce(self, "mean")

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, " \
               f"requires_grad={self.requires_grad})"

    def __add__(self, other):
        return _binary(self, other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, "sub")

    def __rsub__(self, other):
        return _binary(_lift(other), self, "sub")

    def __mul__(self, other):
        return _binary(self, other, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, "div")

    def __rtruediv__(self, other):
        return _binary(_lift(other), self, "div")

    def __neg__(self):
        return self * -1.0

    def __pow__(self, exponent):
        return power(self, exponent)

    def __abs__(self):
        return absolute(self)


@dataclass
class NormStats:
    """Per-channel running RMS for adaptive normalization."""
    rms: np.ndarray


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op):
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs,
                 _parents=parents if needs else (), _op=op)
    return out


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _binary(a, b, op):
    a, b = _lift(a), _lift(b)
    if op == "add":
        data = a.data + b.data
    elif op == "sub":
        data = a.data - b.data
    elif op == "mul":
        data = a.data * b.data
    else:
        data = a.data / b.data
    out = _make(data, (a, b), op)
    if not out.requires_grad:
        return out

    def backward():
        g = out.grad
        if op == "add":
            ga, gb = g, g
        elif op == "sub":
            ga, gb = g, -g
        elif op == "mul":
            ga, gb = g * b.data, g * a.data
        else:
            ga = g / b.data
            gb = -g * a.data / (b.data * b.data)
        if a.requires_grad:
            a.grad += _unbroadcast(ga, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(gb, b.data.shape)

    out._backward = backward
    return out


def _reduce(a, kind):
    data = a.data.sum() if kind == "sum" else a.data.mean()
    out = _make(np.asarray(data), (a,), kind)
    if not out.requires_grad:
        return out

    def backward():
        g = out.grad
        if kind == "mean":
            g = g / a.data.size
        a.grad += np.broadcast_to(g, a.data.shape)

    out._backward = backward
    return out


def power(a, exponent):
    """Elementwise a**p for a scalar exponent; d/da at a == 0 is taken as 0."""
    a = _lift(a)
    p = float(exponent)
    out = _make(a.data ** p, (a,), f"pow{p}")
    if not out.requires_grad:
        return out

    def backward():
        with np.errstate(divide="ignore", invalid="ignore"):
            local = p * a.data ** (p - 1.0)
        local = np.where(a.data == 0.0, 0.0, local)
        a.grad += out.grad * local

    out._backward = backward
    return out


def absolute(a):
    """Elementwise |a| with subgradient 0 at 0."""
    a = _lift(a)
    out = _make(np.abs(a.data), (a,), "abs")
    if not out.requires_grad:
        return out

    def backward():
        a.grad += out.grad * np.sign(a.data)

    out._backward = backward
    return out


def lrelu(a, slope=0.2):
    """max(slope*a, a); the derivative at 0 is `slope` by convention."""
    if not 0.0 <= slope <= 1.0:
        raise ValueError(f"lrelu slope must be in [0, 1], got {slope}")
    a = _lift(a)
    out = _make(np.maximum(slope * a.data, a.data), (a,), "lrelu")
    if not out.requires_grad:
        return out

    def backward():
        a.grad += out.grad * np.where(a.data > 0.0, 1.0, slope)

    out._backward = backward
    return out


def sigmoid(a):
    a = _lift(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _make(s, (a,), "sigmoid")
    if not out.requires_grad:
        return out

    def backward():
        a.grad += out.grad * s * (1.0 - s)

    out._backward = backward
    return out


def conv2d(x, k, dilation=1):
    """Dilated 3x3-style convolution, mirror-padded, strictly bias-free.

    x: (n, c_in, h, w), k: (c_out, c_in, kh, kw). Output spatial dims equal
    input dims.
    """
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    x, k = _lift(x), _lift(k)
    out = _make(_kernels.conv2d(x.data, k.data, dilation), (x, k), "conv2d")
    if not out.requires_grad:
        return out

    def backward():
        gx, gk = _kernels.conv2d_backward(out.grad, x.data, k.data, dilation)
        if x.requires_grad:
            x.grad += gx
        if k.requires_grad:
            k.grad += gk

    out._backward = backward
    return out


def adaptive_norm(x, lam1, lam2, stats, mode, momentum=0.1, eps=1e-12):
    """Bias-free adaptive normalization: lam1*x + lam2*(x / sigma_c).

    sigma_c is the per-channel RMS over (n, h, w) in "train" mode (running
    value updated in place with the given momentum) and the stored running
    RMS in "infer" mode, where the op is an exact per-channel linear scaling.
    No mean subtraction and no additive terms anywhere.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x, lam1, lam2 = _lift(x), _lift(lam1), _lift(lam2)
    n, c, h, w = x.data.shape
    if mode == "train":
        if n < 1:
            raise ValueError("train mode needs at least one sample")
        sigma_raw = np.sqrt(np.mean(x.data ** 2, axis=(0, 2, 3)))
        clamped = sigma_raw < eps
        sigma = np.maximum(sigma_raw, eps)
        new_rms = (1.0 - momentum) * np.asarray(stats.rms, np.float64) \
            + momentum * sigma
        stats.rms[...] = new_rms.astype(stats.rms.dtype)
    else:
        sigma = np.maximum(np.asarray(stats.rms, np.float64), eps)
        clamped = None

    sig = sigma[None, :, None, None]
    normed = x.data / sig
    l1 = lam1.data[None, :, None, None]
    l2 = lam2.data[None, :, None, None]
    out = _make(l1 * x.data + l2 * normed, (x, lam1, lam2), "adaptive_norm")
    if not out.requires_grad:
        return out

    def backward():
        g = out.grad
        if lam1.requires_grad:
            lam1.grad += np.sum(g * x.data, axis=(0, 2, 3))
        if lam2.requires_grad:
            lam2.grad += np.sum(g * normed, axis=(0, 2, 3))
        if x.requires_grad:
            gx = g * (l1 + l2 / sig)
            if mode == "train":
                # sigma depends on x: d sigma_c/dx_i = x_i / (N * sigma_c).
                # Channels at the eps clamp treat sigma as constant.
                count = n * h * w
                s_c = np.sum(g * x.data, axis=(0, 2, 3))
                coeff = lam2.data * s_c / (count * sigma ** 3)
                coeff = np.where(clamped, 0.0, coeff)
                gx = gx - coeff[None, :, None, None] * x.data
            x.grad += gx

    out._backward = backward
    return out


def sep_filter(x, taps):
    """Separable 2-D filtering of a plane with mirror borders (fixed taps)."""
    x = _lift(x)
    taps = np.asarray(taps, dtype=np.float64)
    out = _make(_kernels.sep_filter(x.data, taps), (x,), "sep_filter")
    if not out.requires_grad:
        return out

    def backward():
        x.grad += _kernels.sep_filter_adjoint(out.grad, taps, x.data.shape)

    out._backward = backward
    return out


def downsample(x):
    """Pyramid downsampling of a 2-D plane: lowpass then even-phase decimate."""
    x = _lift(x)
    out = _make(_kernels.downsample(x.data), (x,), "downsample")
    if not out.requires_grad:
        return out

    def backward():
        x.grad += _kernels.downsample_adjoint(out.grad, x.data.shape)

    out._backward = backward
    return out


def upsample(x, target_hw):
    """Pyramid upsampling of a 2-D plane to explicit target dims."""
    x = _lift(x)
    out = _make(_kernels.upsample(x.data, target_hw), (x,), "upsample")
    if not out.requires_grad:
        return out

    def backward():
        x.grad += _kernels.upsample_adjoint(out.grad)

    out._backward = backward
    return out


def tape(root):
    """Topologically ordered list of grad-requiring nodes ending at `root`."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    Leaf gradients persist and add up across calls; intermediate gradients
    are reset each pass.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = tape(loss)
    for node in order:
        if node._parents:  # intermediate: reset before this pass
            node.grad = np.zeros_like(node.data)
    loss.grad = loss.grad + 1.0 if not loss._parents else np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
