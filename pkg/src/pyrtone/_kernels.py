"""Shared low-level numerics: reflect padding, separable filtering, resampling,
and the im2col machinery behind dilated 2-D convolution.

Everything here is plain numpy in / numpy out. Both the pyramid front end and
the differentiable engine call into these functions, so forward values agree
bitwise between the metric path and the taped path.
"""

import numpy as np

# 5-tap binomial-like lowpass used throughout the pyramid.
PYR_TAPS = np.array([0.05, 0.25, 0.4, 0.25, 0.05], dtype=np.float64)


def reflect_indices(n, pad):
    """Source indices for mirror padding without edge repeat.

    Matches np.pad(mode="reflect"): [1,2,3,4] padded by 2 -> [3,2,1,2,3,4,3,2].
    A length-1 axis degenerates to replication.
    """
    idx = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def pad_reflect(x, pad, axes=(-2, -1)):
    """Mirror-pad `x` by `pad` samples on both ends of each axis in `axes`."""
    for ax in axes:
        idx = reflect_indices(x.shape[ax], pad)
        x = np.take(x, idx, axis=ax)
    return x


def unpad_fold(g, pad, axes=(-2, -1)):
    """Adjoint of pad_reflect: scatter-add padded-slot gradients onto sources."""
    for ax in axes:
        n = g.shape[ax] - 2 * pad
        idx = reflect_indices(n, pad)
        out = np.zeros(g.shape[:ax % g.ndim] + (n,) + g.shape[ax % g.ndim + 1:],
                       dtype=g.dtype)
        gm = np.moveaxis(g, ax, 0)
        om = np.moveaxis(out, ax, 0)
        np.add.at(om, idx, gm)
        g = out
    return g


def correlate_valid(x, taps, axis):
    """Valid-mode 1-D correlation of `x` with `taps` along `axis`."""
    k = len(taps)
    xm = np.moveaxis(x, axis, 0)
    n = xm.shape[0] - k + 1
    out = np.zeros((n,) + xm.shape[1:], dtype=x.dtype)
    for t in range(k):
        out += taps[t] * xm[t:t + n]
    return np.moveaxis(out, 0, axis)


def correlate_valid_adjoint(g, taps, axis, n_in):
    """Adjoint of correlate_valid w.r.t. its input: scatters g back over taps."""
    k = len(taps)
    gm = np.moveaxis(g, axis, 0)
    out = np.zeros((n_in,) + gm.shape[1:], dtype=g.dtype)
    n = gm.shape[0]
    for t in range(k):
        out[t:t + n] += taps[t] * gm
    return np.moveaxis(out, 0, axis)


def sep_filter(x, taps):
    """Separably filter a 2-D plane with mirror borders; output dims = input dims."""
    pad = len(taps) // 2
    xp = pad_reflect(x, pad)
    return correlate_valid(correlate_valid(xp, taps, 0), taps, 1)


def sep_filter_adjoint(g, taps, shape):
    """Adjoint of sep_filter for a 2-D plane of the given input shape."""
    pad = len(taps) // 2
    hp, wp = shape[0] + 2 * pad, shape[1] + 2 * pad
    g = correlate_valid_adjoint(g, taps, 1, wp)
    g = correlate_valid_adjoint(g, taps, 0, hp)
    return unpad_fold(g, pad)


def decimate2(x):
    """Keep even-indexed samples along both axes."""
    return x[0::2, 0::2]


def zero_insert(x, target_hw):
    """Scatter `x` onto the even indices of a zero plane of `target_hw` dims."""
    h, w = target_hw
    if x.shape[0] != (h + 1) // 2 or x.shape[1] != (w + 1) // 2:
        raise ValueError(
            f"zero_insert target {target_hw} inconsistent with source dims {x.shape}")
    out = np.zeros((h, w), dtype=x.dtype)
    out[0::2, 0::2] = x
    return out


def downsample(x):
    """Lowpass with the 5-tap kernel, then decimate by two (even phase)."""
    return decimate2(sep_filter(x, PYR_TAPS))


def downsample_adjoint(g, shape):
    h, w = shape
    full = np.zeros((h, w), dtype=g.dtype)
    full[0::2, 0::2] = g
    return sep_filter_adjoint(full, PYR_TAPS, shape)


def upsample(x, target_hw):
    """Zero-insert to `target_hw`, then filter with the mass-restoring 2x kernel."""
    return sep_filter(zero_insert(x, target_hw), 2.0 * PYR_TAPS)


def upsample_adjoint(g):
    g = sep_filter_adjoint(g, 2.0 * PYR_TAPS, g.shape)
    return g[0::2, 0::2]


def _patches(xp, kh, kw, dilation, out_h, out_w):
    # Strided (n, c, kh, kw, H, W) view over the padded input; no copy here.
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    shape = (n, c, kh, kw, out_h, out_w)
    strides = (sn, sc, sh * dilation, sw * dilation, sh, sw)
    return np.lib.stride_tricks.as_strided(xp, shape, strides, writeable=False)


def conv2d(x, k, dilation=1):
    """Dilated 2-D cross-correlation with mirror padding, output dims = input dims.

    x: (n, c_in, h, w); k: (c_out, c_in, kh, kw) with odd kh, kw.
    """
    co, ci, kh, kw = k.shape
    if x.shape[1] != ci:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[1]}, "
                         f"kernel expects {ci}")
    pad = (kh // 2) * dilation
    xp = pad_reflect(x, pad)
    pat = _patches(xp, kh, kw, dilation, x.shape[2], x.shape[3])
    out = np.tensordot(k, pat, axes=([1, 2, 3], [1, 2, 3]))  # (co, n, h, w)
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_backward(g, x, k, dilation=1):
    """Gradients of conv2d w.r.t. input and kernel given output gradient `g`."""
    co, ci, kh, kw = k.shape
    n, _, h, w = x.shape
    pad = (kh // 2) * dilation
    xp = pad_reflect(x, pad)
    pat = _patches(xp, kh, kw, dilation, h, w)
    gk = np.tensordot(g, pat, axes=([0, 2, 3], [0, 4, 5]))  # (co, ci, kh, kw)

    gxp = np.zeros_like(xp)
    for u in range(kh):
        for v in range(kw):
            # (n, co, h, w) . (co, ci) -> (n, h, w, ci) -> (n, ci, h, w)
            contrib = np.tensordot(g, k[:, :, u, v], axes=([1], [0]))
            gxp[:, :, u * dilation:u * dilation + h,
                v * dilation:v * dilation + w] += contrib.transpose(0, 3, 1, 2)
    gx = unpad_fold(gxp, pad)
    return gx, gk
