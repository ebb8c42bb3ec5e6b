"""HDR image container, calibration to absolute luminance, color handling,
and LDR display encoding.

Pixel data is linear-light float32, shape (h, w) for luminance or (h, w, 3)
for RGB. A calibrated image holds absolute luminances in cd/m^2; an
uncalibrated one holds measurements in arbitrary linear units.
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import pfm, rgbe
from .errors import DegenerateInputError

REC709_WEIGHTS = (0.2126, 0.7152, 0.0722)


@dataclass(frozen=True)
class HdrImage:
    data: np.ndarray
    calibrated: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"unsupported image shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"non-positive dimensions {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if np.any(arr < 0):
            raise ValueError("image contains negative values")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return 1 if self.data.ndim == 2 else 3


@dataclass(frozen=True)
class CalibrationRange:
    """Guessed scene luminance bounds in cd/m^2."""
    s_min: float
    s_max: float

    def __post_init__(self):
        if not (np.isfinite(self.s_min) and np.isfinite(self.s_max)):
            raise ValueError("calibration bounds must be finite")
        if not self.s_max > self.s_min >= 0:
            raise ValueError(
                f"need s_max > s_min >= 0, got ({self.s_min}, {self.s_max})")


@dataclass(frozen=True)
class DisplayRange:
    """Luminance range a target display can emit, in cd/m^2."""
    i_min: float = 5.0
    i_max: float = 300.0

    def __post_init__(self):
        if not self.i_max > self.i_min > 0:
            raise ValueError(
                f"need i_max > i_min > 0, got ({self.i_min}, {self.i_max})")

    @property
    def span(self):
        return self.i_max - self.i_min


def load_image(path, format=None):
    """Load a .pfm or Radiance .hdr file as an uncalibrated HdrImage.

    Negative and non-finite samples are mapped to zero (with a warning), as
    the rest of the pipeline requires non-negative finite radiance.
    """
    if format is None:
        ext = os.path.splitext(path)[1].lower()
        format = {".pfm": "pfm", ".hdr": "rgbe", ".rgbe": "rgbe"}.get(ext)
        if format is None:
            raise ValueError(f"cannot infer image format from {path!r}")
    if format == "pfm":
        data = pfm.read_pfm(path)
    elif format == "rgbe":
        data = rgbe.read_rgbe(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    bad = ~np.isfinite(data) | (data < 0)
    if np.any(bad):
        warnings.warn(f"{path}: {int(bad.sum())} negative or non-finite "
                      "samples clamped to zero")
        data = np.where(bad, np.float32(0), data)
    return HdrImage(data, calibrated=False)


def save_pfm(img, path):
    """Write an HdrImage to .pfm (calibration state is not stored)."""
    pfm.write_pfm(path, img.data)


def luminance(img):
    """Extract the 1-channel luminance image (Rec. 709 weights for RGB)."""
    if img.channels == 1:
        return img
    r, g, b = REC709_WEIGHTS
    y = r * img.data[:, :, 0] + g * img.data[:, :, 1] + b * img.data[:, :, 2]
    return HdrImage(y, calibrated=img.calibrated)


def calibrate(img, crange):
    """Linearly rescale measurements onto [s_min, s_max] cd/m^2.

    The observed min maps to s_min and the observed max to s_max; ordering of
    pixel values is preserved. Constant images cannot be calibrated.
    """
    data = img.data.astype(np.float64)
    r_min, r_max = float(data.min()), float(data.max())
    if r_max == r_min:
        raise DegenerateInputError(
            "constant image cannot be calibrated (zero measurement range)")
    normalized = (data - r_min) / (r_max - r_min)
    s = (crange.s_max - crange.s_min) * normalized + crange.s_min
    return HdrImage(s.astype(np.float32), calibrated=True)


def reattach_color(hdr_rgb, y_in, y_out, saturation=0.6):
    """Rebuild color around a tone-mapped luminance plane.

    Per channel: c_out = (c_in / y_in)^saturation * y_out. Pixels with zero
    input luminance come out black.
    """
    if hdr_rgb.data.shape[:2] != y_in.data.shape[:2] or \
            hdr_rgb.data.shape[:2] != y_out.data.shape[:2]:
        raise ValueError("spatial size mismatch between color and luminance")
    if y_in.channels != 1 or y_out.channels != 1:
        raise ValueError("y_in and y_out must be 1-channel")
    c = hdr_rgb.data.astype(np.float64)
    yi = y_in.data.astype(np.float64)[:, :, None]
    yo = y_out.data.astype(np.float64)[:, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(yi > 0, c / np.where(yi > 0, yi, 1.0), 0.0)
    out = ratio ** saturation * yo
    return HdrImage(out.astype(np.float32), calibrated=y_out.calibrated)


def encode_ldr(img, display, path):
    """Write an 8-bit PNG: code = round(255 * ((v - i_min) / span)^(1/2.2)).

    Values outside the display range are clamped (with a warning).
    """
    data = img.data.astype(np.float64)
    n_out = int(np.sum((data < display.i_min) | (data > display.i_max)))
    if n_out:
        warnings.warn(f"{n_out} samples outside display range "
                      f"[{display.i_min}, {display.i_max}] were clamped")
        data = np.clip(data, display.i_min, display.i_max)
    norm = (data - display.i_min) / display.span
    codes = np.rint(255.0 * norm ** (1.0 / 2.2)).astype(np.uint8)
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(codes, mode=mode).save(path, format="PNG")


def _bilinear_axis(data, new_n, axis):
    old_n = data.shape[axis]
    if new_n == old_n:
        return data
    # Pixel centers: src = (dst + 0.5) * old/new - 0.5, clamped to the edges.
    src = (np.arange(new_n) + 0.5) * (old_n / new_n) - 0.5
    src = np.clip(src, 0, old_n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, old_n - 1)
    frac = src - lo
    shape = [1] * data.ndim
    shape[axis] = new_n
    frac = frac.reshape(shape)
    return np.take(data, lo, axis=axis) * (1 - frac) + \
        np.take(data, hi, axis=axis) * frac


def resize_short(img, short_side):
    """Bilinearly resize so the short side has `short_side` pixels.

    `short_side` = 0 is a no-op. Aspect ratio is preserved (rounded).
    """
    if short_side == 0:
        return img
    h, w = img.height, img.width
    scale = short_side / min(h, w)
    new_h = short_side if h <= w else max(1, int(round(h * scale)))
    new_w = short_side if w < h else max(1, int(round(w * scale)))
    data = img.data.astype(np.float64)
    data = _bilinear_axis(data, new_h, 0)
    data = _bilinear_axis(data, new_w, 1)
    return HdrImage(data.astype(np.float32), calibrated=img.calibrated)
