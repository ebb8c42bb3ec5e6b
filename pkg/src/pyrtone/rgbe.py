"""Radiance RGBE (.hdr) reading.

Accepts both adaptive-RLE and flat scanlines. Components decode as
mantissa * 2^(exponent - 136); a zero exponent byte means black.
With the standard "-Y h +X w" resolution string the first scanline is the
top row of the image.
"""

import re

import numpy as np

from .errors import ParseError


def _decode_rle_scanline(buf, pos, width, out_row):
    # New-style scanline: 0x02 0x02 then big-endian width, then one RLE
    # stream per component.
    for c in range(4):
        j = 0
        while j < width:
            if pos >= len(buf):
                raise ParseError("truncated RLE scanline", offset=len(buf))
            code = buf[pos]
            pos += 1
            if code > 128:
                run = code - 128
                if pos >= len(buf):
                    raise ParseError("truncated RLE run", offset=len(buf))
                if j + run > width:
                    raise ParseError("RLE run overflows scanline", offset=pos)
                out_row[j:j + run, c] = buf[pos]
                pos += 1
                j += run
            else:
                if code == 0:
                    raise ParseError("zero-length RLE literal", offset=pos - 1)
                if pos + code > len(buf):
                    raise ParseError("truncated RLE literal", offset=len(buf))
                if j + code > width:
                    raise ParseError("RLE literal overflows scanline", offset=pos)
                out_row[j:j + code, c] = np.frombuffer(
                    buf, dtype=np.uint8, count=code, offset=pos)
                pos += code
                j += code
    return pos


def _decode_flat_scanline(buf, pos, width, out_row):
    # Plain RGBE quadruples with the legacy (1,1,1,n) repeat marker.
    j = 0
    while j < width:
        if pos + 4 > len(buf):
            raise ParseError("truncated scanline", offset=len(buf))
        r, g, b, e = buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]
        pos += 4
        if r == 1 and g == 1 and b == 1:
            if j == 0:
                raise ParseError("repeat marker with no previous pixel",
                                 offset=pos - 4)
            run = e
            if j + run > width:
                raise ParseError("repeat run overflows scanline", offset=pos - 1)
            out_row[j:j + run] = out_row[j - 1]
            j += run
        else:
            out_row[j] = (r, g, b, e)
            j += 1
    return pos


def rgbe_to_float(rgbe):
    """Decode (..., 4) uint8 RGBE samples to float32 RGB."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    exp = rgbe[..., 3].astype(np.int32)
    scale = np.where(exp == 0, 0.0, np.exp2(exp - 136.0)).astype(np.float32)
    return rgbe[..., :3].astype(np.float32) * scale[..., None]


def read_rgbe(path):
    """Read a Radiance .hdr file; returns float32 RGB of shape (h, w, 3)."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) == 0:
        raise ParseError("empty file", offset=0)
    if not (buf.startswith(b"#?RADIANCE") or buf.startswith(b"#?RGBE")):
        raise ParseError("missing #?RADIANCE signature", offset=0)

    end_hdr = buf.find(b"\n\n")
    if end_hdr < 0:
        raise ParseError("header not terminated by blank line", offset=len(buf))
    res_end = buf.find(b"\n", end_hdr + 2)
    if res_end < 0:
        raise ParseError("missing resolution line", offset=end_hdr + 2)
    res_line = buf[end_hdr + 2:res_end]
    m = re.match(rb"^-Y\s+(\d+)\s+\+X\s+(\d+)\s*$", res_line)
    if not m:
        raise ParseError(f"unsupported resolution string {res_line!r}",
                         offset=end_hdr + 2)
    height, width = int(m.group(1)), int(m.group(2))
    if height <= 0 or width <= 0:
        raise ParseError(f"non-positive dimensions {width}x{height}",
                         offset=end_hdr + 2)

    pos = res_end + 1
    rgbe = np.zeros((height, width, 4), dtype=np.uint8)
    for y in range(height):
        row = rgbe[y]
        use_rle = (8 <= width <= 0x7FFF
                   and pos + 4 <= len(buf)
                   and buf[pos] == 2 and buf[pos + 1] == 2
                   and (buf[pos + 2] & 0x80) == 0)
        if use_rle:
            declared = (buf[pos + 2] << 8) | buf[pos + 3]
            if declared != width:
                raise ParseError(
                    f"RLE scanline declares width {declared}, expected {width}",
                    offset=pos + 2)
            pos = _decode_rle_scanline(buf, pos + 4, width, row)
        else:
            pos = _decode_flat_scanline(buf, pos, width, row)
    return rgbe_to_float(rgbe)
