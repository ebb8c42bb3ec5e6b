"""Portable FloatMap (.pfm) reading and writing.

Header: "PF" (RGB) or "Pf" (grayscale), then "<width> <height>", then a scale
whose sign encodes byte order (negative = little-endian). The binary payload
is IEEE-754 binary32, rows stored bottom-to-top.
"""

import numpy as np

from .errors import ParseError


def _next_token(buf, pos):
    # Tokens are separated by single whitespace bytes; '#' starts a comment.
    while pos < len(buf) and buf[pos:pos + 1].isspace():
        pos += 1
    if pos < len(buf) and buf[pos:pos + 1] == b"#":
        end = buf.find(b"\n", pos)
        if end < 0:
            raise ParseError("unterminated comment", offset=pos)
        return _next_token(buf, end + 1)
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", offset=start)
    return buf[start:pos], pos


def read_pfm(path):
    """Read a .pfm file; returns a float32 array (h, w) or (h, w, 3), row 0 = top."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) == 0:
        raise ParseError("empty file", offset=0)

    magic, pos = _next_token(buf, 0)
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise ParseError(f"bad magic {magic!r}, expected PF or Pf", offset=0)

    wtok, pos = _next_token(buf, pos)
    wpos = pos - len(wtok)
    htok, pos = _next_token(buf, pos)
    hpos = pos - len(htok)
    stok, pos = _next_token(buf, pos)
    spos = pos - len(stok)
    try:
        width, height = int(wtok), int(htok)
    except ValueError:
        raise ParseError(f"bad dimensions {wtok!r} x {htok!r}", offset=wpos) from None
    if width <= 0 or height <= 0:
        raise ParseError(f"non-positive dimensions {width}x{height}", offset=hpos)
    try:
        scale = float(stok)
    except ValueError:
        raise ParseError(f"bad scale {stok!r}", offset=spos) from None
    if scale == 0:
        raise ParseError("zero scale", offset=spos)

    pos += 1  # exactly one whitespace byte separates header from payload
    count = width * height * channels
    need = count * 4
    if len(buf) - pos < need:
        raise ParseError(
            f"truncated payload: need {need} bytes, have {len(buf) - pos}",
            offset=pos)
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    data = data.astype(np.float32, copy=True)
    if channels == 3:
        data = data.reshape(height, width, 3)
    else:
        data = data.reshape(height, width)
    return data[::-1].copy()  # stored bottom-to-top


def write_pfm(path, data):
    """Write float32 data of shape (h, w) or (h, w, 3) as little-endian .pfm."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"cannot write shape {arr.shape} as PFM")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(arr[::-1].astype("<f4").tobytes())
