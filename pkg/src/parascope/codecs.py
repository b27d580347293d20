"""Image byte codecs: PPM-P6 (binary, maxval 255) and lossless PNG.

PPM is the bit-exact interchange format (also the subprocess protocol
for external backends); PNG is for real data exchange and blob storage.
decode(encode(img)) reproduces the pixel buffer exactly for both.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .errors import MalformedHeader, TruncatedPayload, UnsupportedBitDepth
from .imaging import RasterImage

PPM = "ppm"
PNG = "png"

_WS = b" \t\r\n"


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Netpbm: tokens separated by whitespace; '#' starts a comment to EOL.
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in b"\r\n":
                pos += 1
        elif c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of header")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> RasterImage:
    if len(data) < 2 or data[:2] != b"P6":
        raise MalformedHeader("not a P6 stream")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise MalformedHeader(f"non-integer header field {token!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedBitDepth(f"maxval {maxval}, only 255 supported")
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1  # exactly one whitespace byte separates header and payload
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise TruncatedPayload(f"need {need} payload bytes, have {len(payload)}")
    return RasterImage.from_bytes(width, height, payload)


def encode_ppm(img: RasterImage) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.tobytes()


def decode_png(data: bytes) -> RasterImage:
    # IHDR bit-depth byte sits at offset 24 of a well-formed stream.
    if len(data) > 24 and data[:8] == b"\x89PNG\r\n\x1a\n" and data[24] == 16:
        raise UnsupportedBitDepth("16-bit PNG not supported")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode in ("P", "LA", "PA"):
                im = im.convert("RGBA")
            if im.mode == "RGBA":
                im = im.convert("RGB")  # alpha stripped per contract
            elif im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except UnsupportedBitDepth:
        raise
    except Exception as exc:
        raise MalformedHeader(f"PNG decode failed: {exc}") from exc
    return RasterImage(arr.copy())


def encode_png(img: RasterImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def decode_image(data: bytes, fmt: str) -> RasterImage:
    if not data:
        raise MalformedHeader("empty byte sequence")
    if fmt == PPM:
        return decode_ppm(data)
    if fmt == PNG:
        return decode_png(data)
    raise ValueError(f"unknown format {fmt!r}")


def encode_image(img: RasterImage, fmt: str) -> bytes:
    if fmt == PPM:
        return encode_ppm(img)
    if fmt == PNG:
        return encode_png(img)
    raise ValueError(f"unknown format {fmt!r}")


def sniff_format(data: bytes) -> str:
    """Guess the codec from magic bytes."""
    if data[:2] == b"P6":
        return PPM
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return PNG
    raise MalformedHeader("unrecognized image format")


def load_image(path) -> RasterImage:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        raise MalformedHeader(f"{path}: empty file")
    return decode_image(data, sniff_format(data))
