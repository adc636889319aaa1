"""Image containers, HDR/LDR file I/O, luminance and display tonemapping.

Rasters are stored as float32 (radiance) or uint8 (LDR) numpy arrays of
shape (height, width, channels) with channels in {1, 3}. Reductions are
accumulated in float64.
"""

import re
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

# Rec.709 luma weights for linear RGB.
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)


class FormatError(ValueError):
    """Malformed image file header or payload."""


def _as_raster(data, dtype):
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W) or (H, W, 1|3) raster, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class RadianceImage:
    """Relative-radiance raster: finite, non-negative float32 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_raster(self.data, np.float32)
        bad = ~np.isfinite(arr) | (arr < 0)
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ValueError(f"radiance values must be finite and >= 0; first bad flat index {idx}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    def plane(self, i=0):
        """Channel `i` as a 2-D float32 array."""
        return self.data[:, :, i]


@dataclass(frozen=True)
class LdrImage:
    """8-bit integer raster with codes in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_raster(self.data, np.uint8)
        object.__setattr__(self, "data", arr)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    def plane(self, i=0):
        return self.data[:, :, i]


# ---------------------------------------------------------------------------
# PFM (portable float map)
# ---------------------------------------------------------------------------

def _read_pfm_token(f):
    # Tokens are separated by whitespace; comments (#...) allowed in header.
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise FormatError("unexpected end of PFM header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok.decode("ascii")
            continue
        tok += c


def read_pfm(path):
    """Read a PFM file into a float32 array of shape (H, W, C), C in {1, 3}.

    Handles both Pf (grayscale) and PF (RGB), either endianness, and honors
    the scale factor. Rows are stored bottom-to-top in the file. No value
    validation; use load_pfm for validated radiance data.
    """
    with open(path, "rb") as f:
        magic = _read_pfm_token(f)
        if magic == "PF":
            channels = 3
        elif magic == "Pf":
            channels = 1
        else:
            raise FormatError(f"not a PFM file (magic {magic!r})")
        try:
            width = int(_read_pfm_token(f))
            height = int(_read_pfm_token(f))
            scale = float(_read_pfm_token(f))
        except ValueError as e:
            raise FormatError(f"bad PFM header: {e}") from e
        if width <= 0 or height <= 0 or scale == 0:
            raise FormatError(f"bad PFM dimensions/scale: {width}x{height}, scale {scale}")
        count = width * height * channels
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(4 * count)
        if len(raw) != 4 * count:
            raise FormatError(f"PFM payload truncated: need {4 * count} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).reshape(height, width, channels)
    arr = np.flipud(arr).astype(np.float32)
    if abs(scale) != 1.0:
        arr = arr * np.float32(abs(scale))
    return arr


def write_pfm(arr, path):
    """Write a float32 (H, W[, C]) array as little-endian PFM (scale -1.0)."""
    arr = _as_raster(arr, np.float32)
    magic = b"PF" if arr.shape[2] == 3 else b"Pf"
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(arr).astype("<f4").tobytes())


def load_pfm(path):
    """Read a PFM file into a validated RadianceImage."""
    return RadianceImage(read_pfm(path))


def save_pfm(img, path):
    """Write a RadianceImage as little-endian PFM (lossless round-trip)."""
    write_pfm(img.data, path)


# ---------------------------------------------------------------------------
# Radiance RGBE (.hdr)
# ---------------------------------------------------------------------------

def _rgbe_to_float(rgbe):
    """Decode (..., 4) uint8 RGBE to linear float32: v = c * 2**(e - 136)."""
    rgbe = rgbe.astype(np.int32)
    e = rgbe[..., 3]
    scale = np.where(e == 0, 0.0, np.ldexp(1.0, e - 136))
    return (rgbe[..., :3] * scale[..., None]).astype(np.float32)


def _read_rgbe_scanline(f, width):
    head = f.read(4)
    if len(head) != 4:
        raise FormatError("unexpected end of RGBE scanline data")
    if head[0] == 2 and head[1] == 2 and (head[2] << 8 | head[3]) == width and width >= 8:
        # New-style RLE: four component streams per scanline.
        row = np.empty((width, 4), dtype=np.uint8)
        for c in range(4):
            pos = 0
            while pos < width:
                b = f.read(1)
                if not b:
                    raise FormatError("truncated RGBE RLE stream")
                n = b[0]
                if n > 128:  # run
                    run = n - 128
                    v = f.read(1)
                    if not v or pos + run > width:
                        raise FormatError("bad RGBE RLE run")
                    row[pos:pos + run, c] = v[0]
                    pos += run
                else:  # literal
                    lit = f.read(n)
                    if len(lit) != n or pos + n > width:
                        raise FormatError("bad RGBE RLE literal")
                    row[pos:pos + n, c] = np.frombuffer(lit, dtype=np.uint8)
                    pos += n
        return row
    # Flat scanline: `head` is the first pixel.
    rest = f.read(4 * (width - 1))
    if len(rest) != 4 * (width - 1):
        raise FormatError("truncated flat RGBE scanline")
    return np.frombuffer(head + rest, dtype=np.uint8).reshape(width, 4)


def load_rgbe(path):
    """Read a Radiance RGBE (.hdr) file into a 3-channel RadianceImage."""
    with open(path, "rb") as f:
        magic = f.readline()
        if not magic.startswith(b"#?"):
            raise FormatError("not a Radiance RGBE file (missing #? magic)")
        fmt_ok = True
        while True:
            line = f.readline()
            if not line:
                raise FormatError("unexpected end of RGBE header")
            line = line.strip()
            if not line:
                break
            if line.startswith(b"FORMAT="):
                fmt_ok = line == b"FORMAT=32-bit_rle_rgbe"
        if not fmt_ok:
            raise FormatError("unsupported RGBE FORMAT (need 32-bit_rle_rgbe)")
        res = f.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise FormatError(f"unsupported RGBE resolution line: {b' '.join(res)!r}")
        height, width = int(res[1]), int(res[3])
        rows = [_read_rgbe_scanline(f, width) for _ in range(height)]
    return RadianceImage(_rgbe_to_float(np.stack(rows, axis=0)))


# ---------------------------------------------------------------------------
# Dispatch + PNG
# ---------------------------------------------------------------------------

def load_hdr(path):
    """Load an HDR raster from .pfm or Radiance .hdr, by extension."""
    name = str(path).lower()
    if name.endswith(".pfm"):
        return load_pfm(path)
    if name.endswith(".hdr"):
        return load_rgbe(path)
    raise FormatError(f"unsupported HDR format for {path!r} (want .pfm or .hdr)")


def save_hdr(img, path):
    """Write a RadianceImage to disk as PFM (lossless round-trip)."""
    save_pfm(img, path)


def load_png(path):
    arr = np.asarray(Image.open(path))
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return LdrImage(arr)


def save_png(img, path):
    data = img.data[:, :, 0] if img.channels == 1 else img.data
    Image.fromarray(data).save(path, format="PNG")


# ---------------------------------------------------------------------------
# Luminance and display tonemapping
# ---------------------------------------------------------------------------

def luminance(img):
    """Rec.709 luminance of a 3-channel image; 1-channel input is returned unchanged."""
    if img.channels == 1:
        return img
    lum = img.data.astype(np.float64) @ LUMA_WEIGHTS
    return RadianceImage(lum.astype(np.float32))


def tonemap_display(img):
    """Map radiance to display codes: 99.9th-percentile normalization,
    v/(1+v) compression, gamma 1/2.2, 8-bit quantization.

    Display only; never used in quality metrics. All-zero input maps to
    all-zero output.
    """
    lum = luminance(img).data
    ref = float(np.percentile(lum.astype(np.float64), 99.9))
    if ref <= 0:
        return LdrImage(np.zeros_like(img.data, dtype=np.uint8))
    v = img.data.astype(np.float64) / ref
    v = v / (1.0 + v)
    v = np.clip(v, 0.0, 1.0) ** (1.0 / 2.2)
    codes = np.clip(np.floor(v * 255.0 + 0.5), 0, 255)
    return LdrImage(codes.astype(np.uint8))
