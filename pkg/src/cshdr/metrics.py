"""Quality evaluation: scale-aligned PSNR, SSIM, false-color stop maps,
scanline profiles. Relative radiance carries a free global scale, so PSNR
is always computed after least-squares alignment of the luminances.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import imagery
from .imagery import LdrImage, RadianceImage

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

# Blue -> cyan -> green -> yellow -> red, interpolated linearly.
_RAMP = np.array([
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
])


def _values(img):
    return img.data.astype(np.float64) if isinstance(img, (RadianceImage, LdrImage)) \
        else np.asarray(img, dtype=np.float64)


def align_scale(rec, gt):
    """Least-squares scale c* = <rec, gt> / <rec, rec> minimizing ||c*rec - gt||."""
    r = _values(rec).ravel()
    g = _values(gt).ravel()
    if r.shape != g.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {g.shape}")
    rr = float(r @ r)
    if rr == 0:
        raise ValueError("cannot align an all-zero reconstruction")
    return float(r @ g) / rr


def psnr(rec, gt, peak="max"):
    """10*log10(peak^2 / MSE); peak defaults to the ground-truth maximum.

    Inputs are expected to be scale-aligned already. MSE of zero reports
    the +inf sentinel.
    """
    r = _values(rec)
    g = _values(gt)
    if r.shape != g.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {g.shape}")
    mse = float(np.mean((r - g) ** 2))
    if mse == 0:
        return math.inf
    pk = float(g.max()) if peak == "max" else float(peak)
    return 10.0 * math.log10(pk * pk / mse)


def ssim_map(rec, gt):
    """Mean SSIM and the per-pixel (1 - SSIM) map for 1-channel rasters.

    Standard 11x11 Gaussian window (sigma 1.5) with C1 = 0.01^2 and
    C2 = 0.03^2 on unit dynamic range; inputs are normalized by the
    ground-truth maximum.
    """
    x = _values(rec)
    y = _values(gt)
    x = x[:, :, 0] if x.ndim == 3 else x
    y = y[:, :, 0] if y.ndim == 3 else y
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    scale = float(y.max())
    if scale > 0:
        x = x / scale
        y = y / scale

    # truncate chosen so the window spans exactly 11x11 taps
    blur = lambda a: ndimage.gaussian_filter(a, 1.5, truncate=5.0 / 1.5, mode="reflect")
    mu_x = blur(x)
    mu_y = blur(y)
    var_x = blur(x * x) - mu_x ** 2
    var_y = blur(y * y) - mu_y ** 2
    cov = blur(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    s = num / den
    return float(s.mean()), 1.0 - s


def false_color_stops(img, floor_stop=None, ceil_stop=None):
    """Render log2 luminance on a blue-to-red ramp (one hue sweep across the
    stop range). Zero pixels are clamped to half the smallest positive value."""
    lum = imagery.luminance(img).data[:, :, 0].astype(np.float64)
    pos = lum[lum > 0]
    if pos.size == 0:
        return LdrImage(np.zeros(lum.shape + (3,), dtype=np.uint8))
    lum = np.maximum(lum, pos.min() / 2.0)
    stops = np.log2(lum)
    lo = float(stops.min()) if floor_stop is None else float(floor_stop)
    hi = float(stops.max()) if ceil_stop is None else float(ceil_stop)
    t = np.zeros_like(stops) if hi <= lo else np.clip((stops - lo) / (hi - lo), 0.0, 1.0)

    pos = t * (len(_RAMP) - 1)
    i0 = np.clip(pos.astype(int), 0, len(_RAMP) - 2)
    frac = (pos - i0)[..., None]
    rgb = _RAMP[i0] * (1.0 - frac) + _RAMP[i0 + 1] * frac
    return LdrImage(np.floor(rgb * 255.0 + 0.5).astype(np.uint8))


def scanline_profile(img, row):
    """Luminance of one row divided by its maximum (zeros for a zero row)."""
    lum = imagery.luminance(img).data[:, :, 0].astype(np.float64)
    if not 0 <= row < lum.shape[0]:
        raise ValueError(f"row {row} out of range for height {lum.shape[0]}")
    line = lum[row]
    m = line.max()
    return line / m if m > 0 else np.zeros_like(line)


@dataclass
class EvalReport:
    psnr_db: float
    ssim_mean: float
    scale_applied: float
    error_map: np.ndarray   # squared difference of aligned luminances

    def as_dict(self):
        return {"psnr_db": self.psnr_db, "ssim_mean": self.ssim_mean,
                "scale_applied": self.scale_applied}


def evaluate(rec, gt):
    """Full report: align luminance scale, then PSNR, SSIM, and error map."""
    rec_lum = imagery.luminance(rec).data[:, :, 0].astype(np.float64)
    gt_lum = imagery.luminance(gt).data[:, :, 0].astype(np.float64)
    c = align_scale(rec_lum, gt_lum)
    aligned = c * rec_lum
    p = psnr(aligned, gt_lum)
    s, _ = ssim_map(aligned, gt_lum)
    return EvalReport(p, s, c, (aligned - gt_lum) ** 2)
