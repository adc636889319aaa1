"""Single-shot coded LDR capture simulation.

Pipeline: optical PSF blur -> per-pixel mask modulation -> exposure metering
-> clamp/normalize -> camera response -> 8-bit quantization, plus the
reliability raster marking saturated and under-exposed codes.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import imagery, masks
from .imagery import LdrImage, RadianceImage


def gaussian_psf(size=5, sigma=0.5):
    """Normalized 2-D Gaussian kernel; size=1 gives the identity delta."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"psf size must be odd and >= 1, got {size}")
    r = np.arange(size) - size // 2
    g = np.exp(-0.5 * (r / sigma) ** 2)
    k = np.outer(g, g)
    return (k / k.sum()).astype(np.float64)


def delta_psf():
    return np.ones((1, 1), dtype=np.float64)


@dataclass(frozen=True)
class CaptureConfig:
    psf: np.ndarray = field(default_factory=gaussian_psf)
    sensor_dr: float = 1000.0
    crf: str = "linear"          # "linear" or "gamma"
    crf_gamma: float = 2.2
    quantization_bits: int = 8
    metering: str = "min-clip"
    noise_std: float = 0.0       # additive read noise in window-normalized units
    noise_seed: int = 0

    def __post_init__(self):
        psf = np.asarray(self.psf, dtype=np.float64)
        if psf.ndim != 2 or psf.size == 0 or (psf < 0).any():
            raise ValueError("psf must be a non-negative 2-D kernel")
        s = psf.sum()
        if not np.isclose(s, 1.0, rtol=1e-6):
            raise ValueError(f"psf must sum to 1, got {s}")
        object.__setattr__(self, "psf", psf / s)
        if self.sensor_dr <= 1:
            raise ValueError(f"sensor_dr must exceed 1, got {self.sensor_dr}")
        if self.crf not in ("linear", "gamma"):
            raise ValueError(f"unknown crf {self.crf!r}")
        if self.quantization_bits != 8:
            raise ValueError("only 8-bit quantization is supported")


@dataclass(frozen=True)
class CodedLdrImage:
    """Quantized coded capture plus the metadata needed to invert it."""

    ldr: LdrImage
    mask: masks.ExposureMask
    exposure_floor: float
    exposure_ceiling: float
    reliability: np.ndarray
    config: CaptureConfig

    @property
    def height(self):
        return self.ldr.height

    @property
    def width(self):
        return self.ldr.width

    @property
    def channels(self):
        return self.ldr.channels


def meter(values, sensor_dr):
    """Choose the sensor window [floor, floor*sensor_dr] clipping the fewest pixels.

    Searching the distinct positive data values as candidate floors is
    sufficient: any window is dominated by the one whose floor sits at the
    smallest data value it covers. Ties break toward the smallest floor.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    pos = np.sort(vals[vals > 0])
    if pos.size == 0:
        raise ValueError("cannot meter an all-zero scene")
    n_zero = vals.size - pos.size

    cands = np.unique(pos)
    under = n_zero + np.searchsorted(pos, cands, side="left")
    over = pos.size - np.searchsorted(pos, cands * sensor_dr, side="right")
    counts = under + over
    floor = float(cands[np.argmin(counts)])  # argmin takes the first (smallest) tie
    return floor, floor * sensor_dr


def reliability_mask(ldr, low_thresh=2, high_thresh=253):
    """1 where the code is trustworthy, 0 where saturated or under-exposed."""
    codes = ldr.data
    ok = (codes > low_thresh) & (codes < high_thresh)
    return ok.astype(np.float32)


def _apply_psf(scene_data, psf):
    if psf.shape == (1, 1):
        return scene_data * psf[0, 0]
    out = np.empty_like(scene_data, dtype=np.float64)
    for c in range(scene_data.shape[2]):
        out[:, :, c] = ndimage.convolve(scene_data[:, :, c].astype(np.float64),
                                        psf, mode="reflect")
    return out


def _encode_crf(t, cfg):
    if cfg.crf == "linear":
        return t
    return np.power(t, 1.0 / cfg.crf_gamma)


def _decode_crf(t, cfg):
    if cfg.crf == "linear":
        return t
    if cfg.crf == "gamma":
        return np.power(t, cfg.crf_gamma)
    raise ValueError(f"unknown crf {cfg.crf!r}")


def simulate_capture(scene, mask, cfg=None):
    """Simulate the single-shot coded 8-bit capture of an HDR scene."""
    cfg = cfg or CaptureConfig()
    if (scene.height, scene.width) != (mask.height, mask.width):
        raise ValueError(f"scene {scene.height}x{scene.width} does not match "
                         f"mask {mask.height}x{mask.width}")
    blurred = _apply_psf(scene.data, cfg.psf)
    sensed = blurred * mask.values[:, :, None]

    floor, ceiling = meter(sensed, cfg.sensor_dr)
    t = (np.clip(sensed, floor, ceiling) - floor) / (ceiling - floor)
    if cfg.noise_std > 0:
        rng = np.random.Generator(np.random.Philox(cfg.noise_seed))
        t = np.clip(t + rng.normal(0.0, cfg.noise_std, t.shape), 0.0, 1.0)
    levels = 2 ** cfg.quantization_bits - 1
    codes = np.floor(_encode_crf(t, cfg) * levels + 0.5).astype(np.uint8)

    ldr = LdrImage(codes)
    return CodedLdrImage(ldr, mask, floor, ceiling, reliability_mask(ldr), cfg)


def linearize(coded):
    """Invert quantization, camera response, and window normalization.

    Returns the measurement as radiance in the metered window; code 0 maps
    to the window floor and code 255 to the ceiling.
    """
    cfg = coded.config
    levels = 2 ** cfg.quantization_bits - 1
    t = _decode_crf(coded.ldr.data.astype(np.float64) / levels, cfg)
    rad = coded.exposure_floor + t * (coded.exposure_ceiling - coded.exposure_floor)
    return RadianceImage(rad.astype(np.float32))


# ---------------------------------------------------------------------------
# Persistence: PNG (codes) + PFM (reliability) + JSON (metadata)
# ---------------------------------------------------------------------------

def save_coded(coded, path_prefix):
    imagery.save_png(coded.ldr, f"{path_prefix}.png")
    imagery.save_pfm(RadianceImage(coded.reliability), f"{path_prefix}_reliability.pfm")
    masks.save_mask(coded.mask, f"{path_prefix}_mask")
    cfg = coded.config
    meta = {
        "floor": coded.exposure_floor,
        "ceiling": coded.exposure_ceiling,
        "sensor_dr": cfg.sensor_dr,
        "crf": cfg.crf,
        "crf_gamma": cfg.crf_gamma,
        "quantization_bits": cfg.quantization_bits,
        "psf": np.asarray(cfg.psf).tolist(),
        "mask": f"{path_prefix}_mask",
        "ldr": f"{path_prefix}.png",
        "reliability": f"{path_prefix}_reliability.pfm",
    }
    with open(f"{path_prefix}.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_coded(path_prefix):
    with open(f"{path_prefix}.json") as f:
        meta = json.load(f)
    ldr = imagery.load_png(meta["ldr"])
    rel = imagery.load_pfm(meta["reliability"]).data
    if rel.shape[2] == 1 and ldr.channels == 3:
        rel = np.repeat(rel, 3, axis=2)
    mask = masks.load_mask(meta["mask"])
    cfg = CaptureConfig(psf=np.asarray(meta["psf"], dtype=np.float64),
                        sensor_dr=meta["sensor_dr"], crf=meta["crf"],
                        crf_gamma=meta["crf_gamma"],
                        quantization_bits=meta["quantization_bits"])
    return CodedLdrImage(ldr, mask, meta["floor"], meta["ceiling"],
                         rel.astype(np.float32), cfg)
