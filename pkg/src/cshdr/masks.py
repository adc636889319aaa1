"""Per-pixel exposure mask generators.

Each generator is a pure function of (dimensions, parameters, seed) using a
counter-based Philox PRNG, so masks reproduce exactly from their JSON
sidecar. Transmissivity values always lie in [0, 1].
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import imagery

PRNG_NAME = "philox4x64"

# Four exposures, 2 stops apart, spanning the 6-stop ratio e4/e1 = 2**6.
DEFAULT_LEVELS = (2.0 ** -6, 2.0 ** -4, 2.0 ** -2, 1.0)

# Interleaved dual-gain default: ISO 100/800 -> ratio 8.
DEFAULT_INTERLEAVED = (0.125, 1.0)


@dataclass(frozen=True)
class ExposureMask:
    values: np.ndarray
    kind: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("mask transmissivities must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _check_dims(w, h):
    if w <= 0 or h <= 0:
        raise ValueError(f"mask dimensions must be positive, got {w}x{h}")


def gen_binary(w, h, p_on=0.5, seed=0):
    """Each pixel is 1 with probability p_on, else 0."""
    _check_dims(w, h)
    if not 0.0 < p_on < 1.0:
        raise ValueError(f"p_on must lie strictly in (0, 1), got {p_on}")
    vals = (_rng(seed).random((h, w)) < p_on).astype(np.float32)
    return ExposureMask(vals, "binary", seed, {"p_on": p_on})


def gen_gaussian(w, h, mean=0.6, stddev=0.1, seed=0):
    """I.i.d. normal transmissivities, clamped to [0, 1]."""
    _check_dims(w, h)
    if not 0.0 < mean < 1.0:
        raise ValueError(f"mean must lie in (0, 1), got {mean}")
    if stddev <= 0:
        raise ValueError(f"stddev must be positive, got {stddev}")
    vals = np.clip(_rng(seed).normal(mean, stddev, (h, w)), 0.0, 1.0)
    return ExposureMask(vals.astype(np.float32), "gaussian", seed,
                        {"mean": mean, "stddev": stddev})


def gen_uniform(w, h, seed=0):
    """I.i.d. uniform transmissivities on [0, 1)."""
    _check_dims(w, h)
    vals = _rng(seed).random((h, w)).astype(np.float32)
    return ExposureMask(vals, "uniform", seed, {})


def _check_levels(levels):
    levels = tuple(float(v) for v in levels)
    if len(levels) != 4:
        raise ValueError(f"need exactly 4 exposure levels, got {len(levels)}")
    if any(not 0.0 < v <= 1.0 for v in levels):
        raise ValueError(f"levels must lie in (0, 1], got {levels}")
    if list(levels) != sorted(levels):
        raise ValueError(f"levels must be sorted ascending, got {levels}")
    return levels


def gen_four_exposure(w, h, levels=DEFAULT_LEVELS, seed=0):
    """Each pixel takes one of 4 exposure values, uniformly at random."""
    _check_dims(w, h)
    levels = _check_levels(levels)
    idx = _rng(seed).integers(0, 4, (h, w))
    vals = np.asarray(levels, dtype=np.float32)[idx]
    return ExposureMask(vals, "four_exposure", seed, {"levels": list(levels)})


def gen_fixed_pattern(w, h, levels=DEFAULT_LEVELS):
    """Repeating fixed 2x2 pattern [[e1, e2], [e3, e4]]; deterministic."""
    _check_dims(w, h)
    levels = _check_levels(levels)
    rr, cc = np.meshgrid(np.arange(h) % 2, np.arange(w) % 2, indexing="ij")
    vals = np.asarray(levels, dtype=np.float32)[2 * rr + cc]
    return ExposureMask(vals, "fixed_pattern", 0, {"levels": list(levels)})


def gen_interleaved(w, h, e_low=DEFAULT_INTERLEAVED[0], e_high=DEFAULT_INTERLEAVED[1]):
    """Alternating rows of two exposures: even rows e_high, odd rows e_low."""
    _check_dims(w, h)
    if not 0.0 < e_low < e_high <= 1.0:
        raise ValueError(f"need 0 < e_low < e_high <= 1, got {e_low}, {e_high}")
    vals = np.where((np.arange(h) % 2 == 0)[:, None], e_high, e_low)
    vals = np.broadcast_to(vals, (h, w)).astype(np.float32)
    return ExposureMask(vals, "interleaved", 0, {"e_low": e_low, "e_high": e_high})


GENERATORS = {
    "binary": gen_binary,
    "gaussian": gen_gaussian,
    "uniform": gen_uniform,
    "four_exposure": gen_four_exposure,
    "fixed_pattern": gen_fixed_pattern,
    "interleaved": gen_interleaved,
}


def save_mask(mask, path_prefix):
    """Write <prefix>.pfm (values) and <prefix>.json (kind, params, seed, prng)."""
    imagery.save_pfm(imagery.RadianceImage(mask.values), f"{path_prefix}.pfm")
    meta = {"kind": mask.kind, "parameters": mask.params, "seed": mask.seed,
            "prng": PRNG_NAME, "width": mask.width, "height": mask.height}
    with open(f"{path_prefix}.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_mask(path_prefix):
    vals = imagery.load_pfm(f"{path_prefix}.pfm").plane(0)
    with open(f"{path_prefix}.json") as f:
        meta = json.load(f)
    return ExposureMask(vals, meta["kind"], meta.get("seed", 0), meta.get("parameters", {}))
