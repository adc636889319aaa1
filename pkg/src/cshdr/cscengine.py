"""Numerical core for convolutional sparse coding in the Fourier domain.

Filter banks, feature maps, the circular synthesis operator and its adjoint,
proximal operators, the per-frequency linear solve used by the ADMM updates,
and the composite objective. All convolutions here are circular; callers pad
images with a reflective margin so wrap-around never touches content.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import imagery

ACTIVE_EPS = 1e-8  # coefficient magnitude counted as "active"


def embed_kernel(kernel, shape):
    """Embed a small kernel in an HxW array with its center tap at (0, 0)."""
    H, W = shape
    p, q = kernel.shape
    if p > H or q > W:
        raise ValueError(f"kernel {p}x{q} larger than raster {H}x{W}")
    arr = np.zeros(shape, dtype=np.float64)
    arr[:p, :q] = kernel
    return np.roll(arr, (-(p // 2), -(q // 2)), axis=(0, 1))


def extract_kernel(full, p):
    """Inverse of embed_kernel: recover the pxp support around the origin."""
    c = p // 2
    return np.roll(full, (c, c), axis=(0, 1))[:p, :p].copy()


def dirac(p):
    """Centered unit impulse of support pxp (the implicit offset filter)."""
    d = np.zeros((p, p), dtype=np.float64)
    d[p // 2, p // 2] = 1.0
    return d


@dataclass(frozen=True)
class FilterBank:
    """K learned filters of odd square support, each with ||d||_2^2 <= 1.

    A Dirac offset filter is implicit as channel K+1 of every operator built
    from the bank.
    """

    filters: np.ndarray            # (K, p, p)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.filters, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError(f"filters must be (K, p, p), got {arr.shape}")
        if arr.shape[1] % 2 == 0:
            raise ValueError("filter support must be odd (center ambiguity)")
        norms = np.sum(arr ** 2, axis=(1, 2))
        if (norms > 1.0 + 1e-6).any():
            raise ValueError(f"filter energy exceeds 1: max ||d||^2 = {norms.max()}")
        object.__setattr__(self, "filters", arr)
        object.__setattr__(self, "_op_cache", {})

    @property
    def k_count(self):
        return self.filters.shape[0]

    @property
    def size(self):
        return self.filters.shape[1]

    def dirac(self):
        return dirac(self.size)

    def operator(self, shape, psf=None, with_offset=True):
        """CSC operator for this bank at a raster shape; spectra are cached."""
        key = (tuple(shape), None if psf is None else np.asarray(psf).tobytes(), with_offset)
        op = self._op_cache.get(key)
        if op is None:
            op = CscOperator(self, shape, psf=psf, with_offset=with_offset)
            self._op_cache[key] = op
        return op


@dataclass(frozen=True)
class FeatureMaps:
    """Stacked coefficient rasters; the last map is the smooth offset channel."""

    maps: np.ndarray               # (K+1, H, W), or (K, H, W) when with_offset=False
    with_offset: bool = True

    def __post_init__(self):
        arr = np.asarray(self.maps, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"maps must be (C, H, W), got {arr.shape}")
        object.__setattr__(self, "maps", arr)

    @property
    def sparse_maps(self):
        return self.maps[:-1] if self.with_offset else self.maps

    @property
    def offset_map(self):
        if not self.with_offset:
            raise ValueError("feature maps carry no offset channel")
        return self.maps[-1]

    def l1_per_map(self):
        return np.abs(self.sparse_maps).sum(axis=(1, 2))

    def active_count(self, threshold=ACTIVE_EPS):
        """Number of sparse coefficients with magnitude above threshold."""
        return int((np.abs(self.sparse_maps) > threshold).sum())


class CscOperator:
    """Circular synthesis operator y = sum_k (P * d_k) (*) z_k at fixed shape.

    Holds the padded Fourier spectra of the (optionally PSF-convolved)
    filters; `apply` maps stacked coefficient rasters to an image and
    `adjoint` is its exact transpose.
    """

    def __init__(self, bank, shape, psf=None, with_offset=True):
        self.shape = tuple(shape)
        self.with_offset = with_offset
        kernels = [bank.filters[k] for k in range(bank.k_count)]
        if with_offset:
            kernels.append(bank.dirac())
        base = np.stack([embed_kernel(k, self.shape) for k in kernels])
        spectra = np.fft.rfft2(base)
        if psf is not None:
            psf = np.asarray(psf, dtype=np.float64)
            if psf.shape != (1, 1):
                spectra = spectra * np.fft.rfft2(embed_kernel(psf, self.shape))[None]
            else:
                spectra = spectra * psf[0, 0]
        self.spectra = spectra          # (C, H, W//2+1) complex
        self.n_channels = spectra.shape[0]

    def apply(self, maps):
        """Synthesize the image sum_k filter_k (*) maps_k."""
        zf = np.fft.rfft2(np.asarray(maps, dtype=np.float64), axes=(-2, -1))
        return np.fft.irfft2((self.spectra * zf).sum(axis=0), s=self.shape)

    def adjoint(self, image):
        """Transpose of apply: per-channel correlation with the filters."""
        yf = np.fft.rfft2(np.asarray(image, dtype=np.float64))
        return np.fft.irfft2(np.conj(self.spectra) * yf[None], s=self.shape, axes=(-2, -1))


def synthesize(bank, feature_maps):
    """Reconstruct sum_k d_k (*) z_k + offset (no PSF), as a float raster."""
    maps = feature_maps.maps if isinstance(feature_maps, FeatureMaps) else np.asarray(feature_maps)
    with_offset = feature_maps.with_offset if isinstance(feature_maps, FeatureMaps) else True
    expected = bank.k_count + (1 if with_offset else 0)
    if maps.shape[0] != expected:
        raise ValueError(f"expected {expected} maps, got {maps.shape[0]}")
    op = bank.operator(maps.shape[1:], psf=None, with_offset=with_offset)
    return op.apply(maps)


# ---------------------------------------------------------------------------
# Proximal operators
# ---------------------------------------------------------------------------

def prox_l1(v, t):
    """Elementwise soft threshold: sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise ValueError(f"threshold must be >= 0, got {t}")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_masked_data(v, y, w, rho):
    """Proximal operator of the masked quadratic data term (diagonal closed form).

    Minimizes 0.5*(w*x - y)^2 + (rho/2)*(x - v)^2 per pixel:
    x = (rho*v + w*y) / (rho + w^2); pixels with w = 0 pass through.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return (rho * v + w * y) / (rho + w * w)


# ---------------------------------------------------------------------------
# Per-frequency quadratic solve
# ---------------------------------------------------------------------------

def grad_energy_spectrum(shape):
    """|FFT of forward-difference x|^2 + |FFT of forward-difference y|^2.

    Forward differences with circular wrap; this is the spectral diagonal of
    the discrete gradient's normal operator.
    """
    H, W = shape
    hx = np.zeros(shape)
    hx[0, 0] = -1.0
    hx[0, W - 1] = 1.0  # g[i] = x[i+1] - x[i] as circular convolution
    hy = np.zeros(shape)
    hy[0, 0] = -1.0
    hy[H - 1, 0] = 1.0
    fx = np.fft.rfft2(hx)
    fy = np.fft.rfft2(hy)
    return (np.abs(fx) ** 2 + np.abs(fy) ** 2).real


def gradient_energy(raster):
    """||grad z||_2^2 with circular forward differences (spatial form)."""
    gx = np.roll(raster, -1, axis=1) - raster
    gy = np.roll(raster, -1, axis=0) - raster
    return float(np.sum(gx.astype(np.float64) ** 2) + np.sum(gy.astype(np.float64) ** 2))


def spectral_solve(rhs_data, rhs_maps, op, lambda_s, rho, stats=None):
    """Exact minimizer of ||D x - rhs_data||^2 + rho*||x - rhs_maps||^2
    + lambda_s*||grad x_offset||^2 over stacked maps x.

    Decouples into one (K+1)x(K+1) system per frequency bin; the rank-1
    structure of D^H D gives a Sherman-Morrison solve in O(K) per bin. The
    smoothness term contributes a per-frequency diagonal on the offset
    channel only. Singular bins (cannot occur for rho > 0) are regularized
    with eps = 1e-12 and counted in `stats`.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if lambda_s < 0:
        raise ValueError(f"lambda_s must be >= 0, got {lambda_s}")
    a = op.spectra
    b = np.conj(a) * np.fft.rfft2(np.asarray(rhs_data, dtype=np.float64))[None]
    b += rho * np.fft.rfft2(np.asarray(rhs_maps, dtype=np.float64), axes=(-2, -1))

    # Diagonal: rho on every channel, plus the smoothness term on the offset.
    d_off = rho
    if lambda_s > 0 and op.with_offset:
        d_off = rho + lambda_s * grad_energy_spectrum(op.shape)
    u = b / rho
    v = np.conj(a) / rho
    if op.with_offset:
        u[-1] = b[-1] / d_off
        v[-1] = np.conj(a[-1]) / d_off

    denom = 1.0 + (a * v).sum(axis=0).real
    singular = denom < 1e-12
    if singular.any():
        denom = np.where(singular, denom + 1e-12, denom)
        if stats is not None:
            stats["singular_bins"] = stats.get("singular_bins", 0) + int(singular.sum())
    xf = u - v * ((a * u).sum(axis=0) / denom)[None]
    return np.fft.irfft2(xf, s=op.shape, axes=(-2, -1))


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

def objective(y, mask, reliability, op, maps, beta, lambda_s):
    """Composite objective: 0.5*||y - W*(D z)||^2 + beta*sum_k ||z_k||_1
    + lambda_s*||grad z_offset||^2, with W the mask-times-reliability diagonal.
    """
    mask_vals = getattr(mask, "values", mask)
    w = np.asarray(mask_vals, dtype=np.float64) * np.asarray(reliability, dtype=np.float64)
    z = maps.maps if isinstance(maps, FeatureMaps) else np.asarray(maps, dtype=np.float64)
    resid = np.asarray(y, dtype=np.float64) - w * op.apply(z)
    val = 0.5 * float(np.sum(resid ** 2))
    sparse = z[:-1] if op.with_offset else z
    val += beta * float(np.abs(sparse).sum())
    if op.with_offset and lambda_s > 0:
        val += lambda_s * gradient_energy(z[-1])
    return val


# ---------------------------------------------------------------------------
# Bank persistence: vertically stacked PFM + JSON header
# ---------------------------------------------------------------------------

def save_bank(bank, path_prefix):
    k, p = bank.k_count, bank.size
    stack = bank.filters.reshape(k * p, p).astype(np.float32)
    imagery.write_pfm(stack, f"{path_prefix}.pfm")
    meta = {"k_count": k, "size": p, "provenance": bank.provenance}
    with open(f"{path_prefix}.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_bank(path_prefix):
    with open(f"{path_prefix}.json") as f:
        meta = json.load(f)
    stack = imagery.read_pfm(f"{path_prefix}.pfm")[:, :, 0].astype(np.float64)
    k, p = meta["k_count"], meta["size"]
    filters = stack.reshape(k, p, p)
    # float32 storage can nudge energies just past the ball; re-project.
    norms = np.sqrt(np.sum(filters ** 2, axis=(1, 2)))
    over = norms > 1.0
    if over.any():
        filters[over] /= norms[over, None, None]
    return FilterBank(filters, provenance=meta.get("provenance", {}))
