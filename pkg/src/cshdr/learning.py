"""Filter-bank training: local contrast normalization and alternating
sparse-coding / dictionary updates with a unit-ball, fixed-support
constraint on the filters.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import cscengine
from .cscengine import FilterBank, prox_l1, prox_masked_data, spectral_solve


def local_contrast_normalize(img, sigma_n=8.0, eps_n=1e-2):
    """Whiten a grayscale raster: subtract a Gaussian local mean and divide
    by the (floored) Gaussian local standard deviation."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {img.shape}")
    mean = ndimage.gaussian_filter(img, sigma_n, mode="reflect")
    centered = img - mean
    var = ndimage.gaussian_filter(centered ** 2, sigma_n, mode="reflect")
    return centered / np.maximum(np.sqrt(var), eps_n)


@dataclass(frozen=True)
class TrainingSet:
    """Grayscale training rasters, normally contrast-normalized."""

    images: tuple
    sigma_n: float = 8.0
    eps_n: float = 1e-2

    def __post_init__(self):
        imgs = tuple(np.asarray(im, dtype=np.float64) for im in self.images)
        if not imgs:
            raise ValueError("training set is empty")
        if any(im.ndim != 2 for im in imgs):
            raise ValueError("training images must be 2-D grayscale rasters")
        object.__setattr__(self, "images", imgs)

    @classmethod
    def from_rasters(cls, rasters, normalize=True, sigma_n=8.0, eps_n=1e-2):
        imgs = [np.asarray(r, dtype=np.float64) for r in rasters]
        if normalize:
            imgs = [local_contrast_normalize(im, sigma_n, eps_n) for im in imgs]
        return cls(tuple(imgs), sigma_n, eps_n)


def project_filter(d, p):
    """Project a full-size kernel onto {support pxp, ||d||_2^2 <= 1}.

    Crops to the centered support, then scales down iff the energy exceeds 1;
    kernels already in the ball pass through unchanged.
    """
    k = cscengine.extract_kernel(d, p)
    norm = np.sqrt(np.sum(k ** 2))
    if norm > 1.0:
        k = k / norm
    return k


def _sparse_code(img, op, beta, rho=1.0, iters=25, state=None):
    """ADMM sparse coding of one image against fixed filters (no offset)."""
    shape = img.shape
    if state is None:
        z_p = np.zeros((op.n_channels,) + shape)
        z_d = np.zeros(shape)
        l_d = np.zeros(shape)
        l_p = np.zeros_like(z_p)
    else:
        z_d, z_p, l_d, l_p = state
    thresh = beta / rho
    for _ in range(iters):
        x = spectral_solve(z_d - l_d, z_p - l_p, op, 0.0, 1.0)
        u_d = op.apply(x)
        z_d = prox_masked_data(u_d + l_d, img, 1.0, rho)
        z_p = prox_l1(x + l_p, thresh)
        l_d = l_d + (u_d - z_d)
        l_p = l_p + (x - z_p)
    return z_p.copy(), (z_d, z_p, l_d, l_p)


def _recenter_shift(full, p):
    """Circular shift placing the pxp support window over the most energy of a
    full-size kernel; rescues filters drifting toward shift-truncation minima."""
    supp = cscengine.embed_kernel(np.ones((p, p)), full.shape)
    energy = np.fft.irfft2(np.conj(np.fft.rfft2(supp)) * np.fft.rfft2(full ** 2),
                           s=full.shape)
    s = np.unravel_index(int(np.argmax(energy)), full.shape)
    # hysteresis: only re-shift for a clear energy gain, to avoid oscillation
    if energy[s] <= 1.02 * energy[0, 0]:
        return (0, 0)
    return (-int(s[0]), -int(s[1]))


def _dict_step(images, all_maps, filters, iters=10):
    """Spectral filter update with consensus over the training images.

    Solves the quadratic in the Fourier domain through a Woodbury identity
    over the image stack (rank = number of images per frequency bin), then
    projects onto the support/unit-ball constraint set.
    """
    k_count, p = filters.shape[0], filters.shape[1]
    shape = images[0].shape
    n_img = len(images)

    Z = np.stack([np.fft.rfft2(m, axes=(-2, -1)) for m in all_maps])   # (I,C,H,Wr)
    X = np.stack([np.fft.rfft2(im) for im in images])                  # (I,H,Wr)
    zhx = np.einsum("ichw,ihw->chw", np.conj(Z), X)                    # D^H x term
    gram = np.einsum("ichw,jchw->hwij", Z, np.conj(Z))                 # C C^H per bin

    rho = max(1e-2 * float(np.mean(np.abs(Z) ** 2)) * n_img, 1e-8)
    eye = np.eye(n_img)

    d_full = np.stack([cscengine.embed_kernel(f, shape) for f in filters])
    g = d_full.copy()
    u = np.zeros_like(d_full)
    lhs = gram + rho * eye  # (H,Wr,I,I)

    for _ in range(iters):
        v = np.fft.rfft2(g - u, axes=(-2, -1))
        rhs = zhx + rho * v                                            # (C,H,Wr)
        cr = np.einsum("ichw,chw->hwi", Z, rhs)
        sol = np.linalg.solve(lhs, cr[..., None])[..., 0]              # (H,Wr,I)
        df = (rhs - np.einsum("ichw,hwi->chw", np.conj(Z), sol)) / rho
        d_full = np.fft.irfft2(df, s=shape, axes=(-2, -1))
        g = np.stack([cscengine.embed_kernel(project_filter(d_full[k] + u[k], p), shape)
                      for k in range(k_count)])
        u = u + d_full - g
    # The dual u carries the data term's pull outside the support; recentering
    # d + u realigns filters whose mass the support crop would truncate. The
    # caller counter-shifts the coefficient maps so d (*) z is unchanged.
    shifts = [_recenter_shift(d_full[k] + u[k], p) for k in range(k_count)]
    new_filters = np.stack([
        project_filter(np.roll(d_full[k] + u[k], shifts[k], axis=(0, 1)), p)
        for k in range(k_count)])
    return new_filters, shifts


def _training_objective(images, all_maps, bank, beta):
    total = 0.0
    for img, maps in zip(images, all_maps):
        op = bank.operator(img.shape, with_offset=False)
        resid = img - op.apply(maps)
        total += 0.5 * float(np.sum(resid ** 2)) + beta * float(np.abs(maps).sum())
    return total


def learn_filters(train, k_count=100, size=11, beta=0.2, outer_iters=15,
                  seed=0, coding_iters=25, dict_iters=10):
    """Learn a convolutional filter bank by alternating minimization.

    Coding steps reuse the ADMM machinery (full weights, no offset channel);
    dictionary steps solve the filter quadratic spectrally and project onto
    the support/unit-ball constraint. Filters start as unit-normalized
    Gaussian noise. The Dirac offset channel is appended implicitly at
    reconstruction time, never learned.
    """
    if k_count <= 0:
        raise ValueError(f"k_count must be positive, got {k_count}")
    if size % 2 == 0 or size < 3:
        raise ValueError(f"filter size must be odd and >= 3, got {size}")
    for im in train.images:
        if min(im.shape) < 4 * size:
            raise ValueError(f"training image {im.shape} smaller than 4x filter size {size}")

    rng = np.random.Generator(np.random.Philox(seed))
    filters = rng.normal(size=(k_count, size, size))
    filters /= np.sqrt(np.sum(filters ** 2, axis=(1, 2)))[:, None, None]

    images = train.images
    states = [None] * len(images)
    all_maps = [None] * len(images)
    objective_log = []

    for _ in range(outer_iters):
        bank = FilterBank(filters)
        for i, img in enumerate(images):
            op = bank.operator(img.shape, with_offset=False)
            all_maps[i], states[i] = _sparse_code(img, op, beta, iters=coding_iters,
                                                  state=states[i])
        filters, shifts = _dict_step(images, all_maps, filters, iters=dict_iters)
        if any(s != (0, 0) for s in shifts):
            # counter-shift maps and ADMM state so filter (*) map is invariant
            for i in range(len(images)):
                z_d, z_p, l_d, l_p = states[i]
                for k, s in enumerate(shifts):
                    if s != (0, 0):
                        inv = (-s[0], -s[1])
                        all_maps[i][k] = np.roll(all_maps[i][k], inv, axis=(0, 1))
                        z_p[k] = np.roll(z_p[k], inv, axis=(0, 1))
                        l_p[k] = np.roll(l_p[k], inv, axis=(0, 1))
                states[i] = (z_d, z_p, l_d, l_p)
        objective_log.append(_training_objective(images, all_maps, FilterBank(filters), beta))

    provenance = {"n_images": len(images), "k_count": k_count, "size": size,
                  "beta": beta, "outer_iters": outer_iters, "seed": seed,
                  "prng": "philox4x64",
                  "objective_first": objective_log[0], "objective_final": objective_log[-1]}
    return FilterBank(filters, provenance=provenance)
