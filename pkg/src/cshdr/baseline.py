"""Patch-based sparse reconstruction baseline: overcomplete DCT dictionary,
orthogonal matching pursuit per masked patch, per-pixel averaged merge.
"""

from dataclasses import dataclass

import numpy as np

from . import capture
from .imagery import RadianceImage


@dataclass(frozen=True)
class PatchDictionary:
    atoms: np.ndarray          # (patch_dim, n_atoms), unit-norm columns
    atom_size: int
    kind: str = "dct"

    def __post_init__(self):
        arr = np.asarray(self.atoms, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != self.atom_size ** 2:
            raise ValueError(f"atoms must be ({self.atom_size ** 2}, n), got {arr.shape}")
        norms = np.linalg.norm(arr, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("dictionary atoms must have unit l2 norm")
        object.__setattr__(self, "atoms", arr)

    @property
    def n_atoms(self):
        return self.atoms.shape[1]


def build_dct_dictionary(atom_size=11, overcompleteness=4):
    """Overcomplete 2-D DCT: outer products of 1-D cosine atoms sampled at
    sqrt(overcompleteness)x density; columns normalized. The first atom is
    the constant (DC) patch."""
    if atom_size < 4:
        raise ValueError(f"atom_size must be >= 4, got {atom_size}")
    n = atom_size
    L = int(round(np.sqrt(overcompleteness) * n))
    t = np.arange(n)
    base = np.cos(np.pi * np.outer(2 * t + 1, np.arange(L)) / (2.0 * L))   # (n, L)
    atoms = np.einsum("ik,jl->ijkl", base, base).reshape(n * n, L * L)
    atoms = atoms / np.linalg.norm(atoms, axis=0)
    return PatchDictionary(atoms, atom_size, "dct")


def omp_solve(y_p, phi, dictionary, eps=0.0, max_sparsity=None):
    """Greedy OMP for y_p ~ diag(phi) @ atoms @ s.

    Selects the atom with the largest |correlation with the residual|
    (ties break to the lowest index), re-solves least squares on the active
    set, and stops once the residual norm is <= eps or the sparsity budget
    is reached. A fully masked patch (phi all zero) returns s = 0 with the
    flag set.

    Returns (s, flagged).
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    y_p = np.asarray(y_p, dtype=np.float64).ravel()
    phi = np.asarray(phi, dtype=np.float64).ravel()
    n_atoms = dictionary.n_atoms
    if max_sparsity is None:
        max_sparsity = y_p.size
    if max_sparsity < 1:
        raise ValueError(f"max_sparsity must be >= 1, got {max_sparsity}")

    if not np.any(phi != 0):
        return np.zeros(n_atoms), True

    A = phi[:, None] * dictionary.atoms
    r = y_p.copy()
    active = []
    coef = np.zeros(0)
    while len(active) < max_sparsity and np.linalg.norm(r) > eps:
        corr = np.abs(A.T @ r)
        if active:
            corr[active] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 1e-12:
            break
        active.append(j)
        coef, *_ = np.linalg.lstsq(A[:, active], y_p, rcond=None)
        r = y_p - A[:, active] @ coef

    s = np.zeros(n_atoms)
    if active:
        s[active] = coef
    return s, False


def _patch_origins(length, p, stride):
    pos = list(range(0, length - p + 1, stride))
    if pos[-1] != length - p:
        pos.append(length - p)
    return pos


def patch_reconstruct(coded, dictionary, patch_stride=2, eps=None, max_sparsity=40):
    """Reconstruct radiance patch by patch with OMP and a per-pixel average.

    `eps` defaults to one quantization step per reliable pixel in the patch.
    Returns (radiance, flags) where flags marks pixels covered only by fully
    masked patches.
    """
    p = dictionary.atom_size
    if coded.height < p or coded.width < p:
        raise ValueError(f"image {coded.height}x{coded.width} smaller than patch {p}x{p}")
    ceiling = coded.exposure_ceiling
    y_norm = capture.linearize(coded).data.astype(np.float64) / ceiling
    mask = coded.mask.values.astype(np.float64)

    rows = _patch_origins(coded.height, p, patch_stride)
    cols = _patch_origins(coded.width, p, patch_stride)

    out = np.zeros_like(y_norm)
    count = np.zeros_like(y_norm)
    for c in range(coded.channels):
        rel = coded.reliability[:, :, c].astype(np.float64)
        w = mask * rel
        for r0 in rows:
            for c0 in cols:
                wp = w[r0:r0 + p, c0:c0 + p].ravel()
                yp = (y_norm[r0:r0 + p, c0:c0 + p, c]
                      * rel[r0:r0 + p, c0:c0 + p]).ravel()
                tol = eps if eps is not None else np.sqrt(np.count_nonzero(wp)) / 255.0
                s, flagged = omp_solve(yp, wp, dictionary, eps=tol,
                                       max_sparsity=max_sparsity)
                if flagged:
                    continue
                out[r0:r0 + p, c0:c0 + p, c] += (dictionary.atoms @ s).reshape(p, p)
                count[r0:r0 + p, c0:c0 + p, c] += 1.0

    flags = (count.max(axis=2) == 0).astype(np.float32)
    rec = np.clip(out / np.maximum(count, 1.0) * ceiling, 0.0, None).astype(np.float32)
    return RadianceImage(rec), flags
