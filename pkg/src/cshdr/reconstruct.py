"""HDR recovery from a coded LDR capture by ADMM over the CSC objective.

The solver alternates a per-frequency quadratic update of the stacked
feature maps (smoothness term folded in), proximal updates of the splitting
variables (soft threshold on the sparse maps, diagonal closed form on the
masked data term, identity on the offset slot), and dual ascent. Images are
padded with a reflective margin of one filter width so the circular
convolutions never wrap content, and cropped afterwards.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import capture, cscengine
from .cscengine import FeatureMaps, prox_l1, prox_masked_data, spectral_solve
from .imagery import RadianceImage

OFFSET_INIT_SIGMA = 4.0   # blur radius for the offset initialization, px
OFFSET_DIV_EPS = 1e-3     # guard for near-opaque mask pixels


class NumericalError(RuntimeError):
    """Solver produced non-finite values."""


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.5e-5        # sparsity weight
    lambda_s: float = 0.5e-5    # offset smoothness weight
    rho: float = 3e-4           # ADMM penalty; see note below
    max_iters: int = 100
    tol_primal: float = 1e-4    # relative primal residual
    tol_dual: float = 1e-4      # relative dual residual
    log_objective: bool = True

    # The masked data term has per-pixel curvature w^2 (w = mask *
    # reliability), so its dual ramps at rate ~w^2/rho per iteration; pixels
    # sampled through the darkest exposure (w = 2^-6) need rho well below
    # w^2 ~ 2.4e-4 to converge within ~100 iterations.

    def __post_init__(self):
        if self.beta < 0 or self.lambda_s < 0:
            raise ValueError("beta and lambda_s must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolverTrace:
    objective: list = field(default_factory=list)
    r_primal: list = field(default_factory=list)
    r_dual: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    singular_bins: int = 0


def trace_to_csv(trace, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "objective", "r_primal", "r_dual", "seconds"])
        for i in range(trace.iterations):
            obj = trace.objective[i] if i < len(trace.objective) else ""
            w.writerow([i, obj, trace.r_primal[i], trace.r_dual[i], trace.seconds[i]])


def init_offset(coded):
    """Initial offset map: blurred linearized capture divided by the mask."""
    lin = capture.linearize(coded).data.astype(np.float64)
    safe_mask = np.maximum(coded.mask.values.astype(np.float64), OFFSET_DIV_EPS)
    out = np.empty_like(lin)
    for c in range(lin.shape[2]):
        out[:, :, c] = ndimage.gaussian_filter(lin[:, :, c] / safe_mask,
                                               OFFSET_INIT_SIGMA, mode="reflect")
    return out


def _reliable_offset_init(coded):
    """Reliability-weighted variant of init_offset used by the solver.

    Clipped codes divided by the mask are wildly biased (the saturated value
    stands in for the true radiance), and with a weak smoothness prior that
    bias survives at pixels without data. Normalized convolution over the
    reliable samples interpolates the demodulated radiance instead.
    """
    lin = capture.linearize(coded).data.astype(np.float64)
    safe_mask = np.maximum(coded.mask.values.astype(np.float64), OFFSET_DIV_EPS)
    out = np.empty_like(lin)
    for c in range(lin.shape[2]):
        rel = coded.reliability[:, :, c].astype(np.float64)
        demod = lin[:, :, c] / safe_mask
        num = ndimage.gaussian_filter(rel * demod, OFFSET_INIT_SIGMA, mode="reflect")
        den = ndimage.gaussian_filter(rel, OFFSET_INIT_SIGMA, mode="reflect")
        fallback = ndimage.gaussian_filter(demod, OFFSET_INIT_SIGMA, mode="reflect")
        out[:, :, c] = np.where(den > 1e-6, num / np.maximum(den, 1e-6), fallback)
    return out


def _solve_channel(y, weights, bank, psf, cfg, offset0):
    """Run the ADMM on one (already padded) channel; returns (maps, trace)."""
    shape = y.shape
    op = bank.operator(shape, psf=psf, with_offset=True)
    n_maps = bank.k_count + 1

    x = np.zeros((n_maps,) + shape)
    x[-1] = offset0
    z_d = op.apply(x)
    z_p = x.copy()
    l_d = np.zeros(shape)
    l_p = np.zeros_like(z_p)

    trace = SolverTrace()
    stats = {}
    thresh = cfg.beta / cfg.rho
    # Scaled-ADMM x-update: the augmented quadratic carries weight rho, so the
    # smoothness term enters the subproblem at lambda_s / rho (literal
    # Algorithm-1 weighting at rho = 1).
    smooth_w = cfg.lambda_s / cfg.rho
    t0 = time.perf_counter()

    def obj_of(maps):
        return cscengine.objective(y, weights, 1.0, op, maps, cfg.beta, cfg.lambda_s)

    if cfg.log_objective:
        trace.objective.append(obj_of(z_p))

    for it in range(cfg.max_iters):
        x = spectral_solve(z_d - l_d, z_p - l_p, op, smooth_w, 1.0, stats)
        if not np.isfinite(x).all():
            raise NumericalError(f"non-finite feature maps at iteration {it}")

        u_d = op.apply(x)
        z_d_new = prox_masked_data(u_d + l_d, y, weights, cfg.rho)
        z_p_new = x + l_p
        z_p_new[:-1] = prox_l1(z_p_new[:-1], thresh)
        l_d += u_d - z_d_new
        l_p += x - z_p_new

        # Residuals in Boyd's relative form for the stacked operator [D; I].
        r = np.sqrt(np.sum((u_d - z_d_new) ** 2) + np.sum((x - z_p_new) ** 2))
        kx_norm = np.sqrt(np.sum(u_d ** 2) + np.sum(x ** 2))
        z_norm = np.sqrt(np.sum(z_d_new ** 2) + np.sum(z_p_new ** 2))
        r_rel = r / max(kx_norm, z_norm, 1e-12)

        dz = op.adjoint(z_d_new - z_d) + (z_p_new - z_p)
        s = cfg.rho * np.sqrt(np.sum(dz ** 2))
        dual_scale = cfg.rho * np.sqrt(np.sum((op.adjoint(l_d) + l_p) ** 2))
        s_rel = s / max(dual_scale, 1e-12)

        z_d, z_p = z_d_new, z_p_new
        trace.r_primal.append(float(r_rel))
        trace.r_dual.append(float(s_rel))
        trace.seconds.append(time.perf_counter() - t0)
        if cfg.log_objective:
            trace.objective.append(obj_of(z_p))
        trace.iterations = it + 1
        if r_rel < cfg.tol_primal and s_rel < cfg.tol_dual:
            trace.converged = True
            break

    trace.singular_bins = stats.get("singular_bins", 0)
    return z_p, trace


def reconstruct_hdr(coded, bank, cfg=None):
    """Recover relative radiance from one coded 8-bit capture.

    Channels are solved independently with the same mask and bank. Returns
    (radiance, feature maps, trace); for 3-channel input the maps and traces
    are per-channel lists.
    """
    cfg = cfg or SolverConfig()
    ceiling = coded.exposure_ceiling
    y_norm = capture.linearize(coded).data.astype(np.float64) / ceiling
    offset0_full = _reliable_offset_init(coded) / ceiling

    psf = np.asarray(coded.config.psf, dtype=np.float64)
    if psf.shape == (1, 1):
        psf = None
    pad = bank.size
    mask_pad = np.pad(coded.mask.values.astype(np.float64), pad, mode="symmetric")

    recs, all_maps, traces = [], [], []
    for c in range(coded.channels):
        y_pad = np.pad(y_norm[:, :, c], pad, mode="symmetric")
        rel_pad = np.pad(coded.reliability[:, :, c].astype(np.float64), pad, mode="symmetric")
        off_pad = np.pad(offset0_full[:, :, c], pad, mode="symmetric")
        maps, trace = _solve_channel(y_pad, mask_pad * rel_pad, bank, psf, cfg, off_pad)

        rec_pad = cscengine.synthesize(bank, FeatureMaps(maps))
        recs.append(rec_pad[pad:-pad, pad:-pad] * ceiling)
        all_maps.append(FeatureMaps(maps[:, pad:-pad, pad:-pad]))
        traces.append(trace)

    rec = np.clip(np.stack(recs, axis=-1), 0.0, None).astype(np.float32)
    if coded.channels == 1:
        return RadianceImage(rec), all_maps[0], traces[0]
    return RadianceImage(rec), all_maps, traces


def reconstruct_video(frames, bank, cfg=None):
    """Frame-by-frame reconstruction; no temporal coupling."""
    frames = list(frames)
    if not frames:
        return []
    dims = {(f.height, f.width, f.channels) for f in frames}
    if len(dims) != 1:
        raise ValueError(f"video frames must share dimensions, got {sorted(dims)}")
    return [reconstruct_hdr(f, bank, cfg)[0] for f in frames]
