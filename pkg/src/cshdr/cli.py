"""Command-line surface: maskgen, simulate, learn, reconstruct, baseline,
eval, sweep.

Exit codes: 0 success, 1 input error, 2 usage error, 3 numerical failure.
Every command writes a provenance JSON sufficient to re-run it bit-identically.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import (__version__, baseline, capture, cscengine, imagery, learning,
               masks, metrics, reconstruct, scenes)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _provenance(path, command, params, inputs):
    params = json.loads(json.dumps(params, sort_keys=True, default=str))
    doc = {
        "command": command,
        "version": __version__,
        "config": params,
        "inputs": inputs,
        "config_hash": hashlib.sha256(
            json.dumps(params, sort_keys=True).encode()).hexdigest(),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    return doc


# ---------------------------------------------------------------------------
# maskgen
# ---------------------------------------------------------------------------

def cmd_maskgen(args):
    kind = args.kind
    levels = tuple(args.levels) if args.levels else masks.DEFAULT_LEVELS
    try:
        if kind == "binary":
            mask = masks.gen_binary(args.width, args.height, args.p_on, args.seed)
        elif kind == "gaussian":
            mask = masks.gen_gaussian(args.width, args.height, args.mean,
                                      args.stddev, args.seed)
        elif kind == "uniform":
            mask = masks.gen_uniform(args.width, args.height, args.seed)
        elif kind == "four_exposure":
            mask = masks.gen_four_exposure(args.width, args.height, levels, args.seed)
        elif kind == "fixed_pattern":
            mask = masks.gen_fixed_pattern(args.width, args.height, levels)
        else:
            mask = masks.gen_interleaved(args.width, args.height,
                                         args.e_low, args.e_high)
    except ValueError as e:
        print(f"maskgen: invalid parameters: {e}", file=sys.stderr)
        return EXIT_USAGE
    masks.save_mask(mask, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _capture_config(args):
    psf = capture.delta_psf() if args.delta_psf else \
        capture.gaussian_psf(args.psf_size, args.psf_sigma)
    return capture.CaptureConfig(psf=psf, sensor_dr=args.sensor_dr, crf=args.crf,
                                 crf_gamma=args.crf_gamma, noise_std=args.noise_std,
                                 noise_seed=args.noise_seed)


def cmd_simulate(args):
    scene = imagery.load_hdr(args.scene)
    mask = masks.load_mask(args.mask)
    coded = capture.simulate_capture(scene, mask, _capture_config(args))
    capture.save_coded(coded, args.out)
    _provenance(f"{args.out}_provenance.json", "simulate",
                {"sensor_dr": args.sensor_dr, "crf": args.crf,
                 "crf_gamma": args.crf_gamma, "psf_size": args.psf_size,
                 "psf_sigma": args.psf_sigma, "delta_psf": args.delta_psf,
                 "noise_std": args.noise_std, "noise_seed": args.noise_seed,
                 "floor": coded.exposure_floor, "ceiling": coded.exposure_ceiling},
                {"scene": args.scene, "mask": args.mask})
    return EXIT_OK


# ---------------------------------------------------------------------------
# learn
# ---------------------------------------------------------------------------

def _load_training_raster(path, tonemap_first):
    name = path.name.lower()
    if name.endswith(".png"):
        img = imagery.load_png(path)
        gray = img.data.astype(np.float64) @ imagery.LUMA_WEIGHTS \
            if img.channels == 3 else img.data[:, :, 0].astype(np.float64)
        return gray / 255.0
    hdr = imagery.load_hdr(str(path))
    if tonemap_first:
        ldr = imagery.tonemap_display(hdr)
        return imagery.luminance(
            imagery.RadianceImage(ldr.data.astype(np.float32) / 255.0)).plane(0)
    return imagery.luminance(hdr).plane(0).astype(np.float64)


def cmd_learn(args):
    paths = sorted(p for p in Path(args.input_dir).iterdir()
                   if p.suffix.lower() in (".png", ".pfm", ".hdr"))
    if not paths:
        print(f"learn: no .png/.pfm/.hdr images in {args.input_dir}", file=sys.stderr)
        return EXIT_INPUT
    rasters = [_load_training_raster(p, args.tonemap_first) for p in paths]
    train = learning.TrainingSet.from_rasters(rasters)
    bank = learning.learn_filters(train, k_count=args.k, size=args.size,
                                  beta=args.beta, outer_iters=args.outer_iters,
                                  seed=args.seed)
    cscengine.save_bank(bank, args.out)
    _provenance(f"{args.out}_provenance.json", "learn",
                {"k": args.k, "size": args.size, "beta": args.beta,
                 "outer_iters": args.outer_iters, "seed": args.seed,
                 "tonemap_first": args.tonemap_first},
                {"input_dir": args.input_dir, "images": [str(p) for p in paths]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# reconstruct / baseline
# ---------------------------------------------------------------------------

def _solver_config(args):
    return reconstruct.SolverConfig(beta=args.beta, lambda_s=args.lambda_s,
                                    rho=args.rho, max_iters=args.max_iters,
                                    tol_primal=args.tol, tol_dual=args.tol)


def _total_active(maps):
    if isinstance(maps, list):
        return sum(m.active_count() for m in maps)
    return maps.active_count()


def cmd_reconstruct(args):
    bank = cscengine.load_bank(args.bank)
    cfg = _solver_config(args)
    multi = len(args.coded) > 1
    active = 0
    for i, prefix in enumerate(args.coded):
        coded = capture.load_coded(prefix)
        rec, maps, trace = reconstruct.reconstruct_hdr(coded, bank, cfg)
        out = f"{args.out}_{i:03d}" if multi else args.out
        imagery.save_hdr(rec, f"{out}.pfm")
        traces = trace if isinstance(trace, list) else [trace]
        reconstruct.trace_to_csv(traces[0], f"{out}_trace.csv")
        active += _total_active(maps)
    _provenance(f"{args.out}_provenance.json", "reconstruct",
                {"beta": args.beta, "lambda_s": args.lambda_s, "rho": args.rho,
                 "max_iters": args.max_iters, "tol": args.tol,
                 "active_coefficients": active},
                {"coded": list(args.coded), "bank": args.bank})
    return EXIT_OK


def cmd_baseline(args):
    coded = capture.load_coded(args.coded)
    dictionary = baseline.build_dct_dictionary(args.atom_size, args.overcompleteness)
    rec, flags = baseline.patch_reconstruct(coded, dictionary,
                                            patch_stride=args.stride,
                                            eps=args.eps, max_sparsity=args.max_atoms)
    imagery.save_hdr(rec, f"{args.out}.pfm")
    imagery.write_pfm(flags.astype(np.float32), f"{args.out}_flags.pfm")
    _provenance(f"{args.out}_provenance.json", "baseline",
                {"method": args.method, "atom_size": args.atom_size,
                 "overcompleteness": args.overcompleteness, "stride": args.stride,
                 "eps": args.eps, "max_atoms": args.max_atoms},
                {"coded": args.coded})
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args):
    rec = imagery.load_hdr(args.rec)
    gt = imagery.load_hdr(args.gt)
    report = metrics.evaluate(rec, gt)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.json", "w") as f:
        json.dump(report.as_dict(), f, indent=2)
        f.write("\n")

    err = report.error_map
    scale = err.max()
    err_png = np.floor((err / scale if scale > 0 else err) * 255.0 + 0.5)
    imagery.save_png(imagery.LdrImage(err_png.astype(np.uint8)), outdir / "error_map.png")
    imagery.save_png(metrics.false_color_stops(rec), outdir / "falsecolor_rec.png")
    imagery.save_png(metrics.false_color_stops(gt), outdir / "falsecolor_gt.png")

    if args.scanline is not None:
        gt_line = metrics.scanline_profile(gt, args.scanline)
        rec_line = metrics.scanline_profile(rec, args.scanline)
        with open(outdir / f"scanline_{args.scanline}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "gt", "rec"])
            for x, (g, r) in enumerate(zip(gt_line, rec_line)):
                w.writerow([x, g, r])

    _provenance(outdir / "provenance.json", "eval",
                {"scanline": args.scanline, "psnr_db": report.psnr_db,
                 "ssim_mean": report.ssim_mean},
                {"rec": args.rec, "gt": args.gt})
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _levels_for_ratio(ratio):
    return tuple(ratio ** (-(3 - i) / 3.0) for i in range(4))


def _build_mask(entry, width, height, seed, ratio):
    entry = dict(entry or {"kind": "four_exposure"})
    kind = entry.pop("kind")
    if kind in ("four_exposure", "fixed_pattern") and ratio is not None:
        entry.setdefault("levels", _levels_for_ratio(ratio))
    gen = masks.GENERATORS[kind]
    if kind in ("binary", "gaussian", "uniform", "four_exposure"):
        entry.setdefault("seed", seed)
    return gen(width, height, **entry)


def _run_cell(index, cell, config, scene, bank, outdir):
    mask_entry, beta, ratio = cell
    cell_dir = outdir / f"cell_{index:03d}"
    cell_dir.mkdir(parents=True, exist_ok=True)

    cap_over = dict(config.get("capture", {}))
    psf = capture.delta_psf() if cap_over.pop("delta_psf", False) else \
        capture.gaussian_psf(cap_over.pop("psf_size", 5), cap_over.pop("psf_sigma", 0.5))
    cap_cfg = capture.CaptureConfig(psf=psf, **cap_over)

    solver_over = dict(config.get("solver", {}))
    if beta is not None:
        solver_over["beta"] = beta
    solver_cfg = reconstruct.SolverConfig(**solver_over)

    mask = _build_mask(mask_entry, scene.width, scene.height,
                       config.get("seed", 0), ratio)
    coded = capture.simulate_capture(scene, mask, cap_cfg)
    rec, maps, _ = reconstruct.reconstruct_hdr(coded, bank, solver_cfg)
    report = metrics.evaluate(rec, scene)

    imagery.save_hdr(rec, cell_dir / "rec.pfm")
    imagery.save_png(metrics.false_color_stops(rec), cell_dir / "falsecolor_rec.png")
    err = report.error_map
    scale = err.max()
    err_png = np.floor((err / scale if scale > 0 else err) * 255.0 + 0.5)
    imagery.save_png(imagery.LdrImage(err_png.astype(np.uint8)), cell_dir / "error_map.png")
    with open(cell_dir / "report.json", "w") as f:
        json.dump(report.as_dict(), f, indent=2)
        f.write("\n")
    _provenance(cell_dir / "provenance.json", "sweep-cell",
                {"mask": mask_entry, "beta": solver_cfg.beta, "exposure_ratio": ratio,
                 "seed": config.get("seed", 0), "capture": config.get("capture", {}),
                 "solver": config.get("solver", {})},
                {"scene": str(config.get("scene")), "bank": str(config.get("bank"))})
    return {"mask_kind": (mask_entry or {"kind": "four_exposure"})["kind"],
            "beta": solver_cfg.beta, "exposure_ratio": ratio,
            "psnr_db": report.psnr_db, "ssim_mean": report.ssim_mean,
            "active_coefficients": _total_active(maps), "status": "ok"}


def run_sweep(config, jobs=1):
    scene_spec = config["scene"]
    if isinstance(scene_spec, dict):
        scene = scenes.synthetic_hdr_scene(**scene_spec.get("synthetic", {}))
    else:
        scene = imagery.load_hdr(scene_spec)
    bank = cscengine.load_bank(config["bank"])
    outdir = Path(config.get("output_dir", "sweep_out"))
    outdir.mkdir(parents=True, exist_ok=True)

    axes = config.get("sweep", {})
    mask_axis = axes.get("mask", [None])
    beta_axis = axes.get("beta", [None])
    ratio_axis = axes.get("exposure_ratio", [None])
    cells = [(m, b, r) for m in mask_axis for b in beta_axis for r in ratio_axis]

    cap = os.environ.get("CSC_HDR_THREADS")
    if cap is not None:
        jobs = max(1, min(jobs, int(cap)))

    rows = [None] * len(cells)

    def work(i):
        try:
            rows[i] = _run_cell(i, cells[i], config, scene, bank, outdir)
        except Exception as e:  # record and continue with remaining cells
            mask_entry = cells[i][0] or {"kind": "four_exposure"}
            rows[i] = {"mask_kind": mask_entry.get("kind"), "beta": cells[i][1],
                       "exposure_ratio": cells[i][2], "psnr_db": "", "ssim_mean": "",
                       "active_coefficients": "", "status": f"error: {e}"}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(len(cells))))
    else:
        for i in range(len(cells)):
            work(i)

    fields = ["mask_kind", "beta", "exposure_ratio", "psnr_db", "ssim_mean",
              "active_coefficients", "status"]
    with open(outdir / "sweep.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    return rows


def cmd_sweep(args):
    with open(args.config) as f:
        config = json.load(f)
    run_sweep(config, jobs=args.jobs)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cshdr",
        description="Coded-exposure HDR capture simulation and CSC reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("maskgen", help="generate an exposure mask")
    p.add_argument("--kind", required=True, choices=sorted(masks.GENERATORS))
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=float, nargs=4, default=None)
    p.add_argument("--p-on", type=float, default=0.5)
    p.add_argument("--mean", type=float, default=0.6)
    p.add_argument("--stddev", type=float, default=0.1)
    p.add_argument("--e-low", type=float, default=masks.DEFAULT_INTERLEAVED[0])
    p.add_argument("--e-high", type=float, default=masks.DEFAULT_INTERLEAVED[1])
    p.add_argument("--out", required=True, help="output prefix (.pfm + .json)")
    p.set_defaults(func=cmd_maskgen)

    p = sub.add_parser("simulate", help="simulate a coded LDR capture")
    p.add_argument("--scene", required=True)
    p.add_argument("--mask", required=True, help="mask prefix from maskgen")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--psf-size", type=int, default=5)
    p.add_argument("--psf-sigma", type=float, default=0.5)
    p.add_argument("--delta-psf", action="store_true")
    p.add_argument("--sensor-dr", type=float, default=1000.0)
    p.add_argument("--crf", choices=["linear", "gamma"], default="linear")
    p.add_argument("--crf-gamma", type=float, default=2.2)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="learn a filter bank from images")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out", required=True, help="bank prefix (.pfm + .json)")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--size", type=int, default=11)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--outer-iters", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tonemap-first", action="store_true")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("reconstruct", help="CSC HDR reconstruction")
    p.add_argument("--coded", required=True, nargs="+",
                   help="coded capture prefix(es); several = video frames")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=1.5e-5)
    p.add_argument("--lambda-s", type=float, default=0.5e-5)
    p.add_argument("--rho", type=float, default=3e-4)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("baseline", help="patch-based OMP reconstruction")
    p.add_argument("--coded", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["omp"], default="omp")
    p.add_argument("--atom-size", type=int, default=11)
    p.add_argument("--overcompleteness", type=float, default=4.0)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--max-atoms", type=int, default=40)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="compare a reconstruction to ground truth")
    p.add_argument("--rec", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scanline", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run an experiment grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except reconstruct.NumericalError as e:
        print(f"cshdr {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileNotFoundError, OSError, ValueError, KeyError) as e:
        print(f"cshdr {args.command}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
