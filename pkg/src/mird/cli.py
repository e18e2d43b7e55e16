"""Command-line entry point.

Subcommands: interpolate, uncertainty, tau, schedule, synth, verify.
Machine-readable results (one-line JSON, CSV) go to stdout; human logs go
to stderr.  Exit codes: 0 ok, 1 verification failure, 2 usage error,
3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diffusion, pipeline, synthdata, taumetric
from .errors import (
    ConfigError,
    FloFormatError,
    GenerationError,
    InvalidInputError,
    NumericalError,
)
from .flow import FlowParams, read_flo, write_flo
from .imaging import psnr, read_png, ssim, write_png
from .schedule import ScheduleConfig, build_schedule, partition_weights

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _env_seed() -> int:
    raw = os.environ.get("MIRD_SEED", "").strip()
    return int(raw) if raw else 0


def _env_threads() -> int | None:
    raw = os.environ.get("MIRD_THREADS", "").strip()
    return int(raw) if raw else None


def _parse_tau(raw: str) -> float | str:
    if raw == "ifd":
        return "ifd"
    try:
        value = float(raw)
    except ValueError:
        raise InvalidInputError(f"--tau must be a float or 'ifd', got {raw!r}") from None
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"--tau must lie in [0, 1], got {value}")
    return value


def _schedule_config(args, weights=(0.5, 0.5)) -> ScheduleConfig:
    return ScheduleConfig(
        T=args.steps,
        kappa=args.kappa,
        p=args.p,
        eta_T_sum=args.eta_t,
        weights=weights,
        eta_1_sum=args.eta1_sum,
    )


def _add_schedule_flags(sub) -> None:
    sub.add_argument("--steps", type=int, default=20, help="diffusion steps T")
    sub.add_argument("--kappa", type=float, default=2.0, help="noise scale")
    sub.add_argument("--p", type=float, default=0.3, help="ladder growth exponent")
    sub.add_argument("--eta-t", type=float, default=0.99, dest="eta_t",
                     help="terminal shift level")
    sub.add_argument("--eta1-sum", type=float, default=None, dest="eta1_sum",
                     help="override the starting shift level formula")


def _add_interp_flags(sub) -> None:
    sub.add_argument("--i0", required=True, help="first frame PNG")
    sub.add_argument("--i1", required=True, help="second frame PNG")
    sub.add_argument("--gt", default=None, help="reference middle frame PNG")
    sub.add_argument("--tau", default="0.5", help="position in [0, 1] or 'ifd' (needs --gt)")
    sub.add_argument("--denoiser", default="shrinkage", choices=diffusion.DENOISER_KINDS)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--literal-infill", action="store_true",
                     help="use the verbatim masked-product infill")
    _add_schedule_flags(sub)


def _interp_config(args) -> pipeline.InterpConfig:
    gt = read_png(args.gt) if args.gt else None
    return pipeline.InterpConfig(
        schedule=_schedule_config(args),
        denoiser=args.denoiser,
        flow_params=FlowParams(),
        tau=_parse_tau(args.tau),
        seed=args.seed if args.seed is not None else _env_seed(),
        ground_truth=gt,
        literal_infill=args.literal_infill,
    )


def cmd_interpolate(args) -> int:
    cfg = _interp_config(args)
    i0 = read_png(args.i0)
    i1 = read_png(args.i1)
    start = time.perf_counter()
    record = args.dump_trajectory is not None
    prep = pipeline.prepare(i0, i1, cfg)
    run = diffusion.reverse_sample(
        prep.conds, prep.sched, prep.denoiser, prep.tau_hat, cfg.seed,
        record_trajectory=record,
    )
    wall = time.perf_counter() - start
    write_png(run.final, args.out)
    if record:
        traj_dir = Path(args.dump_trajectory)
        traj_dir.mkdir(parents=True, exist_ok=True)
        for k, snapshot in enumerate(run.trajectory):
            write_png(np.clip(snapshot, 0.0, 1.0), traj_dir / f"state_{k:03d}.png")
    summary = {
        "tau_used": prep.tau_hat,
        "steps": args.steps,
        "seed": cfg.seed,
        "wall_time_s": round(wall, 3),
    }
    if args.gt:
        gt = cfg.ground_truth
        summary["psnr"] = round(psnr(run.final, gt), 4)
        summary["ssim"] = round(ssim(run.final, gt), 6)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    if args.samples < 2:
        raise InvalidInputError("--samples must be at least 2")
    cfg = _interp_config(args)
    i0 = read_png(args.i0)
    i1 = read_png(args.i1)
    report = pipeline.uncertainty(i0, i1, cfg, args.samples, threads=_env_threads())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_png(report.mean_img, out_dir / "mean.png")
    sd_scale = float(report.sd_map.max()) or 1.0
    mm_scale = float(report.minmax_map.max()) or 1.0
    write_png(report.sd_map / sd_scale, out_dir / "sd.png")
    write_png(report.minmax_map / mm_scale, out_dir / "minmax.png")
    summary = {
        "samples": report.samples,
        "corr": report.mean_pairwise_corr,
        "global_sd": float(report.sd_map.mean()),
        "global_minmax": float(report.minmax_map.mean()),
        "sd_png_scale": sd_scale,
        "minmax_png_scale": mm_scale,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def _tau_histogram(taus: list[float]) -> str:
    counts, _ = np.histogram(taus, bins=20, range=(0.0, 1.0))
    lines = ["tau histogram (20 bins over [0, 1]):"]
    for k, c in enumerate(counts):
        lines.append(f"  [{k / 20:.2f}, {(k + 1) / 20:.2f}) {c:4d} {'#' * int(c)}")
    arr = np.asarray(taus)
    lines.append(f"  n={len(taus)} mean={arr.mean():.4f} sd={arr.std(ddof=1) if len(taus) > 1 else 0.0:.4f}")
    return "\n".join(lines)


def cmd_tau(args) -> int:
    if args.dir:
        root = Path(args.dir)
        if not root.is_dir():
            _log(f"error: {root} is not a readable directory")
            return EXIT_IO
        samples, errors = synthdata.load_triplets(root)
        for err in errors:
            _log(f"warning: skipped triplet: {err}")
        print("path,tau,mass0,mass1,degenerate")
        taus = []
        for sample in samples:
            est = taumetric.tau_ifd(sample.i0, sample.i_tau, sample.i1)
            taus.append(est.tau)
            print(f"{sample.name},{est.tau:.6f},{est.mass_0:.6g},{est.mass_1:.6g},{int(est.degenerate)}")
        if taus:
            _log(_tau_histogram(taus))
        else:
            _log("warning: no triplets found")
        return EXIT_OK

    if not (args.i0 and args.imid and args.i1):
        raise InvalidInputError("tau needs --i0/--imid/--i1, or --dir for batch mode")
    i0, imid, i1 = read_png(args.i0), read_png(args.imid), read_png(args.i1)
    flows = None
    if args.flow0 or args.flow1:
        if not (args.flow0 and args.flow1):
            raise InvalidInputError("--flow0 and --flow1 must be given together")
        flows = (read_flo(args.flow0), read_flo(args.flow1))
    est = taumetric.tau_ifd(i0, imid, i1, flows=flows)
    if args.masks_out:
        mask_dir = Path(args.masks_out)
        mask_dir.mkdir(parents=True, exist_ok=True)
        write_png(taumetric.motion_mask(i0, imid), mask_dir / "mask_0.png")
        write_png(taumetric.motion_mask(i1, imid), mask_dir / "mask_1.png")
    print(json.dumps({
        "tau": est.tau, "mass0": est.mass_0, "mass1": est.mass_1,
        "degenerate": est.degenerate,
    }))
    return EXIT_OK


def cmd_schedule(args) -> int:
    tau_hat = _parse_tau(args.tau)
    if isinstance(tau_hat, str):
        raise InvalidInputError("schedule needs a numeric --tau for the weight partition")
    cfg = _schedule_config(args, weights=partition_weights(tau_hat))
    sched = build_schedule(cfg)
    print("t,eta_sum,eta_1,eta_2,alpha_1,alpha_2,sigma_t")
    for t in range(sched.T + 1):
        sigma = sched.posterior_sigma(t) if t >= 1 else 0.0
        print(
            f"{t},{sched.eta_sum[t]:.12g},{sched.eta[t][0]:.12g},{sched.eta[t][1]:.12g},"
            f"{sched.alpha[t][0]:.12g},{sched.alpha[t][1]:.12g},{sigma:.12g}"
        )
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = synthdata.SceneSpec.from_json(Path(args.spec).read_text())
    tau = float(args.tau)
    sample = synthdata.gen_triplet(spec, tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_png(sample.i0, out / "frame1.png")
    write_png(sample.i_tau, out / "frame2.png")
    write_png(sample.i1, out / "frame3.png")
    (out / "meta.json").write_text(json.dumps({"tau_true": tau}) + "\n")
    if args.gt_flow:
        write_flo(sample.gt_flow_01, out / "gt.flo")
    _log(f"wrote triplet to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.samples < diffusion.MIN_MC_SAMPLES:
        raise InvalidInputError(
            f"--samples must be at least {diffusion.MIN_MC_SAMPLES}, got {args.samples}"
        )
    seed = args.seed if args.seed is not None else _env_seed()
    cfg = _schedule_config(args, weights=(0.5, 0.5))
    sched = build_schedule(cfg)
    if args.inject_broken_schedule:  # test hook: tamper after construction
        eta_sum = sched.eta_sum.copy()
        eta_sum[max(2, sched.T // 2)] = eta_sum[1] / 2.0
        sched = replace(sched, eta_sum=eta_sum)

    report = diffusion.McReport(samples=args.samples)
    start = cfg.start_level()
    endpoint_checks = (
        ("start_level", start, float(sched.eta_sum[1])),
        ("terminal_level", cfg.eta_T_sum, float(sched.eta_sum[sched.T])),
        ("monotone_fraction", 1.0, float(np.mean(np.diff(sched.eta_sum[1:]) > 0.0))),
    )
    for name, expected, observed in endpoint_checks:
        err = abs(observed - expected)
        report.checks.append(diffusion.McCheck(
            "schedule_endpoints", name, expected, observed, 0.0, err <= 1e-12
        ))
    reduction_err = diffusion.n1_reduction_max_error(trials=1000, seed=seed)
    report.checks.append(diffusion.McCheck(
        "n1_reduction", "max_abs_error", 0.0, reduction_err, 0.0, reduction_err <= 1e-10
    ))
    if report.passed or not args.inject_broken_schedule:
        mc = diffusion.mc_verify(
            sched, diffusion.ScalarScenario(t=min(10, sched.T)), args.samples, seed
        )
        report.checks.extend(mc.checks)
    print(report.to_csv(), end="")
    if not report.passed:
        failed = [c for c in report.checks if not c.passed]
        _log(f"verification FAILED: {', '.join(f'{c.check}/{c.statistic}' for c in failed)}")
        return EXIT_VERIFY_FAILED
    _log("all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mird",
        description="Multi-input residual diffusion frame interpolation toolkit",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("interpolate", help="synthesize the middle frame")
    _add_interp_flags(sub)
    sub.add_argument("--out", required=True, help="output PNG path")
    sub.add_argument("--dump-trajectory", default=None, help="directory for per-step states")
    sub.set_defaults(func=cmd_interpolate)

    sub = subs.add_parser("uncertainty", help="repeat interpolation and map its spread")
    _add_interp_flags(sub)
    sub.add_argument("--samples", type=int, default=10, help="number of sampler runs")
    sub.add_argument("--out-dir", required=True, help="directory for mean/sd/minmax PNGs")
    sub.set_defaults(func=cmd_uncertainty)

    sub = subs.add_parser("tau", help="estimate the temporal position of a middle frame")
    sub.add_argument("--i0", default=None)
    sub.add_argument("--imid", default=None)
    sub.add_argument("--i1", default=None)
    sub.add_argument("--flow0", default=None, help=".flo override for I0 -> Imid")
    sub.add_argument("--flow1", default=None, help=".flo override for I1 -> Imid")
    sub.add_argument("--masks-out", default=None, help="directory for motion-mask PNGs")
    sub.add_argument("--dir", default=None, help="triplet directory for batch mode")
    sub.set_defaults(func=cmd_tau)

    sub = subs.add_parser("schedule", help="dump the noise ladder as CSV")
    _add_schedule_flags(sub)
    sub.add_argument("--tau", default="0.5", help="position for the weight partition")
    sub.set_defaults(func=cmd_schedule)

    sub = subs.add_parser("synth", help="generate a synthetic triplet")
    sub.add_argument("--spec", required=True, help="scene description JSON path")
    sub.add_argument("--tau", required=True, help="middle-frame position in (0, 1)")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--gt-flow", action="store_true", help="also write gt.flo")
    sub.set_defaults(func=cmd_synth)

    sub = subs.add_parser("verify", help="statistically verify the sampler against closed forms")
    _add_schedule_flags(sub)
    sub.add_argument("--samples", type=int, default=100_000)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--inject-broken-schedule", action="store_true", help=argparse.SUPPRESS)
    sub.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, ConfigError, GenerationError) as exc:
        _log(f"error{_stage_suffix(exc)}: {exc}")
        return EXIT_USAGE
    except FloFormatError as exc:
        _log(f"file format error{_stage_suffix(exc)}: {exc}")
        return EXIT_IO
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    except NumericalError as exc:
        _log(f"numerical failure{_stage_suffix(exc)}: {exc}")
        return EXIT_NUMERICAL


def _stage_suffix(exc: Exception) -> str:
    stage = getattr(exc, "stage", None)
    return f" in stage {stage}" if stage else ""


if __name__ == "__main__":
    sys.exit(main())
