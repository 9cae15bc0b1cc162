"""Command-line driver.

    robustoc optimize  --config run.json --out runs/
    robustoc hessian   --config run.json --backend fd
    robustoc calibrate --config run.json
    robustoc ensemble  --config run.json --seed 7
    robustoc verify    --config run.json
    robustoc reproduce fig3 --config lz.json

Exit codes: 0 success, 1 usage or configuration error, 2 convergence or
data-quality failure. Every command writes only to its own subdirectory of
the output directory; later stages read earlier stages' artifacts.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from threadpoolctl import threadpool_limits

from . import pipeline
from .config import RunConfig, load_config
from .ensemble import select_best, verify_ensemble
from .errors import (AmbiguousInversionError, DegenerateInversionError, EmptyInputError, InsufficientDataError,
                     MonotonicityViolationError, NoOptimumFoundError, NotAtOptimumError, RobustOCError)
from .hessian import HessianMatrix, eigen_spectrum, rank_one_summary
from .pulse import ControlPulse
from .tolerance import ToleranceFit, samples_to_csv, threshold_ell

logger = logging.getLogger("robustoc")

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
_DATA_ERRORS = (NoOptimumFoundError, MonotonicityViolationError, NotAtOptimumError, InsufficientDataError,
                EmptyInputError, DegenerateInversionError, AmbiguousInversionError)


class UsageError(Exception):
    pass


class DataQualityError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _stage(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out) / name


def _read(path: Path, producer: str) -> str:
    if not path.exists():
        raise UsageError(f"missing artifact {path}; run `robustoc {producer}` with the same --out first")
    return path.read_text()


def _load_pulse(cfg):
    pulse = ControlPulse.from_json(_read(_stage(cfg, "optimize") / "pulse.json", "optimize"))
    if pulse.grid.N != cfg.grid.N or abs(pulse.grid.T - cfg.T) > 1e-12 * cfg.T:
        raise UsageError("stored optimal pulse does not match the configured grid; rerun `robustoc optimize`")
    return pulse


def _load_hessian(cfg):
    return HessianMatrix.from_dict(json.loads(_read(_stage(cfg, "hessian") / "hessian.json", "hessian")))


def _load_fit(cfg):
    return ToleranceFit.from_json(_read(_stage(cfg, "calibrate") / "fit.json", "calibrate"))


def _config_echo(cfg: RunConfig) -> dict:
    return json.loads(cfg.model_dump_json())


# ---------------------------------------------------------------------------
# commands


def cmd_optimize(cfg: RunConfig) -> int:
    problem = pipeline.build_problem(cfg)
    res = pipeline.find_optimum(cfg, problem)
    d = _stage(cfg, "optimize")
    _atomic_write(d / "pulse.json", res.pulse.to_json() + "\n")
    _atomic_write(d / "pulse.csv", res.pulse.to_csv())
    if res.trace is not None:
        _atomic_write(d / "trace.csv", res.trace.to_csv())
    _write_json(d / "manifest.json", {
        "infidelity": res.infidelity, "gradient_norm": res.gradient_norm, "converged": res.converged,
        "iterations": res.trace.iterations if res.trace else 0, "config": _config_echo(cfg)})
    logger.info("optimum: infidelity %.3e, gradient norm %.3e", res.infidelity, res.gradient_norm)
    return EXIT_OK if res.converged else EXIT_FAILED


def cmd_hessian(cfg: RunConfig) -> int:
    pulse = _load_pulse(cfg)
    problem = pipeline.build_problem(cfg)
    H = pipeline.hessian_at(cfg, problem, pulse)
    spec = eigen_spectrum(H, cfg.hessian.rel_threshold)
    r1 = rank_one_summary(H, cfg.hessian.rel_threshold)
    manifest = {"backend": H.backend, "N": H.N, "dt": H.dt, "M": spec.M, "warnings": list(H.warnings),
                "asymmetry": H.raw_asymmetry,
                "rank_one": {"mean_entry": r1.mean_entry, "lambda_rank_one": r1.lambda_rank_one,
                             "lambda_max": r1.lambda_max, "discrepancy": r1.discrepancy, "valid": r1.valid}}
    if cfg.hessian.compare_with:
        other = pipeline.hessian_at(cfg, problem, pulse, cfg.hessian.compare_with)
        scale = float(np.max(np.abs(H.entries)))
        diff = float(np.max(np.abs(H.entries - other.entries)))
        manifest["comparison"] = {"backend": other.backend, "max_abs_diff": diff,
                                  "relative_to_max_entry": diff / scale if scale else 0.0}
    d = _stage(cfg, "hessian")
    _atomic_write(d / "hessian.csv", H.to_csv())
    _atomic_write(d / "hessian.json", H.to_json() + "\n")
    _atomic_write(d / "spectrum.csv", spec.to_csv())
    _write_json(d / "manifest.json", manifest)
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    pulse = _load_pulse(cfg)
    H = _load_hessian(cfg)
    problem = pipeline.build_problem(cfg)
    fit = pipeline.run_calibration(cfg, problem, pulse, H)
    lam = eigen_spectrum(H, cfg.hessian.rel_threshold).nonzero
    d = _stage(cfg, "calibrate")
    _atomic_write(d / "samples.csv", fit.samples_csv())
    _atomic_write(d / "fit.json", fit.to_json() + "\n")
    ell = {str(F): threshold_ell(fit, lam, F) for F in (0.9, 0.99, 0.999)}
    _write_json(d / "manifest.json", {"fit": fit.params(), "threshold_ell": ell})
    return EXIT_OK


def _verification_files(cfg, d, problem, ens):
    v = verify_ensemble(problem, ens, slack=cfg.ensemble.slack)
    _atomic_write(d / "verification.csv", v.to_csv())
    return v


def cmd_ensemble(cfg: RunConfig) -> int:
    pulse = _load_pulse(cfg)
    H = _load_hessian(cfg)
    fit = _load_fit(cfg)
    problem = pipeline.build_problem(cfg)
    ens = pipeline.run_ensemble(cfg, problem, pulse, H, fit)
    d = _stage(cfg, "ensemble")
    _atomic_write(d / "records.csv", ens.records_csv())
    manifest = ens.manifest()
    for stale in (d / "pulses").glob("pulse_*.csv"):
        stale.unlink()
    for r, p in select_best(ens) if len(ens) else []:
        _atomic_write(d / "pulses" / f"pulse_{r.index:05d}.csv", p.to_csv())
    manifest["ranking"] = [r.index for r, _ in select_best(ens)] if len(ens) else []
    status = EXIT_OK
    if len(ens):
        v = _verification_files(cfg, d, problem, ens)
        manifest["pass_fraction"] = v.pass_fraction
        if v.pass_fraction < cfg.ensemble.min_pass_fraction:
            status = EXIT_FAILED
    else:
        manifest["pass_fraction"] = None
        logger.warning("no distortion met the criterion; the ensemble is empty")
    _write_json(d / "manifest.json", manifest)
    return status


def cmd_verify(cfg: RunConfig) -> int:
    """Re-propagate the stored ensemble pulses."""
    d_in = _stage(cfg, "ensemble")
    pdir = d_in / "pulses"
    if not pdir.is_dir():
        raise UsageError(f"missing artifact {pdir}; run `robustoc ensemble` with the same --out first")
    files = sorted(pdir.glob("pulse_*.csv"))
    if not files:
        raise DataQualityError("the stored ensemble is empty")
    problem = pipeline.build_problem(cfg)
    values = np.stack([ControlPulse.from_csv(f.read_text()).values for f in files])
    exact = problem.cost_batch(values)
    J = cfg.ensemble.J_target
    ok = exact <= J * (1.0 + cfg.ensemble.slack)
    d = _stage(cfg, "verify")
    rows = [(int(f.stem.split("_")[1]), float(e), int(k)) for f, e, k in zip(files, exact, ok)]
    _atomic_write(d / "verification.csv", _csv(["index", "exact_infidelity", "passed"], rows))
    frac = float(np.mean(ok))
    _write_json(d / "manifest.json", {"pass_fraction": frac, "J_target": J, "slack": cfg.ensemble.slack,
                                      "pulses": len(files)})
    return EXIT_OK if frac >= cfg.ensemble.min_pass_fraction else EXIT_FAILED


def cmd_reproduce(figure: str, cfg: RunConfig) -> int:
    """Self-contained: recomputes optimum, Hessian and (where needed) calibration."""
    problem = pipeline.build_problem(cfg)
    opt = pipeline.find_optimum(cfg, problem)
    if not opt.converged:
        raise DataQualityError(f"optimum not reached (infidelity {opt.infidelity:.3e})")
    H = pipeline.hessian_at(cfg, problem, opt.pulse)
    d = _stage(cfg, "reproduce") / figure
    if figure == "fig2a":
        amps = cfg.reproduce.amplitudes
        if amps is None:
            amps = np.linspace(0.0, 0.5, 26)
        a, exact, quad = pipeline.fig2a_series(problem, opt.pulse, H, amps)
        _atomic_write(d / "fig2a.csv", _csv(["amplitude", "exact_infidelity", "quadratic_estimate"],
                                            zip(a, exact, quad)))
        _write_json(d / "manifest.json", {"figure": figure, "points": len(a), "config": _config_echo(cfg)})
        return EXIT_OK
    fit = pipeline.run_calibration(cfg, problem, opt.pulse, H)
    if figure == "fig2b":
        _atomic_write(d / "samples.csv", samples_to_csv(fit.samples))
        e = np.geomspace(*cfg.calibration.infidelity_range, 200)
        _atomic_write(d / "fit_curve.csv", _csv(["infidelity", "alpha_fit"], zip(e, fit(e))))
        fmt = f"a={fit.a:.3f}, b={fit.b:.3f}" + ("" if not fit.free_exponent else f", c={fit.c:.3f}")
        _write_json(d / "manifest.json", {"figure": figure, "fit": fit.params(), "fit_summary": fmt,
                                          "config": _config_echo(cfg)})
        return EXIT_OK
    idx, exact, crit, ens = pipeline.fig3_series(cfg, problem, opt.pulse, H, fit, cfg.reproduce.realizations)
    J = cfg.ensemble.J_target
    _atomic_write(d / "fig3.csv", _csv(["realization", "exact_infidelity", "criterion_I", "threshold"],
                                       ((int(i), float(e), float(c), J) for i, e, c in zip(idx, exact, crit))))
    acc = crit <= J
    rej = crit > 2 * J
    _write_json(d / "manifest.json", {
        "figure": figure, "realizations": int(idx.size), "J_target": J, "fit": fit.params(),
        "accepted": int(acc.sum()),
        "accepted_within_slack": float(np.mean(exact[acc] <= J * 1.25)) if acc.any() else None,
        "rejected_above_2J": int(rej.sum()),
        "rejected_truly_above_J": float(np.mean(exact[rej] > J)) if rej.any() else None})
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--backend", choices=["gateaux", "fd", "finite_difference", "bfgs"],
                   help="Hessian backend (overrides the config)")
    p.add_argument("--threads", type=int, help="cap on BLAS/LAPACK threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustoc", description="Tolerance analysis of optimal control pulses.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [("optimize", "find the optimal pulse"), ("hessian", "Hessian and spectrum at the optimum"),
                        ("calibrate", "fit the tolerance curve"), ("ensemble", "sample, filter and rank pulses"),
                        ("verify", "re-propagate the stored ensemble")]:
        _common(sub.add_parser(name, help=help_))
    rp = sub.add_parser("reproduce", help="data series for a figure")
    rp.add_argument("figure", choices=["fig2a", "fig2b", "fig3"])
    _common(rp)
    return parser


def _thread_limit(n):
    """Cap BLAS/LAPACK threads; the propagation kernels themselves run serially."""
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise UsageError("--threads must be positive")
    return threadpool_limits(limits=n)


COMMANDS = {"optimize": cmd_optimize, "hessian": cmd_hessian, "calibrate": cmd_calibrate,
            "ensemble": cmd_ensemble, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with _thread_limit(args.threads):
            cfg = load_config(args.config, seed=args.seed, out=args.out, backend=args.backend)
            if args.command == "reproduce":
                return cmd_reproduce(args.figure, cfg)
            return COMMANDS[args.command](cfg)
    except (UsageError, ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"robustoc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataQualityError, *_DATA_ERRORS) as exc:
        print(f"robustoc: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (RobustOCError, ValueError) as exc:
        print(f"robustoc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
