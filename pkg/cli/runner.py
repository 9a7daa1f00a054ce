"""Command-line front end.

Subcommands::

    verify     run an invariant battery (``--suite``) and report each check
    converge   kappa sweep of T_kappa against T; CSV report with fitted slope
    apply      evaluate an operator form at the rows of a points file
    bilinear   assemble one piece of the variational form for a field pair

Exit status is 0 on success, 1 when a verification check fails and 2 on
usage or configuration errors.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, DomainError, MollerPfError
from eval.csda import KappaConfig, adjoint_convergence_sweep, convergence_sweep, csda_apply
from eval.transport import FORMS, TransportContext, transport_apply
from eval.variational import (
    bilinear_B0,
    bilinear_B1,
    bilinear_B2,
    bilinear_report,
    variational_residual,
)
from performance.metrics import create_run_metadata
from performance.report import format_slope, write_csv, write_json

from .config import RunConfig, parse_kappa_list, parse_run_config
from .suites import SUITE_CHOICES, create_suite_runner, summarize

APPLY_FORMS = FORMS + ("csda",)
BILINEAR_FORMS = ("B0", "B1", "B2", "B2low", "B", "residual")


def print_run_metadata(seed: Optional[int], config: Optional[RunConfig] = None) -> None:
    """Print the reproducibility metadata block to stderr."""
    metadata = create_run_metadata(seed=seed, config=config.to_dict() if config else None)
    print("=== Run Metadata ===", file=sys.stderr)
    print(metadata.to_json(), file=sys.stderr)
    print("===================", file=sys.stderr)


def _info_logger(verbose: bool) -> Optional[Callable[[str], None]]:
    if not verbose:
        return None

    def log(msg: str) -> None:
        print(f"info string {msg}")

    return log


def _emit(payload: Any, out: Optional[str]) -> None:
    if out:
        path = write_json(payload, out)
        print(f"wrote {path}")
    else:
        data = payload.to_dict() if hasattr(payload, "to_dict") else payload
        print(json.dumps(data, indent=2, sort_keys=True))


# ------------------------------------------------------------------ verify


def run_verify(config: RunConfig, suite: str, tol: Optional[float] = None,
               out: Optional[str] = None, logger: Optional[Callable[[str], None]] = None) -> int:
    """Run a verification suite; returns the exit status."""
    if tol is not None:
        if tol < 0.0:
            raise ConfigError(f"--tol must be non-negative, got {tol}")
        config = config.with_tolerance(tol)
    runner = create_suite_runner(config, logger)
    results = runner.run(suite)
    for result in results:
        print(result.line())
    summary = summarize(results)
    print(f"{summary['passed']}/{summary['checks']} checks passed "
          f"in {runner.metrics.total_ms():.0f} ms")
    if out:
        write_json(summary, out)
    return 0 if summary["failed"] == 0 else 1


# ---------------------------------------------------------------- converge


def run_converge(config: RunConfig, field_id: Optional[str] = None,
                 kappa_list: Optional[str] = None, adjoint: bool = False,
                 out: Optional[str] = None, points: Optional[int] = None,
                 logger: Optional[Callable[[str], None]] = None) -> int:
    """kappa sweep; writes the CSV report to ``out`` (or stdout) and prints the slope."""
    kappa = config.kappa
    if kappa_list is not None:
        kappa = KappaConfig(kappa=kappa.kappa, kappa_sweep=tuple(parse_kappa_list(kappa_list)))
    if len(kappa.kappa_sweep) < 3:
        raise ConfigError(f"a convergence sweep needs at least 3 kappa values, "
                          f"got {len(kappa.kappa_sweep)}")
    default_id = config.test_fields[0] if adjoint else config.trial_fields[0]
    field = config.field(field_id or default_id)
    ctx = config.build_context(logger)
    n_points = points if points is not None else config.points
    sweep = adjoint_convergence_sweep if adjoint else convergence_sweep
    report = sweep(field, ctx, kappa, n_points, config.seed)
    target = out or config.output.get("csv")
    if target:
        path = write_csv(report, target)
        print(f"wrote {path}")
    else:
        sys.stdout.write(report.to_csv())
    print(f"slope={format_slope(report.fitted_slope)}")
    return 0


# ------------------------------------------------------------------- apply


def read_points(path: str, radius: float) -> List[Tuple[np.ndarray, np.ndarray, float]]:
    """Rows of a JSON points file.

    Each row is either ``[x1, x2, x3, w1, w2, w3, E]`` or an object with keys
    ``x``, ``omega`` and ``E``.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read points file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"points file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ConfigError("points file must hold a JSON array")
    rows = []
    for i, row in enumerate(data):
        try:
            if isinstance(row, dict):
                x = np.asarray(row["x"], dtype=float)
                w = np.asarray(row["omega"], dtype=float)
                e = float(row["E"])
            else:
                flat = np.asarray(row, dtype=float)
                x, w, e = flat[:3], flat[3:6], float(flat[6])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ConfigError(f"points row {i} is malformed: {row!r}") from exc
        if x.shape != (3,) or w.shape != (3,):
            raise ConfigError(f"points row {i} must carry 3-vectors x and omega")
        norm = float(np.linalg.norm(x))
        if norm > radius * (1.0 + 1e-12):
            raise DomainError(f"points row {i}: |x| = {norm:.6g} exceeds the radius {radius}")
        if abs(float(np.linalg.norm(w)) - 1.0) > 1e-10:
            raise DomainError(f"points row {i}: omega is not a unit vector")
        rows.append((x, w, e))
    return rows


def apply_operator(form: str, field: Any, rows: Sequence[Tuple[np.ndarray, np.ndarray, float]],
                   ctx: TransportContext, kappa: float) -> List[Dict[str, Any]]:
    if form not in APPLY_FORMS:
        raise ConfigError(f"unknown operator {form!r}; expected one of {list(APPLY_FORMS)}")
    out = []
    for x, w, e in rows:
        if form == "csda":
            value = float(csda_apply(field, x, w, e, kappa, ctx))
        else:
            value = float(transport_apply(field, x, w, e, ctx, form))
        out.append({"point": {"x": x.tolist(), "omega": w.tolist(), "E": e}, "value": value})
    return out


def run_apply(config: RunConfig, form: str, field_id: Optional[str], points_path: str,
              out: Optional[str] = None, logger: Optional[Callable[[str], None]] = None) -> int:
    field = config.field(field_id or config.trial_fields[0])
    rows = read_points(points_path, config.space.radius)
    values = apply_operator(form, field, rows, config.build_context(logger),
                            config.kappa.kappa) if rows else []
    _emit(values, out or config.output.get("json"))
    return 0


# ---------------------------------------------------------------- bilinear


def run_bilinear(config: RunConfig, form: str, psi_id: Optional[str], v_id: Optional[str],
                 out: Optional[str] = None, logger: Optional[Callable[[str], None]] = None) -> int:
    if form not in BILINEAR_FORMS:
        raise ConfigError(f"unknown form {form!r}; expected one of {list(BILINEAR_FORMS)}")
    ctx = config.build_context(logger)
    psi = config.field(psi_id or config.trial_fields[0])
    payload: Any
    if form == "residual":
        tests = [config.field(fid) for fid in config.test_fields]
        payload = variational_residual(psi, ctx, tests)
    else:
        v = config.field(v_id or config.test_fields[0])
        if form == "B0":
            value = bilinear_B0(psi, v, ctx)
        elif form == "B1":
            value = bilinear_B1(psi, v, ctx)
        elif form == "B2":
            value = bilinear_B2(psi, v, ctx, "hyper")
        elif form == "B2low":
            value = bilinear_B2(psi, v, ctx, "lowered")
        else:
            value = bilinear_report(psi, v, ctx).B_total
        payload = {"form": form, "value": value}
    _emit(payload, out or config.output.get("json"))
    return 0


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moller-pf",
        description="Finite-part Boltzmann transport operators for Moller scattering",
    )
    parser.add_argument("--seed", type=int, help="Seed for quasi-random phase points")
    parser.add_argument("--config", help="JSON config file or preset name (default, fast)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Verbose output")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    verify = subparsers.add_parser("verify", help="Run a verification suite")
    verify.add_argument("--suite", choices=SUITE_CHOICES, default="all", help="Suite to run")
    verify.add_argument("--tol", type=float, help="Override every residual tolerance")
    verify.add_argument("--out", help="Write the JSON summary to this path")

    converge = subparsers.add_parser("converge", help="kappa sweep of the CSDA approximation")
    converge.add_argument("--kappa-list", help="Comma-separated kappa values, decreasing to 1")
    converge.add_argument("--field", help="Field id, e.g. abub*Y10*cm1")
    converge.add_argument("--adjoint", action="store_true", help="Sweep T_kappa* against T*")
    converge.add_argument("--points", type=int, help="Number of phase points")
    converge.add_argument("--out", help="CSV output path")

    apply_p = subparsers.add_parser("apply", help="Evaluate an operator at listed points")
    apply_p.add_argument("--form", choices=APPLY_FORMS, default="refined", help="Operator form")
    apply_p.add_argument("--field", help="Field id")
    apply_p.add_argument("--points", required=True, help="JSON file of (x, omega, E) rows")
    apply_p.add_argument("--out", help="JSON output path")

    bilinear = subparsers.add_parser("bilinear", help="Assemble a bilinear form")
    bilinear.add_argument("--form", choices=BILINEAR_FORMS, default="B", help="Form to assemble")
    bilinear.add_argument("--field", help="Trial field id")
    bilinear.add_argument("--test-field", help="Test field id")
    bilinear.add_argument("--out", help="JSON output path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    logger = _info_logger(args.verbose)
    try:
        config = parse_run_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
            print_run_metadata(args.seed, config)
        if args.command == "verify":
            return run_verify(config, args.suite, args.tol, args.out, logger)
        if args.command == "converge":
            return run_converge(config, args.field, args.kappa_list, args.adjoint, args.out,
                                args.points, logger)
        if args.command == "apply":
            return run_apply(config, args.form, args.field, args.points, args.out, logger)
        return run_bilinear(config, args.form, args.field, args.test_field, args.out, logger)
    except (MollerPfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
