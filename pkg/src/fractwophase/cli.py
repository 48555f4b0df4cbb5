"""Command-line dispatcher.

Exit codes: 0 success, 2 validation/config failure, 3 non-convergence,
4 I/O failure.  Every run writes a manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, parse_config
from .errors import (
    ConfigParseError,
    DegenerateFitError,
    FieldReadError,
    FixedPointNonConvergenceError,
    FracTwoPhaseError,
    NonConvergenceError,
    ReportWriteError,
    ValidationError,
)
from .grid import GridFunction
from .io import write_field, write_manifest, write_report
from .limits import battery_bumps, s_sweep, v_perturbation_study
from .qvi import apply_phi, solve_qvi
from .solver import epsilon_rate_study, solve_two_membrane, solve_two_phase

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4

REPORT_KEYS = ("final_eps", "iters", "residual", "energy", "interphase_measure")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _public_report(diagnostics: dict) -> dict:
    report = {k: diagnostics[k] for k in REPORT_KEYS if k in diagnostics}
    for k in ("weak_residual_max", "stage_eps", "stage_residuals",
              "outer_iterations", "fp_history"):
        if k in diagnostics:
            report[k] = diagnostics[k]
    return report


def _write_solution(sol, out: Path) -> None:
    write_field(sol.u, out / "u.ndg")
    write_field(sol.chi_gt, out / "chi_gt.ndg")
    write_field(sol.chi_lt, out / "chi_lt.ndg")
    write_field(sol.zeta, out / "zeta.ndg")
    write_report(_public_report(sol.diagnostics), out / "report.json")


def cmd_validate(args) -> int:
    parse_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_solve(args) -> int:
    rc = parse_config(args.config)
    out = _outdir(args)
    sol = solve_two_phase(rc.problem, rc.reg, rc.solver)
    _write_solution(sol, out)
    write_manifest(out, rc.path, rc.seed, sys.argv[1:])
    print(f"solved: residual {sol.diagnostics['residual']:.3e}, "
          f"energy {sol.diagnostics['energy']:.6g}")
    return EXIT_OK


def cmd_rate(args) -> int:
    rc = parse_config(args.config)
    out = _outdir(args)
    eps_list = [float(tok) for tok in args.eps_list.split(",") if tok.strip()]
    report = epsilon_rate_study(rc.problem, eps_list, rc.solver)
    write_report({
        "eps": report.eps,
        "errors": report.errors,
        "fitted_slope": report.fitted_slope,
        "noise_floor": report.noise_floor,
        "usable": report.usable,
        "regularization_inactive": report.regularization_inactive,
    }, out / "rate_report.json")
    write_manifest(out, rc.path, rc.seed, sys.argv[1:])
    if report.regularization_inactive:
        print("rate study: regularization inactive (all errors at noise floor)")
    else:
        print(f"rate study: fitted slope {report.fitted_slope:.4f}")
    return EXIT_OK


def cmd_sweep_s(args) -> int:
    rc = parse_config(args.config)
    out = _outdir(args)
    s_list = [float(tok) for tok in args.s_list.split(",") if tok.strip()]
    report = s_sweep(lambda s: rc.problem.with_s(s), s_list, rc.reg, rc.solver)
    write_report({
        "s_values": report.s_values,
        "grad_errors": report.grad_errors,
        "pairings_gt": report.pairings_gt,
        "pairings_lt": report.pairings_lt,
        "interphase_measures": report.interphase_measures,
        "strong_phase_errors": report.strong_phase_errors,
        "battery_version": report.battery_version,
    }, out / "sweep_report.json")
    write_manifest(out, rc.path, rc.seed, sys.argv[1:])
    print(f"s-sweep over {len(s_list)} orders: final gradient error "
          f"{report.grad_errors[-2] if len(report.grad_errors) > 1 else 0.0:.3e}")
    return EXIT_OK


def cmd_perturb_v(args) -> int:
    rc = parse_config(args.config)
    out = _outdir(args)
    scales = [float(tok) for tok in args.v_scale_list.split(",") if tok.strip()]
    bump = battery_bumps(rc.mask)[0]
    base_v = rc.problem.require_v()
    v_list = [
        GridFunction(rc.grid, base_v.values + t * bump.values, True)
        for t in scales
    ]
    report = v_perturbation_study(rc.problem, v_list, rc.reg, rc.solver)
    write_report({
        "scales": scales,
        "grad_errors": report.grad_errors,
        "pairing_gaps": report.pairing_gaps,
        "noise_floor": report.noise_floor,
    }, out / "perturb_report.json")
    write_manifest(out, rc.path, rc.seed, sys.argv[1:])
    print(f"perturb-v over {len(scales)} scales: final error "
          f"{report.grad_errors[-1]:.3e}")
    return EXIT_OK


def cmd_two_membrane(args) -> int:
    rc = parse_config(args.config)
    if rc.membrane_g is None:
        raise ValidationError("two-membrane run needs a [two_membrane] section with g")
    out = _outdir(args)
    sol = solve_two_membrane(rc.problem, rc.membrane_g, rc.reg, rc.solver)
    write_field(sol.u, out / "u.ndg")
    write_field(sol.w, out / "w.ndg")
    write_field(sol.chi_gt, out / "chi_gt.ndg")
    write_field(sol.chi_lt, out / "chi_lt.ndg")
    write_field(sol.zeta, out / "zeta.ndg")
    write_report(_public_report(sol.diagnostics), out / "report.json")
    write_manifest(out, rc.path, rc.seed, sys.argv[1:])
    print(f"two-membrane solved: residual {sol.diagnostics['residual']:.3e}")
    return EXIT_OK


def _phi_with_overrides(rc: RunConfig, args):
    from .io import read_field
    from .qvi import AffineReflectionPhi, CoupledMembranePhi, FixedPointConfig

    phi = rc.phi
    if args.phi_v0_file:
        v0 = read_field(args.phi_v0_file, padding_factor=rc.grid.padding_factor)
        phi = AffineReflectionPhi(mask=rc.mask, v0=v0)
    if phi is None:
        raise ValidationError("qvi run needs a [phi] section or --phi-v0-file")
    if isinstance(phi, CoupledMembranePhi) and args.phi_t is not None:
        phi.t = float(args.phi_t)
    fp = FixedPointConfig(
        theta=args.theta, fp_tol=args.fp_tol, max_outer=args.max_outer,
        inner=rc.solver, reg=rc.reg,
    )
    return phi, fp


def cmd_qvi(args) -> int:
    rc = parse_config(args.config)
    out = _outdir(args)
    phi, fp = _phi_with_overrides(rc, args)
    data = rc.problem
    sol, history = solve_qvi(data, phi, fp)
    _write_solution(sol, out)
    write_field(sol.v, out / "v.ndg")
    write_report({"fp_history": history,
                  "outer_iterations": len(history)}, out / "fp_history.json")
    write_manifest(out, rc.path, rc.seed, sys.argv[1:])
    print(f"qvi fixed point after {len(history)} outer iterations "
          f"(residual {history[-1]:.3e})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fractwophase",
        description="Two-phase obstacle-type problems for the fractional p-Laplacian",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **extra):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        if name != "validate":
            sp.add_argument("--out", required=True)
        sp.set_defaults(fn=fn)
        return sp

    add("validate", cmd_validate)
    add("solve", cmd_solve)
    sp = add("rate", cmd_rate)
    sp.add_argument("--eps-list", required=True,
                    help="comma-separated, strictly decreasing")
    sp = add("sweep-s", cmd_sweep_s)
    sp.add_argument("--s-list", required=True,
                    help="comma-separated, increasing, ending at 1.0")
    sp = add("perturb-v", cmd_perturb_v)
    sp.add_argument("--v-scale-list", required=True,
                    help="comma-separated amplitudes of the perturbation bump")
    add("two-membrane", cmd_two_membrane)
    sp = add("qvi", cmd_qvi)
    sp.add_argument("--phi-v0-file", default=None,
                    help="NDG1 level set (switches to the affine reflection map)")
    sp.add_argument("--phi-t", default=None)
    sp.add_argument("--phi-c1", default=None, type=float)
    sp.add_argument("--phi-g-minus", default=None)
    sp.add_argument("--phi-g-plus", default=None)
    sp.add_argument("--theta", default=0.5, type=float)
    sp.add_argument("--fp-tol", default=1e-5, type=float)
    sp.add_argument("--max-outer", default=30, type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigParseError, ValidationError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NonConvergenceError, FixedPointNonConvergenceError, DegenerateFitError) as err:
        print(f"non-convergence: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (FieldReadError, ReportWriteError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except FracTwoPhaseError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
