"""Config ingestion and validation.

Run configs are INI-style files with sections ``[problem]``, ``[solver]``,
``[regularization]``, and optionally ``[phi]`` and ``[two_membrane]``.
Unknown sections or keys are hard errors: numerical experiments die by
silent misconfiguration, so a typo must abort the run before any solve.
All standing assumptions on the data (sign of the phase weights, exponent
window for q) are enforced here as well, through ProblemData construction.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .energy import ProblemData, RegularizationParams
from .errors import ConfigParseError, ValidationError
from .grid import (
    Ball,
    Box2D,
    BoxGrid,
    FIELD_BUILTINS,
    GridFunction,
    Interval,
    OmegaMask,
    make_grid,
)
from .io import read_field
from .qvi import (
    AffineReflectionPhi,
    CoupledMembranePhi,
    NemytskiiPhi,
    PhiOperator,
    UrysonPhi,
)
from .solver import SolverConfig

_KNOWN_SECTIONS = {"problem", "solver", "regularization", "phi", "two_membrane"}

_KNOWN_KEYS = {
    "problem": {"dim", "omega", "n", "padding_factor", "p", "s", "q",
                "f", "lambda_plus", "lambda_minus", "v"},
    "solver": {"max_iters", "grad_tol", "step_rule", "armijo_c",
               "max_backtracks", "seed"},
    "regularization": {"eps0", "ratio", "steps"},
    "phi": {"variant", "func", "params", "phi0", "c1", "kernel",
            "kernel_params", "value_map", "value_map_params",
            "v0", "g_minus", "g_plus", "t"},
    "two_membrane": {"g"},
}

DEFAULTS = {
    "padding_factor": 4.0,
    "p": 2.0,
    "s": 0.5,
    "q": 2.0,
}


@dataclass
class RunConfig:
    grid: BoxGrid
    mask: OmegaMask
    problem: ProblemData
    solver: SolverConfig
    reg: RegularizationParams
    phi: PhiOperator | None
    membrane_g: GridFunction | None
    seed: int
    path: str


def _find_line(text: str, token: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(token):
            return i
    return None


def _floats(raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.split()]
    except ValueError as err:
        raise ConfigParseError(f"expected numbers, got {raw!r}: {err}") from err


def _parse_omega(raw: str, dim: int):
    toks = raw.split()
    kind = toks[0].lower()
    args = _floats(" ".join(toks[1:]))
    if kind == "interval":
        if dim != 1 or len(args) != 2:
            raise ConfigParseError("interval omega needs dim = 1 and two numbers")
        return Interval(*args)
    if kind == "box":
        if dim != 2 or len(args) != 4:
            raise ConfigParseError("box omega needs dim = 2 and four numbers")
        return Box2D(*args)
    if kind == "ball":
        if len(args) != dim + 1:
            raise ConfigParseError(f"ball omega needs {dim} center coords plus radius")
        return Ball(tuple(args[:dim]), args[-1])
    raise ConfigParseError(f"unknown omega shape {kind!r}")


def parse_field_spec(raw: str, grid: BoxGrid, mask: OmegaMask,
                     base_dir: Path) -> GridFunction:
    """Field value: ``const <c>`` | ``expr <builtin> <params...>`` | ``file <path>``."""
    toks = raw.split()
    kind = toks[0].lower()
    if kind == "const":
        (c,) = _floats(" ".join(toks[1:]))
        return FIELD_BUILTINS["const"](grid, c, mask)
    if kind == "expr":
        name = toks[1]
        args = _floats(" ".join(toks[2:]))
        if name == "const":
            return FIELD_BUILTINS["const"](grid, args[0], mask)
        if name == "gaussian_bump":
            amp, *center, width = args
            if len(center) != grid.dim:
                raise ConfigParseError(
                    f"gaussian_bump needs amplitude, {grid.dim} center coords, width")
            return FIELD_BUILTINS["gaussian_bump"](grid, amp, tuple(center), width, mask)
        if name == "linear_ramp":
            slope = args[0]
            center = args[1] if len(args) > 1 else 0.0
            return FIELD_BUILTINS["linear_ramp"](grid, slope, center, mask)
        if name == "sine_mode":
            amp, *kvec = args
            if len(kvec) != grid.dim:
                raise ConfigParseError(f"sine_mode needs amplitude plus {grid.dim} mode numbers")
            return FIELD_BUILTINS["sine_mode"](grid, amp, tuple(int(k) for k in kvec), mask)
        raise ConfigParseError(
            f"unknown builtin {name!r}; known: const, gaussian_bump, linear_ramp, sine_mode")
    if kind == "file":
        path = Path(toks[1])
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ValidationError(f"referenced field file does not exist: {path}")
        f = read_field(path, padding_factor=grid.padding_factor)
        if f.grid != grid:
            raise ValidationError(
                f"field file {path} lives on a different grid than the config")
        return GridFunction(grid, f.values * mask.indicator, True)
    raise ConfigParseError(f"field spec must start with const/expr/file, got {kind!r}")


def _reject_unknown(cp: configparser.ConfigParser, text: str) -> None:
    for section in cp.sections():
        if section not in _KNOWN_SECTIONS:
            raise ConfigParseError(f"unknown section [{section}]",
                                   line=_find_line(text, f"[{section}]"))
        for key in cp[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigParseError(
                    f"unknown key {key!r} in section [{section}]",
                    line=_find_line(text, key))


def _build_phi(cp, grid, mask, base_dir, problem_p) -> PhiOperator | None:
    if "phi" not in cp:
        return None
    sec = cp["phi"]
    variant = sec.get("variant", "").strip().lower()
    if variant == "nemytskii":
        func = sec.get("func", "scaled_clamp").strip()
        params = tuple(_floats(sec.get("params", "")))
        phi0_spec = sec.get("phi0", "const 0")
        phi0 = parse_field_spec(phi0_spec, grid, mask, base_dir)
        c1 = float(sec.get("c1", "0"))
        return NemytskiiPhi(mask=mask, func_name=func, params=params,
                            phi0=phi0, c1=c1)
    if variant == "uryson":
        return UrysonPhi(
            mask=mask,
            kernel_name=sec.get("kernel", "uniform").strip(),
            kernel_params=tuple(_floats(sec.get("kernel_params", "1"))),
            value_map_name=sec.get("value_map", "identity").strip(),
            value_map_params=tuple(_floats(sec.get("value_map_params", ""))),
        )
    if variant == "affine_reflection":
        v0 = parse_field_spec(sec.get("v0", "const 0"), grid, mask, base_dir)
        return AffineReflectionPhi(mask=mask, v0=v0)
    if variant == "coupled_membrane":
        return CoupledMembranePhi(
            mask=mask,
            t=float(sec.get("t", "1.0")),
            p=problem_p,
            g_minus=parse_field_spec(sec.get("g_minus", "const -1"), grid, mask, base_dir),
            g_plus=parse_field_spec(sec.get("g_plus", "const 1"), grid, mask, base_dir),
        )
    raise ConfigParseError(
        f"phi variant must be nemytskii/uryson/affine_reflection/coupled_membrane, "
        f"got {variant!r}")


def parse_config(path) -> RunConfig:
    """Parse and validate; raises before any solve on bad data."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ValidationError(f"cannot read config {path}: {err}") from err
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as err:
        line = getattr(err, "lineno", None)
        if line is None and getattr(err, "errors", None):
            line = err.errors[0][0]
        raise ConfigParseError(str(err), line=line) from err
    _reject_unknown(cp, text)

    if "problem" not in cp:
        raise ConfigParseError("config needs a [problem] section")
    prob = cp["problem"]
    for required in ("dim", "omega", "n"):
        if required not in prob:
            raise ConfigParseError(f"[problem] is missing required key {required!r}")

    try:
        dim = int(prob["dim"])
        omega = _parse_omega(prob["omega"], dim)
        n_vals = [int(float(t)) for t in prob["n"].split()]
        n = n_vals[0] if len(n_vals) == 1 else tuple(n_vals)
        padding = float(prob.get("padding_factor", str(DEFAULTS["padding_factor"])))
        p = float(prob.get("p", str(DEFAULTS["p"])))
        s = float(prob.get("s", str(DEFAULTS["s"])))
        q = float(prob.get("q", str(DEFAULTS["q"])))
    except ValueError as err:
        raise ConfigParseError(f"bad [problem] value: {err}") from err

    grid, mask = make_grid(omega, n, padding)
    base_dir = path.parent

    def field_of(key, default="const 0"):
        return parse_field_spec(prob.get(key, default), grid, mask, base_dir)

    problem = ProblemData(
        grid=grid, mask=mask, p=p, s=s,
        f=field_of("f"),
        lambda_plus=field_of("lambda_plus"),
        lambda_minus=field_of("lambda_minus"),
        v=field_of("v"),
        q=q,
    )

    sol = cp["solver"] if "solver" in cp else {}
    try:
        solver = SolverConfig(
            max_iters=int(sol.get("max_iters", "50000")),
            grad_tol=float(sol.get("grad_tol", "1e-7")),
            step_rule=sol.get("step_rule", "adaptive-two-point").strip(),
            armijo_c=float(sol.get("armijo_c", "1e-4")),
            max_backtracks=int(sol.get("max_backtracks", "50")),
            seed=int(sol.get("seed", "0")),
        )
    except ValueError as err:
        raise ConfigParseError(f"bad [solver] value: {err}") from err

    regs = cp["regularization"] if "regularization" in cp else {}
    try:
        reg = RegularizationParams(
            eps0=float(regs.get("eps0", "1.0")),
            ratio=float(regs.get("ratio", "0.5")),
            steps=int(regs.get("steps", "12")),
        )
    except ValueError as err:
        raise ConfigParseError(f"bad [regularization] value: {err}") from err

    phi = _build_phi(cp, grid, mask, base_dir, p)
    membrane_g = None
    if "two_membrane" in cp:
        membrane_g = parse_field_spec(cp["two_membrane"].get("g", "const 0"),
                                      grid, mask, base_dir)

    return RunConfig(grid=grid, mask=mask, problem=problem, solver=solver,
                     reg=reg, phi=phi, membrane_g=membrane_g,
                     seed=solver.seed, path=str(path))
