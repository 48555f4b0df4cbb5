"""Field and report serialization.

Field files use the NDG1 text format: a magic line, the grid shape, the box
corners, then node values row-major, one per line, at 17 significant digits
(lossless for binary64).  Reports are JSON with a finiteness scan; a report
containing NaN is refused rather than silently written.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import FieldReadError, ReportWriteError
from .grid import BoxGrid, GridFunction

MAGIC = "NDG1"
_FMT = "%.17g"


def write_field(u: GridFunction, path) -> None:
    path = Path(path)
    g = u.grid
    lines = [MAGIC, " ".join(["%d" % g.dim] + ["%d" % k for k in g.n])]
    corners = [_FMT % x for x in (*g.lower, *g.upper)]
    lines.append(" ".join(corners))
    lines.extend(_FMT % v for v in u.values.ravel(order="C"))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as err:
        raise FieldReadError(f"cannot write field to {path}: {err}") from err


def read_field(path, padding_factor: float = 4.0) -> GridFunction:
    """Read an NDG1 field; the padding factor is not stored in the format."""
    path = Path(path)
    try:
        raw = path.read_text().splitlines()
    except OSError as err:
        raise FieldReadError(f"cannot read field from {path}: {err}") from err
    if not raw or raw[0].strip() != MAGIC:
        raise FieldReadError(f"{path}: missing {MAGIC} magic line")
    try:
        header = raw[1].split()
        dim = int(header[0])
        n = tuple(int(x) for x in header[1:])
        corners = [float(x) for x in raw[2].split()]
    except (IndexError, ValueError) as err:
        raise FieldReadError(f"{path}: malformed header: {err}") from err
    if len(n) != dim:
        raise FieldReadError(f"{path}: header promises {dim} axes, lists {len(n)}")
    if len(corners) != 2 * dim:
        raise FieldReadError(f"{path}: expected {2 * dim} box corners, got {len(corners)}")
    lower, upper = tuple(corners[:dim]), tuple(corners[dim:])
    expected = int(np.prod(n))
    body = [ln for ln in raw[3:] if ln.strip()]
    if len(body) != expected:
        raise FieldReadError(
            f"{path}: expected {expected} node values, found {len(body)}"
        )
    try:
        values = np.array([float(x) for x in body]).reshape(n)
    except ValueError as err:
        raise FieldReadError(f"{path}: unparsable node value: {err}") from err
    grid = BoxGrid(dim=dim, lower=lower, upper=upper, n=n,
                   padding_factor=padding_factor)
    return GridFunction(grid, values)


def _scan_finite(obj, path="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _scan_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _scan_finite(v, f"{path}[{i}]")
    elif isinstance(obj, (float, int, np.floating, np.integer)):
        if not math.isfinite(float(obj)):
            raise ReportWriteError(f"non-finite diagnostic at {path}: {obj!r}")


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_report(report: dict, path) -> None:
    """Write a diagnostics dict as JSON, refusing non-finite entries."""
    report = _to_jsonable(report)
    _scan_finite(report)
    path = Path(path)
    try:
        path.write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")
    except OSError as err:
        raise ReportWriteError(f"cannot write report to {path}: {err}") from err


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def config_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(outdir, config_path, seed: int, command: list[str]) -> None:
    """Record everything needed to reproduce the run exactly."""
    from . import __version__

    manifest = {
        "config_sha256": config_digest(config_path),
        "config_path": str(config_path),
        "seed": int(seed),
        "command": list(command),
        "versions": {
            "fractwophase": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    write_report(manifest, Path(outdir) / "manifest.json")
