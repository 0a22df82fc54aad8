"""Batch front door: ``antilimit <subcommand> --config <path>``.

Every subcommand writes its declared outputs plus ``manifest.json`` into the
output directory. Exit codes: 0 success, 1 internal error, 2 configuration
error, 3 numerical diagnostic (JSON on stdout).
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .cantor import certify, fibers_1d, refine_1d, refine_2d
from .errors import AntilimitError, ConfigurationError, ContractError, DiagnosticError
from .fhim import (
    INTERPOLATIONS,
    ZERO_BRANCHES,
    TorusGrid,
    continue_parameter,
    derivative_growth,
    gradient_flow,
    iterate_skew,
    lyapunov_exponents,
    newton_solve_K,
    zero_guess,
)
from .io import dumps, sha256, write_csv, write_json
from .levelset import scan_fiber_1d, scan_fiber_2d
from .model import ModelInstance, model_from_config, verify_conditions
from .orbits import solve_window_2d
from .rotation import construct_rotation_orbit

COMMANDS = (
    "verify", "scan-fiber", "solve-window", "refine", "certify", "rotation-orbit",
    "solve-k", "continue", "iterate", "lyapunov", "gradient-flow", "sweep",
)
FORMATS = ("csv", "json")
EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_DIAGNOSTIC = 0, 1, 2, 3


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "antilimit-out"
    formats: tuple[str, ...] = FORMATS
    overwrite: bool = False


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration.

    ``workers = 0`` means one worker per CPU.
    """

    model: dict
    command: str
    params: dict = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "command": {"name": self.command, "params": self.params},
            "output": {
                "directory": self.output.directory,
                "formats": list(self.output.formats),
                "overwrite": self.output.overwrite,
            },
            "parallelism": {"workers": self.workers},
        }

    @property
    def hash(self) -> str:
        """Hash of everything that affects outputs (not the output block or
        worker count, which must not change results)."""
        core = {"model": self.model, "command": {"name": self.command, "params": self.params},
                "formats": sorted(self.output.formats), "version": __version__}
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def _expect(value, kind, path: str):
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigurationError(f"expected {names}, got {type(value).__name__}", path)
    return value


def parse_config(source: str | Mapping, command: str | None = None) -> RunConfig:
    """Parse a JSON string or mapping into a :class:`RunConfig`.

    ``command`` (the CLI subcommand) fills in or must match
    ``command.name``.

    Raises
    ------
    ConfigurationError
        With the offending key path in the message.
    """
    if isinstance(source, str):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                                     "config") from None
    else:
        data = source
    _expect(data, dict, "config")
    unknown = sorted(set(data) - {"model", "command", "output", "parallelism"})
    if unknown:
        raise ConfigurationError(f"unknown keys {unknown}", "config")
    if "model" not in data:
        raise ConfigurationError("missing key 'model'", "config")
    model = _expect(data["model"], dict, "model")

    cmd = _expect(data.get("command", {}), dict, "command")
    name = cmd.get("name", command)
    if name is None:
        raise ConfigurationError("missing key 'name'", "command")
    _expect(name, str, "command.name")
    if name not in COMMANDS:
        raise ConfigurationError(f"unknown command {name!r}", "command.name")
    if command is not None and name != command:
        raise ConfigurationError(f"config is for {name!r} but {command!r} was invoked", "command.name")
    params = _expect(cmd.get("params", {}), dict, "command.params")
    extra = sorted(set(cmd) - {"name", "params"})
    if extra:
        raise ConfigurationError(f"unknown keys {extra}", "command")

    out = _expect(data.get("output", {}), dict, "output")
    extra = sorted(set(out) - {"directory", "formats", "overwrite"})
    if extra:
        raise ConfigurationError(f"unknown keys {extra}", "output")
    directory = _expect(out.get("directory", OutputConfig.directory), str, "output.directory")
    formats = _expect(out.get("formats", list(FORMATS)), list, "output.formats")
    for i, f in enumerate(formats):
        if f not in FORMATS:
            raise ConfigurationError(f"unknown format {f!r}", f"output.formats[{i}]")
    overwrite = _expect(out.get("overwrite", False), bool, "output.overwrite")

    par = _expect(data.get("parallelism", {}), dict, "parallelism")
    workers = _expect(par.get("workers", 1), int, "parallelism.workers")
    if workers < 0:
        raise ConfigurationError("must be >= 0", "parallelism.workers")
    return RunConfig(model, name, params, OutputConfig(directory, tuple(formats), overwrite), workers)


def resolve_workers(cli_value: int | None, config_value: int) -> int:
    """``--workers`` beats ``ANTILIMIT_WORKERS`` beats the config; 0 is auto."""
    if cli_value is not None:
        n = cli_value
    elif os.environ.get("ANTILIMIT_WORKERS"):
        try:
            n = int(os.environ["ANTILIMIT_WORKERS"])
        except ValueError:
            raise ConfigurationError("not an integer", "ANTILIMIT_WORKERS") from None
    else:
        n = config_value
    if n < 0:
        raise ConfigurationError("must be >= 0", "workers")
    return n if n > 0 else (os.cpu_count() or 1)


class Params:
    """Typed access to ``command.params`` that tracks unused keys."""

    def __init__(self, data: Mapping, path: str = "command.params"):
        self.data = dict(data)
        self.path = path
        self.used: set[str] = set()

    def get(self, key: str, default=None, kind: Callable | None = float, required: bool = False):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise ConfigurationError(f"missing key {key!r}", self.path)
            return default
        value = self.data[key]
        if kind is None or value is None:
            return value
        try:
            if kind is int and (isinstance(value, bool) or float(value) != int(value)):
                raise ValueError
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"invalid value {value!r}", f"{self.path}.{key}") from None

    def finish(self):
        unused = sorted(set(self.data) - self.used)
        if unused:
            raise ConfigurationError(f"unknown keys {unused}", self.path)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


@dataclass
class Outcome:
    """What a subcommand produced: files by name, and a flat summary."""

    json: dict = field(default_factory=dict)
    csv: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _pmap(fn, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _theta_list(m: ModelInstance, p: Params) -> list:
    thetas = p.get("thetas", None, kind=None)
    n = p.get("n_theta", None, kind=int)
    if thetas is not None:
        if not isinstance(thetas, list) or not thetas:
            raise ConfigurationError("expected a non-empty list", "command.params.thetas")
        return thetas
    if n is not None:
        if n < 1:
            raise ConfigurationError("must be >= 1", "command.params.n_theta")
        return m.base.sample_points(n)
    return [m.theta(p.get("k", 0, int))]


def _fiber_task(args):
    m, theta, grid, slices, k = args
    if m.mode == "oneD":
        return scan_fiber_1d(m, theta, grid=grid, k=k)
    return scan_fiber_2d(m, theta, slices=slices, grid=grid, k=k)


def cmd_verify(m: ModelInstance, p: Params, workers: int) -> Outcome:
    rep = verify_conditions(m, grid=p.get("grid", 64, int), eps0=p.get("eps0", None))
    d = rep.to_dict()
    return Outcome(json={"conditions": d}, summary={"passed": rep.passed, "K1": rep.K1, "eps0": m.eps0})


def cmd_scan_fiber(m: ModelInstance, p: Params, workers: int) -> Outcome:
    thetas = _theta_list(m, p)
    grid = p.get("grid", 512 if m.mode == "oneD" else 128, int)
    slices = p.get("slices", 17, int)
    k = p.get("k", 0, int)
    reports = _pmap(_fiber_task, [(m, th, grid, slices, k) for th in thetas], workers)
    counts = [r.count_almost_horizontal for r in reports]
    rows = []
    for i, r in enumerate(reports):
        rows.extend((i, *row) for row in r.polyline_rows())
    out = Outcome(
        json={"fibers": {"fibers": [r.to_dict() for r in reports]}},
        csv={"counts": (["fiber", "theta", "count_almost_horizontal", "n_components", "min_width",
                         "slope_margin"],
                        [(i, float(np.ravel(r.theta)[0]), r.count_almost_horizontal, len(r.components),
                          r.min_projection_width, r.slope_margin) for i, r in enumerate(reports)])},
        summary={"n_theta": len(reports), "min_count": min(counts), "max_count": max(counts),
                 "n_multi": sum(c >= 2 for c in counts),
                 "min_slope_margin": min(r.slope_margin for r in reports)},
    )
    if rows:
        out.csv["polylines"] = (["fiber", "component", "x", "y"], rows)
    for r in reports:
        out.warnings.extend(r.warnings)
    return out


def _solutions_csv(segments):
    rows = []
    for i, seg in enumerate(segments):
        rows.extend((i, *row) for row in seg.csv_rows())
    width = len(rows[0]) - 4 if rows else 1
    theta_cols = ["theta"] if width == 1 else [f"theta{j}" for j in range(width)]
    return (["solution", "k", *theta_cols, "x", "residual"], rows)


def cmd_solve_window(m: ModelInstance, p: Params, workers: int) -> Outcome:
    sol = solve_window_2d(
        m, None, p.get("l", 2, int), p.get("a", 0.0), p.get("b", 0.0),
        itinerary=p.get("itinerary", None, kind=None), max_seeds=p.get("max_seeds", 4096, int),
        strict=p.get("strict", True, bool),
    )
    res = max((s.max_residual for s in sol.segments), default=math.nan)
    return Outcome(json={"solutions": sol.to_dict()}, csv={"solutions": _solutions_csv(sol.segments)},
                   summary={"count": len(sol), "complete": sol.complete, "max_residual": res})


def _tree(m: ModelInstance, p: Params):
    depth = p.get("depth", 8 if m.mode == "oneD" else 3, int)
    itin = p.get("itinerary", None, kind=None)
    if m.mode == "oneD":
        fibers = fibers_1d(m, depth, grid=p.get("grid", 512, int))
        return refine_1d(m, fibers, itinerary=itin)
    return refine_2d(m, itinerary=itin, depth=depth, slices=p.get("slices", 9, int),
                     grid=p.get("grid", 128, int))


def _tree_outcome(tree) -> Outcome:
    return Outcome(json={"tree": tree.to_dict()},
                   csv={"tree": (["depth", "count", "max_diameter"], tree.summary_rows())},
                   summary={"depth": tree.depth, "final_count": tree.counts[-1],
                            "max_diameter": tree.max_diameters()[-1], "nesting": tree.nesting_ok()})


def cmd_refine(m: ModelInstance, p: Params, workers: int) -> Outcome:
    return _tree_outcome(_tree(m, p))


def cmd_certify(m: ModelInstance, p: Params, workers: int) -> Outcome:
    tree = _tree(m, p)
    claim = p.get("delta_claim", None)
    if claim is None:
        claim = tree.slope_margin
    cert = certify(tree, claim, p.get("rho", 1.0))
    out = _tree_outcome(tree)
    out.json["certificate"] = cert.to_dict()
    out.summary.update(passed=cert.passed, delta_claim=claim, box_dimension=cert.box_dim_estimate)
    return out


def cmd_rotation_orbit(m: ModelInstance, p: Params, workers: int) -> Outcome:
    omega = p.get("omega", None, kind=None, required=True)
    orb = construct_rotation_orbit(m, str(omega) if isinstance(omega, str) else float(omega),
                                   p.get("l", 100, int), p.get("a", 0.0), p.get("b", 0.0),
                                   strict=p.get("strict", True, bool))
    return Outcome(json={"rotation": orb.to_dict()},
                   csv={"rotation": (["k", "m", "x", "y", "rho"], orb.csv_rows())},
                   summary={"max_deviation": orb.max_deviation, "forward": orb.forward,
                            "backward": orb.backward, "bound_holds": orb.max_deviation <= 2.0})


def _grid(p: Params) -> TorusGrid:
    interp = p.get("interpolation", "trigonometric", str)
    if interp not in INTERPOLATIONS:
        raise ConfigurationError(f"expected one of {list(INTERPOLATIONS)}", "command.params.interpolation")
    return TorusGrid(p.get("N", 1024, int), interp)


def _guess(m: ModelInstance, p: Params, grid: TorusGrid):
    """A number, a list of grid values or ``"zeros-<branch>"``."""
    guess = p.get("guess", 0.0, kind=None)
    if isinstance(guess, str):
        branch = guess.removeprefix("zeros-")
        if not guess.startswith("zeros-") or branch not in ZERO_BRANCHES:
            raise ConfigurationError(f"expected a number, a list or one of {['zeros-' + b for b in ZERO_BRANCHES]}",
                                     "command.params.guess")
        return zero_guess(m, grid, branch)
    if isinstance(guess, bool) or not isinstance(guess, (int, float, list)):
        raise ConfigurationError("expected a number, a list or a zeros-<branch> string", "command.params.guess")
    return guess


def cmd_solve_k(m: ModelInstance, p: Params, workers: int) -> Outcome:
    grid = _grid(p)
    guess = _guess(m, p, grid)
    g = newton_solve_K(m, grid, guess)
    out = Outcome(json={"graph": g.to_dict()},
                  csv={"graph": (["theta", "K", "dK"], g.csv_rows())},
                  summary={"residual": g.residual_norm, "deriv_estimate": g.deriv_estimate})
    doublings = p.get("doublings", 0, int)
    if doublings > 0:
        growth = derivative_growth(m, grid, g, doublings)
        out.json["graph"]["growth"] = growth.to_dict()
        out.summary["growth_exponent"] = growth.exponent
    return out


def _path(p: Params) -> list[float]:
    path = p.get("path", None, kind=None, required=True)
    if isinstance(path, dict):
        try:
            return np.linspace(float(path["start"]), float(path["stop"]), int(path["num"])).tolist()
        except (KeyError, TypeError, ValueError):
            raise ConfigurationError("expected {start, stop, num}", "command.params.path") from None
    if not isinstance(path, list) or not path:
        raise ConfigurationError("expected a non-empty list", "command.params.path")
    return [float(v) for v in path]


def cmd_continue(m: ModelInstance, p: Params, workers: int) -> Outcome:
    grid = _grid(p)
    path = _path(p)
    param = p.get("param", "gamma", str)
    # a zeros guess belongs to the first point of the path
    guess = _guess(m.replace_param(param, path[0]), p, grid)
    scan = continue_parameter(m, grid, path, guess, param=param,
                              threshold=p.get("threshold", 1e4), max_N=p.get("max_N", 2 ** 16, int))
    return Outcome(json={"scan": scan.to_dict()},
                   csv={"scan": (["param", "residual", "deriv_estimate", "newton_iters", "N", "status"],
                                 scan.csv_rows())},
                   summary={"critical": scan.critical, "deriv_nondecreasing": scan.deriv_nondecreasing})


def _trajectory(m: ModelInstance, p: Params):
    return iterate_skew(m, p.get("theta0", None), p.get("x0", 0.0), p.get("x_minus1", 0.0),
                        p.get("steps", 1000, int))


def cmd_iterate(m: ModelInstance, p: Params, workers: int) -> Outcome:
    tr = _trajectory(m, p)
    out = Outcome(json={"trajectory": tr.to_dict()},
                  csv={"trajectory": (["k", "x"], tr.csv_rows())},
                  summary={"steps": tr.steps, "truncated": tr.truncated})
    if tr.truncated:
        out.warnings.append(f"trajectory truncated: {tr.reason}")
    return out


def cmd_lyapunov(m: ModelInstance, p: Params, workers: int) -> Outcome:
    source = p.get("source", "trajectory", str)
    if source == "trajectory":
        res = lyapunov_exponents(m, _trajectory(m, p))
    elif source == "graph":
        grid = _grid(p)
        g = newton_solve_K(m, grid, _guess(m, p, grid))
        res = lyapunov_exponents(m, g, steps=p.get("steps", 10000, int), theta0=p.get("theta0", 0.0))
    else:
        raise ConfigurationError("expected 'trajectory' or 'graph'", "command.params.source")
    ex = list(res.exponents) + [math.nan] * (2 - len(res.exponents))
    return Outcome(json={"lyapunov": res.to_dict()}, summary={"lambda1": ex[0], "lambda2": ex[1]},
                   warnings=list(res.warnings))


def cmd_gradient_flow(m: ModelInstance, p: Params, workers: int) -> Outcome:
    bnd = p.get("boundary", [0.0, 0.0], kind=None)
    if not (isinstance(bnd, list) and len(bnd) == 2):
        raise ConfigurationError("expected [a, b]", "command.params.boundary")
    fl = gradient_flow(m, p.get("l", 2, int), (float(bnd[0]), float(bnd[1])),
                       t_end=p.get("t_end", 1000.0), dt=p.get("dt", 0.05), tol=p.get("tol", 1e-10))
    out = Outcome(json={"flow": fl.to_dict()}, csv={"flow": _solutions_csv([fl.segment])},
                  summary={"converged": fl.converged, "max_velocity": fl.max_velocity})
    if not fl.converged:
        out.warnings.append("gradient flow did not reach the velocity tolerance")
    return out


HANDLERS: dict[str, Callable[[ModelInstance, Params, int], Outcome]] = {
    "verify": cmd_verify,
    "scan-fiber": cmd_scan_fiber,
    "solve-window": cmd_solve_window,
    "refine": cmd_refine,
    "certify": cmd_certify,
    "rotation-orbit": cmd_rotation_orbit,
    "solve-k": cmd_solve_k,
    "continue": cmd_continue,
    "iterate": cmd_iterate,
    "lyapunov": cmd_lyapunov,
    "gradient-flow": cmd_gradient_flow,
}


def execute(model_block: Mapping, command: str, params: Mapping, workers: int = 1) -> Outcome:
    """Build the model and run one (non-sweep) subcommand in memory."""
    m = model_from_config(model_block)
    p = Params(params)
    out = HANDLERS[command](m, p, workers)
    p.finish()
    return out


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------


def _apply_point(model_block: Mapping, inner_params: Mapping, assignment: Mapping):
    """Place swept values: ``epsilon``/``eps0``/``rescale`` on the model block,
    ``command.<key>`` on the inner params, anything else in ``model.params``."""
    model = json.loads(json.dumps(model_block))
    params = json.loads(json.dumps(inner_params))
    for key, value in assignment.items():
        if key.startswith("command."):
            params[key[len("command."):]] = value
        elif key in ("epsilon", "eps0", "rescale"):
            model[key] = value
        else:
            model.setdefault("params", {})[key] = value
    return model, params


def _sweep_task(args):
    model, command, params = args
    try:
        out = execute(model, command, params, workers=1)
        return "ok", "", out.summary
    except ConfigurationError as exc:
        return "config-error", str(exc), {}
    except AntilimitError as exc:
        return "error", f"{type(exc).__name__}: {exc}", {}
    except Exception as exc:  # noqa: BLE001 - isolation contract: one point never aborts the sweep
        return "error", f"{type(exc).__name__}: {exc}", {}


def cmd_sweep(model_block: Mapping, p: Params, workers: int) -> Outcome:
    grid = p.get("grid", None, kind=None, required=True)
    if not isinstance(grid, dict) or not 1 <= len(grid) <= 2:
        raise ConfigurationError("expected an object with one or two parameters", "command.params.grid")
    names = list(grid)
    values = []
    for n in names:
        v = grid[n]
        if not isinstance(v, list) or not v:
            raise ConfigurationError("expected a non-empty list", f"command.params.grid.{n}")
        values.append(v)
    inner = p.get("inner", None, kind=None, required=True)
    if not isinstance(inner, dict) or inner.get("name") not in HANDLERS:
        raise ConfigurationError(f"expected {{name, params}} with name in {sorted(HANDLERS)}",
                                 "command.params.inner")
    inner_params = inner.get("params", {})
    p.finish()
    index = list(itertools.product(*(range(len(v)) for v in values)))
    tasks = []
    for idx in index:
        assignment = {n: values[j][i] for j, (n, i) in enumerate(zip(names, idx))}
        model, params = _apply_point(model_block, inner_params, assignment)
        tasks.append((model, inner["name"], params))
    results = _pmap(_sweep_task, tasks, workers)
    metrics = sorted({k for _, _, s in results for k in s})
    header = [f"i{j}" for j in range(len(names))] + names + ["status", "error"] + metrics
    rows, records = [], []
    for idx, (status, err, summary) in zip(index, results):
        point = [values[j][i] for j, i in enumerate(idx)]
        rows.append([*idx, *point, status, err, *[summary.get(k) for k in metrics]])
        records.append({"index": list(idx), "point": dict(zip(names, point)), "status": status,
                        "error": err, "summary": summary})
    failed = sum(r[0] != "ok" for r in results)
    warnings = [f"{failed} of {len(results)} sweep points failed"] if failed else []
    return Outcome(json={"sweep": {"parameters": names, "inner": inner["name"], "points": records}},
                   csv={"sweep": (header, rows)},
                   summary={"points": len(results), "failed": failed}, warnings=warnings)


# ----------------------------------------------------------------------------
# run
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    version: str
    config_hash: str
    command: str
    wall_time: float
    timings: dict
    warnings: tuple
    files: tuple  # (name, sha256)
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "toolkit_version": self.version,
            "config_hash": self.config_hash,
            "command": self.command,
            "wall_time": self.wall_time,
            "timings": self.timings,
            "warnings": list(self.warnings),
            "files": [{"path": n, "sha256": h} for n, h in self.files],
        }


def _manifest_hash(out_dir: Path) -> str | None:
    """Config hash recorded in an existing manifest (``None`` if absent or unreadable)."""
    try:
        return json.loads((out_dir / "manifest.json").read_text()).get("config_hash")
    except (OSError, ValueError, AttributeError):
        return None


def _up_to_date(out_dir: Path, cfg: RunConfig) -> RunManifest | None:
    path = out_dir / "manifest.json"
    if not path.is_file():
        return None
    try:
        old = json.loads(path.read_text())
        files = [(f["path"], f["sha256"]) for f in old["files"]]
    except (ValueError, KeyError, TypeError):
        return None
    if old.get("config_hash") != cfg.hash:
        return None
    for name, digest in files:
        fp = out_dir / name
        if not fp.is_file() or sha256(fp) != digest:
            return None
    return RunManifest(old.get("toolkit_version", ""), cfg.hash, cfg.command, old.get("wall_time", 0.0),
                       old.get("timings", {}), tuple(old.get("warnings", ())), tuple(files), skipped=True)


def run(cfg: RunConfig, out_dir: str | Path | None = None, workers: int | None = None) -> RunManifest:
    """Execute one subcommand and write outputs plus ``manifest.json``.

    With ``overwrite`` false, an existing manifest for the same config whose
    files are intact makes this a no-op; a directory holding results of a
    different config is refused.
    """
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    n_workers = resolve_workers(workers, cfg.workers)
    if not cfg.output.overwrite:
        done = _up_to_date(out, cfg)
        if done is not None:
            return done
        if _manifest_hash(out) not in (None, cfg.hash):
            raise ConfigurationError("directory holds results of a different config; set overwrite",
                                     "output.directory")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.command == "sweep":
        result = cmd_sweep(cfg.model, Params(cfg.params), n_workers)
    else:
        result = execute(cfg.model, cfg.command, cfg.params, n_workers)
    timings = {cfg.command: time.perf_counter() - t0}
    t1 = time.perf_counter()
    written = []
    if "json" in cfg.output.formats:
        for name, obj in sorted(result.json.items()):
            written.append(write_json(out / f"{name}.json", obj))
    if "csv" in cfg.output.formats:
        for name, (header, rows) in sorted(result.csv.items()):
            written.append(write_csv(out / f"{name}.csv", header, rows))
    timings["write"] = time.perf_counter() - t1
    files = tuple((p.name, sha256(p)) for p in written)
    manifest = RunManifest(__version__, cfg.hash, cfg.command, time.perf_counter() - t0, timings,
                           tuple(dict.fromkeys(result.warnings)), files)
    write_json(out / "manifest.json", manifest.to_dict())
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="antilimit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("subcommand", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    ap.add_argument("--workers", type=int, default=None, help="worker processes; 0 = one per CPU")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigurationError(str(exc), "--config") from None
        cfg = parse_config(text, args.subcommand)
        manifest = run(cfg, args.out, args.workers)
    except (ConfigurationError, ContractError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiagnosticError as exc:
        sys.stdout.write(dumps(exc.to_dict()))
        return EXIT_DIAGNOSTIC
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    status = "up to date" if manifest.skipped else f"wrote {len(manifest.files)} files"
    print(f"{args.subcommand}: {status}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
