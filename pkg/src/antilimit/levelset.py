"""Zero sets of single fibers ``f_theta(u, y) = eps * Z + V(theta, y)``.

In the plane the monotone argument ``u`` (the forward neighbour ``x_{k+1}``,
or the frozen-out neighbour of a 2D slice) enters only through ``eps * Z``
with ``dZ/du != 0``. Every horizontal line therefore meets the zero set at
most once, so each connected component is a graph ``u = X(y)`` over a
closed ``y``-interval. Components are found from the sign of ``f`` on the
left and right walls and traced by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .errors import ContractError, HypothesisViolation, ResolutionError
from .model import ModelInstance, band_intervals
from .roots import bisect, bracket_indices, roots_on_grid

RES_TOL = 1e-10
_EDGE = 1e-12
WALLS = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class PlanarComponent:
    """One connected component of a fiber's zero set in the square.

    ``points`` has columns ``(u, y)`` ordered along the curve.
    """

    points: np.ndarray
    endpoints: tuple[str, str]
    max_abs_slope: float
    is_almost_horizontal: bool
    graph_over_x: bool

    @property
    def y_range(self) -> tuple[float, float]:
        return float(self.points[:, 1].min()), float(self.points[:, 1].max())

    @property
    def u_range(self) -> tuple[float, float]:
        return float(self.points[:, 0].min()), float(self.points[:, 0].max())

    @property
    def width(self) -> float:
        lo, hi = self.y_range
        return hi - lo

    @property
    def y_mid(self) -> float:
        lo, hi = self.y_range
        return 0.5 * (lo + hi)

    def y_at(self, u: float) -> float:
        """Height where the component crosses the vertical line ``u``
        (nearest crossing to the middle of its y-range)."""
        pts = self.points
        d = pts[:, 0] - u
        hits = []
        for i in range(len(pts) - 1):
            if d[i] == 0:
                hits.append(pts[i, 1])
            elif d[i] * d[i + 1] < 0:
                t = d[i] / (d[i] - d[i + 1])
                hits.append(pts[i, 1] + t * (pts[i + 1, 1] - pts[i, 1]))
        if d[-1] == 0:
            hits.append(pts[-1, 1])
        if not hits:
            return math.nan
        mid = self.y_mid
        return float(min(hits, key=lambda y: abs(y - mid)))

    def to_dict(self, with_points: bool = False) -> dict:
        out = {
            "endpoints": list(self.endpoints),
            "max_abs_slope": self.max_abs_slope,
            "is_almost_horizontal": self.is_almost_horizontal,
            "graph_over_x": self.graph_over_x,
            "y_range": list(self.y_range),
            "u_range": list(self.u_range),
            "n_points": int(len(self.points)),
        }
        if with_points:
            out["points"] = self.points.tolist()
        return out


@dataclass(frozen=True)
class SheetComponent:
    """A zero sheet in the cube, sampled by its two natural foliations.

    ``leaves_x`` are the leaves on planes ``z = c`` and ``leaves_z`` those on
    planes ``x = c``; ``None`` marks a slice where the sheet has no leaf.
    """

    leaves_x: tuple[PlanarComponent | None, ...]
    leaves_z: tuple[PlanarComponent | None, ...]
    slice_grid: tuple[float, ...]
    is_almost_horizontal: bool
    max_leaf_slope: float

    def _leaves(self):
        return [c for c in self.leaves_x + self.leaves_z if c is not None]

    @property
    def y_range(self) -> tuple[float, float]:
        leaves = self._leaves()
        return min(c.y_range[0] for c in leaves), max(c.y_range[1] for c in leaves)

    @property
    def u_range(self) -> tuple[float, float]:
        leaves = self._leaves()
        return min(c.u_range[0] for c in leaves), max(c.u_range[1] for c in leaves)

    @property
    def width(self) -> float:
        lo, hi = self.y_range
        return hi - lo

    @property
    def y_mid(self) -> float:
        lo, hi = self.y_range
        return 0.5 * (lo + hi)

    def to_dict(self, with_points: bool = False) -> dict:
        return {
            "is_almost_horizontal": self.is_almost_horizontal,
            "max_leaf_slope": self.max_leaf_slope,
            "y_range": list(self.y_range),
            "slice_grid": list(self.slice_grid),
            "leaves_x": [None if c is None else c.to_dict(with_points) for c in self.leaves_x],
            "leaves_z": [None if c is None else c.to_dict(with_points) for c in self.leaves_z],
        }


@dataclass(frozen=True)
class FiberReport:
    theta: object
    epsilon: float
    components: tuple
    grid: int
    slices: int | None = None
    slice: tuple[str, float] | None = None
    band_counts: tuple[int, ...] | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def almost_horizontal(self) -> list:
        return [c for c in self.components if c.is_almost_horizontal]

    @property
    def count_almost_horizontal(self) -> int:
        return len(self.almost_horizontal)

    @property
    def widths(self) -> list[float]:
        return [c.width for c in self.components]

    @property
    def min_projection_width(self) -> float:
        w = [c.width for c in self.almost_horizontal]
        return min(w) if w else 0.0

    @property
    def max_slope(self) -> float:
        s = [_slope(c) for c in self.almost_horizontal]
        return max(s) if s else math.inf

    @property
    def slope_margin(self) -> float:
        """``delta`` with every almost-horizontal slope at most ``1 - delta``
        (0 when violated or when there is no such component)."""
        return max(0.0, 1.0 - self.max_slope) if self.almost_horizontal else 0.0

    @property
    def covers_x(self) -> bool:
        """Whether the components' projections onto the u-axis cover I."""
        spans = sorted(c.u_range for c in self.components)
        reach = -1.0
        for lo, hi in spans:
            if lo > reach + 1e-9:
                return False
            reach = max(reach, hi)
        return reach >= 1.0 - 1e-9

    def to_dict(self, with_points: bool = False) -> dict:
        th = self.theta
        return {
            "theta": np.asarray(th).tolist(),
            "epsilon": self.epsilon,
            "grid": self.grid,
            "slices": self.slices,
            "slice": None if self.slice is None else list(self.slice),
            "count_almost_horizontal": self.count_almost_horizontal,
            "n_components": len(self.components),
            "widths": self.widths,
            "min_projection_width": self.min_projection_width,
            "slope_margin": self.slope_margin,
            "covers_x": self.covers_x,
            "band_counts": None if self.band_counts is None else list(self.band_counts),
            "warnings": list(self.warnings),
            "components": [c.to_dict(with_points) for c in self.components],
        }

    def polyline_rows(self):
        """Rows ``(component_id, x, y)`` for CSV export (planar reports)."""
        rows = []
        for i, c in enumerate(self.components):
            if isinstance(c, PlanarComponent):
                rows.extend((i, float(u), float(y)) for u, y in c.points)
        return rows


def _slope(c) -> float:
    return c.max_abs_slope if isinstance(c, PlanarComponent) else c.max_leaf_slope


# ----------------------------------------------------------------------------
# planar scan
# ----------------------------------------------------------------------------


def fiber_function(m: ModelInstance, theta, k: int = 0, slice_: tuple[str, float] | None = None):
    """``(F, dF/du)`` for the planar fiber, vectorised in ``(u, y)``."""
    if m.mode == "oneD":
        if slice_ is not None:
            raise ContractError("oneD fibers are already planar; no slice applies")
        return (lambda u, y: m.f(k, theta, u, y),
                lambda u, y: m.epsilon * m.coupling_partial(0, k, theta, u, y))
    if slice_ is None:
        raise ContractError("a twoD fiber needs one argument frozen: slice=('z', c) or ('x', c)")
    axis, c = slice_
    if axis == "z":
        return (lambda u, y: m.f(k, theta, u, y, np.full(np.shape(u), c)),
                lambda u, y: m.epsilon * m.coupling_partial(0, k, theta, u, y, np.full(np.shape(u), c)))
    if axis == "x":
        return (lambda u, y: m.f(k, theta, np.full(np.shape(u), c), y, u),
                lambda u, y: m.epsilon * m.coupling_partial(2, k, theta, np.full(np.shape(u), c), y, u))
    raise ContractError(f"slice axis must be 'x' or 'z', got {axis!r}")


def _polyline_slopes(pts: np.ndarray) -> np.ndarray:
    u, y = pts[:, 0], pts[:, 1]
    n = len(pts)
    if n < 2:
        return np.zeros(n)
    du = np.empty(n)
    dy = np.empty(n)
    du[1:-1] = u[2:] - u[:-2]
    dy[1:-1] = y[2:] - y[:-2]
    du[0], dy[0] = u[1] - u[0], y[1] - y[0]
    du[-1], dy[-1] = u[-1] - u[-2], y[-1] - y[-2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.abs(dy / du)
    s[(du == 0) & (dy == 0)] = 0.0
    s[(du == 0) & (dy != 0)] = math.inf
    return s


def _make_component(pts: np.ndarray, tags: tuple[str, str]) -> PlanarComponent:
    # orient left to right
    if len(pts) > 1 and pts[-1, 0] < pts[0, 0]:
        pts, tags = pts[::-1].copy(), (tags[1], tags[0])
    slopes = _polyline_slopes(pts)
    interior = pts[1:-1]
    touches = bool(
        len(interior)
        and (np.any(np.abs(interior[:, 0]) >= 1.0 - _EDGE) or np.any(np.abs(interior[:, 1]) >= 1.0 - _EDGE))
    )
    du = np.diff(pts[:, 0])
    graph = bool(len(pts) > 1 and (np.all(du > 0) or np.all(du < 0)))
    ah = set(tags) == {"left", "right"} and not touches
    return PlanarComponent(pts, tags, float(slopes.max()) if len(slopes) else 0.0, ah, graph)


def _horizontal_components(m: ModelInstance, theta, grid: int) -> list[PlanarComponent]:
    roots = roots_on_grid(lambda y: m.potential(theta, y), -1.0, 1.0, n=grid, xtol=0.0)
    us = np.linspace(-1.0, 1.0, grid + 1)
    comps = []
    for r in roots:
        pts = np.column_stack([us, np.full_like(us, r)])
        tags = ("left", "right") if abs(r) < 1.0 else ("bottom" if r < 0 else "top",) * 2
        comps.append(_make_component(pts, tags))
    return comps


def _sort_key(c: PlanarComponent):
    y0 = c.y_at(0.0)
    return (c.y_mid if math.isnan(y0) else y0, c.y_mid)


def scan_fiber_1d(
    m: ModelInstance,
    theta,
    grid: int = 512,
    k: int = 0,
    slice: tuple[str, float] | None = None,
    res_tol: float = RES_TOL,
) -> FiberReport:
    """Trace the zero set of one planar fiber.

    Parameters
    ----------
    m : ModelInstance
        ``oneD`` model, or ``twoD`` together with ``slice``.
    theta : base point
    grid : int
        Number of cells per axis of the sampling grid.
    slice : ("z", c) or ("x", c), optional
        Frozen argument of a twoD fiber: ``z = x_{k-1} = c`` (u is ``x_{k+1}``)
        or ``x = x_{k+1} = c`` (u is ``x_{k-1}``).

    Raises
    ------
    HypothesisViolation
        If ``dF/du`` vanishes or changes sign on the grid.
    ResolutionError
        If two components come closer than two grid cells.
    """
    if grid < 8:
        raise ContractError("grid must have at least 8 cells")
    F, dF = fiber_function(m, theta, k, slice)
    warnings: list[str] = []

    if m.epsilon == 0.0:
        comps = _horizontal_components(m, theta, grid)
        return _finish(m, theta, comps, grid, slice, warnings)

    ys = np.linspace(-1.0, 1.0, grid + 1)
    us = ys.copy()
    U, Y = np.meshgrid(us, ys)  # rows: y, columns: u
    D = np.asarray(dF(U, Y), dtype=float)
    if np.any(D == 0) or (D.min() < 0 < D.max()):
        i = int(np.argmin(np.abs(D)))
        raise HypothesisViolation(
            "dF/du vanishes or changes sign; zero set is not transversal",
            theta=np.asarray(theta).tolist(), location=[float(U.flat[i]), float(Y.flat[i])],
            value=float(D.flat[i]),
        )
    sigma = float(np.sign(D.flat[0]))

    def wall(u):
        return lambda y: F(np.full(np.shape(y), u), y)

    def outside(y) -> bool:
        return max(sigma * float(F(-1.0, y)), -sigma * float(F(1.0, y))) > 0

    # a horizontal line y meets the zero set iff sigma*F(-1, y) <= 0 <= sigma*F(1, y);
    # the component y-intervals are therefore cut out by wall roots
    left_roots = roots_on_grid(wall(-1.0), -1.0, 1.0, n=grid, xtol=0.0)
    right_roots = roots_on_grid(wall(1.0), -1.0, 1.0, n=grid, xtol=0.0)
    origin = {-1.0: "bottom", 1.0: "top"}
    for r in right_roots:
        origin[float(r)] = "right"
    for r in left_roots:
        origin[float(r)] = "left"
    breaks = sorted(origin)
    intervals: list[list[float]] = []
    for a, b in zip(breaks, breaks[1:]):
        if outside(0.5 * (a + b)):
            continue
        if intervals and intervals[-1][1] == a:
            intervals[-1][1] = b
        else:
            intervals.append([a, b])
    dy = 2.0 / grid
    for (_, a1), (b0, _) in zip(intervals, intervals[1:]):
        if b0 - a1 < 2 * dy:
            raise ResolutionError(
                "two components closer than two grid cells; refine the grid",
                theta=np.asarray(theta).tolist(), location=[0.5 * (a1 + b0)], gap=b0 - a1, grid=grid,
            )

    def X(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return bisect(lambda u: F(u, y), np.full(y.shape, -1.0), np.full(y.shape, 1.0), xtol=0.0)

    def end_point(y):
        tag = origin[y]
        if tag == "left":
            return -1.0, tag
        if tag == "right":
            return 1.0, tag
        u = float(X(y)[0])
        if u <= -1.0 + _EDGE:
            return u, "left"
        if u >= 1.0 - _EDGE:
            return u, "right"
        return u, tag

    # column crossings, bisected in y
    FG = np.asarray(F(U, Y), dtype=float)
    iy, ju = bracket_indices(FG, axis=0)
    keep = iy < grid
    iy, ju = iy[keep], ju[keep]
    col_u = us[ju]
    col_y = bisect(lambda y: F(col_u, y), ys[iy], ys[iy + 1], xtol=0.0) if iy.size else np.empty(0)

    comps = []
    for y0, y1 in intervals:
        u0, tag0 = end_point(y0)
        u1, tag1 = end_point(y1)
        row_y = ys[(ys > y0) & (ys < y1)]
        pts = [np.array([[u0, y0], [u1, y1]]), np.column_stack([X(row_y), row_y])]
        sel = (col_y > y0) & (col_y < y1)
        if np.any(sel):
            pts.append(np.column_stack([col_u[sel], col_y[sel]]))
        P = np.concatenate(pts)
        P = P[np.lexsort((P[:, 0], P[:, 1]))]
        # drop near-duplicates (row and column samples meeting in a grid node)
        d = np.hypot(np.diff(P[:, 0]), np.diff(P[:, 1]))
        P = P[np.concatenate([[True], d > 1e-9])]
        res = np.abs(np.asarray(F(P[:, 0], P[:, 1])))
        bad = res > res_tol
        bad[0] = bad[-1] = False
        if np.any(bad):
            warnings.append(f"dropped {int(bad.sum())} polyline points with |f| > {res_tol:g}")
            P = P[~bad]
        comps.append(_make_component(P, (tag0, tag1)))
    return _finish(m, theta, comps, grid, slice, warnings)


def _finish(m, theta, comps, grid, slice_, warnings) -> FiberReport:
    comps = sorted(comps, key=_sort_key)
    band_counts = None
    if m.eps0 is not None and m.epsilon != 0:
        bands = band_intervals(m, theta, m.eps0)
        band_counts = tuple(
            sum(1 for c in comps if c.is_almost_horizontal and lo <= c.y_mid <= hi) for lo, hi in bands
        )
    report = FiberReport(theta, m.epsilon, tuple(comps), grid, None, slice_, band_counts, tuple(warnings))
    if m.epsilon != 0 and report.count_almost_horizontal == 0:
        warnings.append("no almost-horizontal component found; conditions fail or grid too coarse")
        report = FiberReport(theta, m.epsilon, tuple(comps), grid, None, slice_, band_counts, tuple(warnings))
    return report


# ----------------------------------------------------------------------------
# sheets
# ----------------------------------------------------------------------------


def _overlap(a: PlanarComponent, b: PlanarComponent) -> float:
    (a0, a1), (b0, b1) = a.y_range, b.y_range
    return min(a1, b1) - max(a0, b0)


def _chain_leaves(per_slice: list[list[PlanarComponent]], spacing: float, theta) -> list[list]:
    """Link leaves on consecutive slices by largest y-overlap (ties: closer
    midpoints). Returns chains as per-slice lists with ``None`` gaps."""
    n = len(per_slice)
    chains: list[list] = [[c] + [None] * (n - 1) for c in per_slice[0]]
    open_ids = list(range(len(chains)))
    for s in range(1, n):
        cur = per_slice[s]
        pairs = []
        for ci in open_ids:
            prev = chains[ci][s - 1]
            for j, c in enumerate(cur):
                ov = _overlap(prev, c)
                if ov >= 0:
                    pairs.append((-ov, abs(prev.y_mid - c.y_mid), ci, j))
        pairs.sort()
        used_c, used_j = set(), set()
        for _, _, ci, j in pairs:
            if ci in used_c or j in used_j:
                continue
            used_c.add(ci)
            used_j.add(j)
            prev, c = chains[ci][s - 1], cur[j]
            h = max(directed_hausdorff(prev.points, c.points)[0], directed_hausdorff(c.points, prev.points)[0])
            if h >= 10 * spacing:
                raise ResolutionError(
                    "adjacent leaves do not connect continuously; add slices",
                    theta=np.asarray(theta).tolist(), slice_index=s, hausdorff=h, spacing=spacing,
                )
            chains[ci][s] = c
        new_ids = []
        for j, c in enumerate(cur):
            if j not in used_j:
                chains.append([None] * s + [c] + [None] * (n - 1 - s))
                new_ids.append(len(chains) - 1)
        open_ids = sorted(used_c) + new_ids
    return chains


def _chain_range(chain) -> tuple[float, float]:
    leaves = [c for c in chain if c is not None]
    return min(c.y_range[0] for c in leaves), max(c.y_range[1] for c in leaves)


def scan_fiber_2d(
    m: ModelInstance, theta, slices: int = 17, grid: int = 256, k: int = 0
) -> FiberReport:
    """Sample both natural foliations of a twoD fiber and assemble sheets.

    A sheet is almost horizontal when every sampled leaf of both families is
    almost horizontal in its slice square. Certification is at the sampled
    slice resolution only; ``slices`` is recorded on the report.
    """
    if m.mode != "twoD":
        raise ContractError("scan_fiber_2d needs a twoD model")
    if m.epsilon == 0.0:
        raise ContractError("scan_fiber_2d needs eps != 0 (transversality)")
    if slices < 9:
        raise ContractError("need at least 9 slices")
    consts = np.linspace(-1.0, 1.0, slices)
    spacing = float(consts[1] - consts[0])
    fam_x = [scan_fiber_1d(m, theta, grid, k, ("z", float(c))) for c in consts]
    fam_z = [scan_fiber_1d(m, theta, grid, k, ("x", float(c))) for c in consts]
    warnings = [w for r in fam_x + fam_z for w in r.warnings]
    chains_x = _chain_leaves([list(r.components) for r in fam_x], spacing, theta)
    chains_z = _chain_leaves([list(r.components) for r in fam_z], spacing, theta)

    # pair each x-family chain with the z-family chain of largest y-overlap
    sheets = []
    free_z = list(range(len(chains_z)))
    for cx in chains_x:
        rx = _chain_range(cx)
        best, best_key = None, None
        for zi in free_z:
            rz = _chain_range(chains_z[zi])
            ov = min(rx[1], rz[1]) - max(rx[0], rz[0])
            if ov < 0:
                continue
            key = (-ov, abs(0.5 * (rx[0] + rx[1]) - 0.5 * (rz[0] + rz[1])))
            if best_key is None or key < best_key:
                best, best_key = zi, key
        cz = [None] * slices
        if best is not None:
            free_z.remove(best)
            cz = chains_z[best]
        sheets.append(_sheet(cx, cz, consts))
    for zi in free_z:
        sheets.append(_sheet([None] * slices, chains_z[zi], consts))
    sheets.sort(key=lambda s: s.y_mid)
    report = FiberReport(theta, m.epsilon, tuple(sheets), grid, slices, None, None, tuple(warnings))
    if report.count_almost_horizontal == 0:
        warnings.append("no almost-horizontal sheet found; conditions fail or sampling too coarse")
        report = FiberReport(theta, m.epsilon, tuple(sheets), grid, slices, None, None, tuple(warnings))
    return report


def _sheet(cx, cz, consts) -> SheetComponent:
    leaves = [c for c in list(cx) + list(cz) if c is not None]
    ah = all(c is not None and c.is_almost_horizontal for c in list(cx) + list(cz))
    slope = max(c.max_abs_slope for c in leaves)
    return SheetComponent(tuple(cx), tuple(cz), tuple(float(c) for c in consts), ah, slope)


# ----------------------------------------------------------------------------
# projection-width bound
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    K1: float
    K2: tuple[float, ...]
    bounds: tuple[float, ...]
    widths: tuple[float, ...]
    passed: tuple[bool, ...]
    rel_slack: float

    @property
    def all_passed(self) -> bool:
        return bool(self.passed) and all(self.passed)

    def to_dict(self) -> dict:
        return {
            "K1": self.K1, "K2": list(self.K2), "bounds": list(self.bounds),
            "widths": list(self.widths), "passed": list(self.passed),
            "all_passed": self.all_passed, "rel_slack": self.rel_slack,
        }


def check_projection_bound(
    report: FiberReport, m: ModelInstance, conditions=None, samples: int = 65, rel_slack: float = 1e-9
) -> BoundCheck:
    """Compare each almost-horizontal component's y-extent with ``2 K1 / K2``.

    ``K1`` bounds ``|dZ/dx|`` from below and ``K2`` bounds
    ``|dZ/dy + dV/dy / eps|`` from above on the component's bounding box.
    ``K1`` comes from ``conditions`` (a ConditionReport) when given, else from
    the bounding box. Comparison allows a relative slack of ``rel_slack`` for
    the exactly-tight linear case.
    """
    comps = report.almost_horizontal
    theta, eps = report.theta, report.epsilon
    K2s, bounds, widths, passed = [], [], [], []
    K1_all = math.inf
    for c in comps:
        ylo, yhi = c.y_range
        ys = np.linspace(ylo, yhi, samples)
        us = np.linspace(-1.0, 1.0, samples)
        if m.mode == "oneD":
            A, B = np.meshgrid(us, ys, indexing="ij")
            args = (A, B)
        else:
            A, B, C = np.meshgrid(us, ys, us, indexing="ij")
            args = (A, B, C)
        dzx = np.abs(m.Z.partial(0, theta, *args))
        K1 = float(conditions.K1) if conditions is not None else float(dzx.min())
        K1_all = min(K1_all, K1)
        if eps == 0:
            K2 = math.inf
        else:
            K2 = float(np.abs(m.Z.partial(1, theta, *args) + m.potential_dx(theta, B) / eps).max())
        bound = 2.0 * K1 / K2
        w = c.width
        K2s.append(K2)
        bounds.append(bound)
        widths.append(w)
        passed.append(bool(w > 0 and w >= bound * (1.0 - rel_slack)))
    return BoundCheck(K1_all if comps else math.nan, tuple(K2s), tuple(bounds), tuple(widths),
                      tuple(passed), rel_slack)
