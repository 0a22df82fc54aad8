"""Refinement trees of nested sets and finite-depth Cantor certificates.

oneD: a depth-``n`` node is the image of I under the composition of the
chosen almost-horizontal component graphs ``x_i = Y_{j_i}(x_{i+1})`` for
``i = 0..n-1``. Under the slope hypothesis each graph is monotone, so images
of intervals are spanned by the images of their end points.

twoD: a node is the bounding box of ``(x_1, x_0, x_{-1})`` over all window
solutions with sites ``-n..n`` on the chosen sheets and both outer boundary
values free in I.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, HypothesisViolation, ResolutionError
from .levelset import FiberReport, scan_fiber_1d, scan_fiber_2d
from .model import ModelInstance
from .orbits import newton_window, zero_branches
from .roots import bisect

NEST_SLACK = 1e-10
BOUNDARY_SAMPLES = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class Level:
    """Nodes at one depth: boxes ``[lo, hi]`` (shape ``(N, dim)``)."""

    lo: np.ndarray
    hi: np.ndarray
    parent: np.ndarray
    itineraries: tuple[tuple[int, ...], ...]

    @property
    def count(self) -> int:
        return len(self.lo)

    @property
    def diameters(self) -> np.ndarray:
        return (self.hi - self.lo).max(axis=1)


@dataclass(frozen=True)
class RefinementTree:
    levels: tuple[Level, ...]
    branch_counts: tuple[int, ...]
    slope_margin: float
    mode: str = "oneD"
    forward: tuple[Level, ...] | None = None
    backward: tuple[Level, ...] | None = None
    bounding_slack: float = 0.0
    restricted: bool = False

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def counts(self) -> list[int]:
        return [lv.count for lv in self.levels]

    def expected_count(self, n: int) -> int:
        if self.restricted:
            return 1
        if self.mode == "oneD":
            return math.prod(self.branch_counts[:n])
        # branch_counts runs over sites -depth..depth with the centre fixed
        c = len(self.branch_counts) // 2
        return math.prod(self.branch_counts[c - n:c]) * math.prod(self.branch_counts[c + 1:c + 1 + n])

    def max_diameters(self) -> list[float]:
        return [float(lv.diameters.max()) for lv in self.levels]

    def nesting_ok(self, slack: float = NEST_SLACK) -> bool:
        for parent, child in zip(self.levels, self.levels[1:]):
            p_lo, p_hi = parent.lo[child.parent], parent.hi[child.parent]
            if np.any(child.lo < p_lo - slack) or np.any(child.hi > p_hi + slack):
                return False
        return True

    def to_dict(self) -> dict:
        nodes = []
        for d, lv in enumerate(self.levels):
            for i in range(lv.count):
                nodes.append({
                    "depth": d, "id": i, "parent": int(lv.parent[i]),
                    "lo": lv.lo[i].tolist(), "hi": lv.hi[i].tolist(),
                    "diameter": float(lv.diameters[i]),
                    "itinerary": list(lv.itineraries[i]),
                })
        return {
            "mode": self.mode,
            "depth": self.depth,
            "branch_counts": list(self.branch_counts),
            "slope_margin": self.slope_margin,
            "bounding_slack": self.bounding_slack,
            "restricted": self.restricted,
            "counts": self.counts,
            "nodes": nodes,
        }

    def summary_rows(self):
        """``(depth, count, max_diameter)`` rows for log-log plots."""
        return [(d, c, dm) for d, (c, dm) in enumerate(zip(self.counts, self.max_diameters()))]


def _check_fibers(fibers) -> float:
    if not fibers:
        raise ContractError("need at least one fiber")
    for i, r in enumerate(fibers):
        if r.count_almost_horizontal == 0:
            raise HypothesisViolation("fiber has no almost-horizontal component", fiber=i)
        if r.slope_margin <= 0:
            raise HypothesisViolation(
                "slope margin delta <= 0", fiber=i, max_slope=r.max_slope,
            )
    return min(r.slope_margin for r in fibers)


def fibers_1d(m: ModelInstance, depth: int, k0: int = 0, grid: int = 512) -> list[FiberReport]:
    return [scan_fiber_1d(m, m.theta(k0 + i), grid=grid, k=k0 + i) for i in range(depth)]


def _graph_eval(m: ModelInstance, k: int, theta, comp, u: np.ndarray) -> np.ndarray:
    """``y`` with ``f_theta(u, y) = 0`` on one component (vectorised)."""
    y0, y1 = comp.y_range
    u = np.asarray(u, dtype=float)
    if y0 == y1:
        return np.full(u.shape, y0)
    return bisect(lambda y: m.f(k, theta, u, y), np.full(u.shape, y0), np.full(u.shape, y1), xtol=0.0)


def refine_1d(
    m: ModelInstance,
    fibers: list[FiberReport] | None = None,
    itinerary=None,
    depth: int | None = None,
    k0: int = 0,
) -> RefinementTree:
    """Nested intervals obtained by pulling I back through component graphs.

    ``fibers[i]`` is the report of the fiber at site ``k0 + i``; the tree
    depth is ``len(fibers)``. With ``itinerary`` only that branch is followed.
    """
    if m.mode != "oneD":
        raise ContractError("refine_1d needs a oneD model")
    if fibers is None:
        if depth is None:
            raise ContractError("give fibers or depth")
        fibers = fibers_1d(m, depth, k0)
    depth = len(fibers) if depth is None else depth
    if depth > len(fibers):
        raise ContractError("need one fiber per level")
    delta = _check_fibers(fibers[:max(depth, 1)])
    comps = [r.almost_horizontal for r in fibers]
    counts = tuple(len(c) for c in comps[:depth])
    if itinerary is not None:
        itinerary = tuple(int(j) for j in itinerary)
        if len(itinerary) < depth or any(not 0 <= j < c for j, c in zip(itinerary, counts)):
            raise ContractError("itinerary needs one valid component index per level")

    levels = [Level(np.array([[-1.0]]), np.array([[1.0]]), np.array([-1]), ((),))]
    for n in range(1, depth + 1):
        if itinerary is None:
            itins = list(itertools.product(*[range(c) for c in counts[:n]]))
        else:
            itins = [itinerary[:n]]
        idx = np.array(itins, dtype=int).reshape(len(itins), n)
        # images of the end points x_n = -1, 1 through Y_{j_{n-1}}, ..., Y_{j_0}
        vals = np.tile(np.array([-1.0, 1.0]), (len(itins), 1))
        for i in range(n - 1, -1, -1):
            k = k0 + i
            th = fibers[i].theta
            for j, comp in enumerate(comps[i]):
                sel = idx[:, i] == j
                if np.any(sel):
                    vals[sel] = _graph_eval(m, k, th, comp, vals[sel])
        lo = vals.min(axis=1, keepdims=True)
        hi = vals.max(axis=1, keepdims=True)
        if itinerary is None:
            parent = np.arange(len(itins)) // counts[n - 1]
        else:
            parent = np.zeros(1, dtype=int)
        levels.append(Level(lo, hi, parent, tuple(itins)))
    return RefinementTree(tuple(levels), counts, delta, "oneD", restricted=itinerary is not None)


# ----------------------------------------------------------------------------
# twoD
# ----------------------------------------------------------------------------


def _boxes(m, ks, thetas, branches, itins, centre_pos):
    """Bounding boxes of ``(x_1, x_0, x_{-1})`` over free outer boundaries.

    Returns ``(lo, hi, corner_lo, corner_hi)``; the corner boxes use only the
    extreme boundary values and measure the bounding slack.
    """
    seeds = np.array([[br[j] for br, j in zip(branches, it)] for it in itins])
    cols = [c for c in (centre_pos + 1, centre_pos, centre_pos - 1)]
    lo = np.full((len(itins), 3), np.inf)
    hi = np.full((len(itins), 3), -np.inf)
    clo, chi = lo.copy(), hi.copy()
    for a in BOUNDARY_SAMPLES:
        for b in BOUNDARY_SAMPLES:
            X, status = newton_window(m, ks, thetas, a, b, seeds)
            if np.any(status != "converged"):
                bad = int(np.flatnonzero(status != "converged")[0])
                raise ResolutionError(
                    "sheet orbit not found for an itinerary", itinerary=list(itins[bad]),
                    boundary=[a, b], status=str(status[bad]),
                )
            full = np.column_stack([
                X[:, c] if 0 <= c < X.shape[1] else np.full(len(X), a if c >= X.shape[1] else b)
                for c in cols
            ])
            lo, hi = np.minimum(lo, full), np.maximum(hi, full)
            if a != 0.0 and b != 0.0:
                clo, chi = np.minimum(clo, full), np.maximum(chi, full)
    return lo, hi, clo, chi


def refine_2d(
    m: ModelInstance,
    fibers: list[FiberReport] | None = None,
    itinerary=None,
    depth: int = 3,
    central: int = 0,
    slices: int = 9,
    grid: int = 128,
) -> RefinementTree:
    """Regions ``W_n = W_n^+ ∩ W_n^-`` on the central sheet.

    ``fibers`` are twoD reports for sites ``-depth..depth`` (computed when
    omitted). Branch ``j`` at a site is the sheet grown from the ``j``-th zero
    of ``V`` there. ``itinerary`` is a tuple over sites ``-depth..depth``
    (its centre entry is ignored in favour of ``central``).
    """
    if m.mode != "twoD":
        raise ContractError("refine_2d needs a twoD model")
    if depth < 0:
        raise ContractError("depth must be non-negative")
    ks_all = list(range(-depth, depth + 1))
    if fibers is None:
        fibers = [scan_fiber_2d(m, m.theta(k), slices=slices, grid=grid, k=k) for k in ks_all]
    if len(fibers) != len(ks_all):
        raise ContractError(f"need {len(ks_all)} fibers for sites -depth..depth")
    delta = _check_fibers(fibers)
    thetas_all = [m.theta(k) for k in ks_all]
    branches_all = zero_branches(m, thetas_all)
    for k, r, br in zip(ks_all, fibers, branches_all):
        if r.count_almost_horizontal != len(br):
            raise ResolutionError(
                "almost-horizontal sheets do not match the decoupled zeros",
                site=k, sheets=r.count_almost_horizontal, zeros=int(len(br)),
            )
    counts = [len(br) for br in branches_all]
    c = depth
    if not 0 <= central < counts[c]:
        raise ContractError("central sheet index out of range")
    counts_fixed = tuple(1 if i == c else n for i, n in enumerate(counts))
    if itinerary is not None:
        itinerary = tuple(int(j) for j in itinerary)
        if len(itinerary) != len(ks_all):
            raise ContractError("itinerary must cover sites -depth..depth")

    def site_choices(lo_site, hi_site):
        out = []
        for k in range(lo_site, hi_site + 1):
            i = k + depth
            if k == 0:
                out.append([central])
            elif itinerary is not None:
                out.append([itinerary[i]])
            else:
                out.append(range(counts[i]))
        return out

    def build(lo_site, hi_site):
        ks = list(range(lo_site, hi_site + 1))
        idx = [k + depth for k in ks]
        itins = list(itertools.product(*site_choices(lo_site, hi_site)))
        lo, hi, clo, chi = _boxes(
            m, ks, [thetas_all[i] for i in idx], [branches_all[i] for i in idx], itins, ks.index(0)
        )
        slack = float(np.max(np.maximum(clo - lo, hi - chi)))
        return itins, lo, hi, slack

    def parent_index(prev_itins, itins, strip):
        lookup = {it: i for i, it in enumerate(prev_itins)}
        return np.array([lookup[strip(it)] for it in itins], dtype=int)

    root = Level(np.full((1, 3), -1.0), np.full((1, 3), 1.0), np.array([-1]), ((central,),))
    levels, forward, backward = [root], [root], [root]
    slack = 0.0
    prev = {"w": [(central,)], "f": [(central,)], "b": [(central,)]}
    for n in range(1, depth + 1):
        it_f, lo_f, hi_f, s_f = build(0, n)
        it_b, lo_b, hi_b, s_b = build(-n, 0)
        it_w, lo_w, hi_w, s_w = build(-n, n)
        slack = max(slack, s_f, s_b, s_w)
        if n == 1:
            pf, pb, pw = (np.zeros(len(it), dtype=int) for it in (it_f, it_b, it_w))
        else:
            pf = parent_index(prev["f"], it_f, lambda t: t[:-1])
            pb = parent_index(prev["b"], it_b, lambda t: t[1:])
            pw = parent_index(prev["w"], it_w, lambda t: t[1:-1])
        # W_n as the intersection of the one-sided regions: x_1 from W_n^+,
        # x_{-1} from W_n^-, x_0 from the full window
        fwd = {it: i for i, it in enumerate(it_f)}
        bwd = {it: i for i, it in enumerate(it_b)}
        lo_i, hi_i = lo_w.copy(), hi_w.copy()
        for i, it in enumerate(it_w):
            f_i, b_i = fwd[it[n:]], bwd[it[:n + 1]]
            lo_i[i, 0], hi_i[i, 0] = max(lo_f[f_i, 0], lo_w[i, 0]), min(hi_f[f_i, 0], hi_w[i, 0])
            lo_i[i, 2], hi_i[i, 2] = max(lo_b[b_i, 2], lo_w[i, 2]), min(hi_b[b_i, 2], hi_w[i, 2])
        forward.append(Level(lo_f, hi_f, pf, tuple(it_f)))
        backward.append(Level(lo_b, hi_b, pb, tuple(it_b)))
        levels.append(Level(lo_i, hi_i, pw, tuple(it_w)))
        prev = {"w": it_w, "f": it_f, "b": it_b}
    return RefinementTree(
        tuple(levels), counts_fixed, delta, "twoD", tuple(forward), tuple(backward), slack,
        restricted=itinerary is not None,
    )


# ----------------------------------------------------------------------------
# certificate
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class CantorCertificate:
    depth: int
    max_diameter: float
    contraction_bound: float
    min_gap: float
    split_depths: tuple[int, ...]
    box_dim_estimate: float
    fit_residual: float
    clauses: dict
    delta_claim: float
    measured_delta: float
    rho: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "max_diameter": self.max_diameter,
            "contraction_bound": self.contraction_bound,
            "min_gap": self.min_gap,
            "split_depths": list(self.split_depths),
            "box_dim_estimate": self.box_dim_estimate,
            "fit_residual": self.fit_residual,
            "clauses": dict(self.clauses),
            "passed": self.passed,
            "delta_claim": self.delta_claim,
            "measured_delta": self.measured_delta,
            "split_density": self.rho,
            "notes": list(self.notes),
        }


def _sibling_gaps(lo: np.ndarray, hi: np.ndarray) -> float:
    """Smallest separation between sibling boxes (max over coordinates of
    the per-axis gap, minimised over pairs)."""
    best = math.inf
    for i in range(len(lo)):
        for j in range(i + 1, len(lo)):
            sep = np.maximum(lo[j] - hi[i], lo[i] - hi[j]).max()
            best = min(best, float(sep))
    return best


def certify(tree: RefinementTree, delta_claim: float, rho: float = 1.0) -> CantorCertificate:
    """Finite-depth check of the Cantor structure of a refinement tree.

    Clauses: ``diameter`` (max diameter at the final depth at most
    ``2 (1 - delta_claim)^depth``), ``splits`` (at every split level each
    node has at least two children, pairwise separated), ``density`` (splits
    occur on at least ``ceil(rho * depth)`` levels; a finite surrogate for
    infinitely many splits), ``nesting`` and ``count``.
    """
    n = tree.depth
    if n < 3:
        raise ContractError("certification needs depth >= 3")
    max_diam = tree.max_diameters()
    bound = 2.0 * (1.0 - delta_claim) ** n
    split_depths = []
    min_gap = math.inf
    splits_ok = True
    for d in range(n):
        child = tree.levels[d + 1]
        children = [np.flatnonzero(child.parent == p) for p in range(tree.levels[d].count)]
        branching = [len(ch) for ch in children]
        if min(branching) >= 2:
            split_depths.append(d)
            for ch in children:
                g = _sibling_gaps(child.lo[ch], child.hi[ch])
                min_gap = min(min_gap, g)
                if not g > 0:
                    splits_ok = False
    if not split_depths:
        splits_ok = False
    density_ok = len(split_depths) >= math.ceil(rho * n)
    counts_ok = all(tree.counts[d] == tree.expected_count(d) for d in range(n + 1))

    depths = [d for d in range(3, n + 1) if max_diam[d] > 0 and tree.counts[d] > 0]
    dim, resid = math.nan, math.nan
    if len(depths) >= 2:
        xs = np.array([-math.log(max_diam[d]) for d in depths])
        ys = np.array([math.log(tree.counts[d]) for d in depths])
        coef, res, *_ = np.polyfit(xs, ys, 1, full=True)
        dim = float(coef[0])
        resid = float(math.sqrt(res[0] / len(depths))) if len(res) else 0.0
    clauses = {
        "diameter": bool(max_diam[n] <= bound),
        "splits": bool(splits_ok),
        "density": bool(density_ok),
        "nesting": bool(tree.nesting_ok()),
        "count": bool(counts_ok),
    }
    notes = (f"split density surrogate: splits required on ceil({rho} * {n}) levels",)
    return CantorCertificate(
        depth=n, max_diameter=float(max_diam[n]), contraction_bound=bound,
        min_gap=float(min_gap) if split_depths else 0.0, split_depths=tuple(split_depths),
        box_dim_estimate=dim, fit_residual=resid, clauses=clauses, delta_claim=float(delta_claim),
        measured_delta=tree.slope_margin, rho=float(rho), notes=notes,
    )
