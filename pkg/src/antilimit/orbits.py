"""Finite-window solutions of ``eps * Z + V = 0``.

oneD windows are built site by site (the forward neighbour is unique, the
backward one is chosen among the fiber's roots). twoD windows with fixed
boundary values are solved by damped Newton from every combination of
decoupled zeros of ``V``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import BoundaryEscapeError, ContractError, ExistenceViolation, ResolutionError
from .levelset import scan_fiber_1d
from .model import ModelInstance
from .roots import bisect, roots_on_grid

RESIDUAL_TOL = 1e-9
DISTINCT_TOL = 1e-6
ESCAPE_SLACK = 1e-9


@dataclass(frozen=True)
class OrbitSegment:
    """Values ``x_k`` for ``k_min <= k <= k_max``.

    ``residuals[i]`` is ``|f|`` of the equation centred at site ``k_min + i``;
    in oneD windows the last site carries no equation and reports 0.
    ``itinerary`` holds the branch index chosen at each site (``None`` where
    no choice was made).
    """

    window: tuple[int, int]
    values: np.ndarray
    residuals: np.ndarray
    thetas: tuple = ()
    boundary: tuple[float, float] | None = None
    itinerary: tuple | None = None
    method: str = "recursive"

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0

    def __len__(self) -> int:
        return len(self.values)

    def value(self, k: int) -> float:
        return float(self.values[k - self.window[0]])

    def restrict(self, k_min: int, k_max: int) -> np.ndarray:
        return self.values[k_min - self.window[0]: k_max - self.window[0] + 1]

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "values": self.values.tolist(),
            "residuals": self.residuals.tolist(),
            "max_residual": self.max_residual,
            "boundary": None if self.boundary is None else list(self.boundary),
            "itinerary": None if self.itinerary is None else list(self.itinerary),
            "method": self.method,
        }

    def csv_rows(self):
        rows = []
        for k, th, x, r in zip(self.ks, self.thetas, self.values, self.residuals):
            th = np.atleast_1d(np.asarray(th, dtype=float))
            rows.append((int(k), *th.tolist(), float(x), float(r)))
        return rows


@dataclass(frozen=True)
class SolutionSet:
    segments: tuple[OrbitSegment, ...]
    complete: bool
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.segments)

    def values(self) -> np.ndarray:
        return np.array([s.values for s in self.segments])

    def to_dict(self) -> dict:
        return {
            "count": len(self.segments),
            "complete": self.complete,
            "method": "newton",
            "diagnostics": self.diagnostics,
            "solutions": [s.to_dict() for s in self.segments],
        }


# ----------------------------------------------------------------------------
# residuals
# ----------------------------------------------------------------------------


def _scalar_thetas(thetas) -> np.ndarray | None:
    try:
        arr = np.asarray(thetas, dtype=float)
    except (TypeError, ValueError):
        return None
    return arr if arr.ndim == 1 else None


def _site_offsets(m: ModelInstance, ks: Sequence[int]) -> np.ndarray:
    """Per-site argument offsets of the coupling, shape ``(nargs, n)``."""
    if m.shift is None:
        return np.zeros((m.nargs, len(ks)))
    return np.array([m.shift.site_offsets(k, m.nargs) for k in ks], dtype=float).T


def window_terms(m: ModelInstance, ks, thetas, A, B, C, derivatives: bool = True):
    """Residual and its three partials at every site of a twoD window.

    ``A, B, C`` are ``(S, n)`` arrays of ``x_{k+1}, x_k, x_{k-1}`` for ``S``
    candidate windows. Returns ``(r, dr/dA, dr/dB, dr/dC)``.
    """
    eps = m.epsilon
    th = _scalar_thetas(thetas)
    if th is not None:
        off = _site_offsets(m, ks)
        T = np.broadcast_to(th, B.shape)
        args = (A + off[0], B + off[1], C + off[2])
        r = eps * np.asarray(m.Z(T, *args)) + np.asarray(m.V(T, B))
        if not derivatives:
            return r, None, None, None
        dA = eps * np.broadcast_to(m.Z.partial(0, T, *args), B.shape)
        dB = eps * np.broadcast_to(m.Z.partial(1, T, *args), B.shape) + m.V.partial(0, T, B)
        dC = eps * np.broadcast_to(m.Z.partial(2, T, *args), B.shape)
        return r, dA, dB, dC
    r = np.empty(B.shape)
    dA, dB, dC = np.empty(B.shape), np.empty(B.shape), np.empty(B.shape)
    for i, (k, t) in enumerate(zip(ks, thetas)):
        a, b, c = A[:, i], B[:, i], C[:, i]
        r[:, i] = m.f(k, t, a, b, c)
        if derivatives:
            g = m.coupling_grad(k, t, a, b, c)
            dA[:, i] = eps * g[0]
            dB[:, i] = eps * g[1] + m.potential_dx(t, b)
            dC[:, i] = eps * g[2]
    return (r, dA, dB, dC) if derivatives else (r, None, None, None)


def neighbours(X: np.ndarray, a: float, b: float):
    S = X.shape[0]
    A = np.concatenate([X[:, 1:], np.full((S, 1), a)], axis=1)
    C = np.concatenate([np.full((S, 1), b), X[:, :-1]], axis=1)
    return A, C


def window_residuals(m: ModelInstance, ks, thetas, values, a: float, b: float) -> np.ndarray:
    """``|f_k|`` for a twoD window with ``x_{k_max+1} = a`` and ``x_{k_min-1} = b``."""
    X = np.atleast_2d(np.asarray(values, dtype=float))
    A, C = neighbours(X, a, b)
    r, *_ = window_terms(m, ks, thetas, A, X, C, derivatives=False)
    return np.abs(r).reshape(np.shape(values))


def chain_residuals(m: ModelInstance, ks, thetas, values) -> np.ndarray:
    """``|f_k(x_{k+1}, x_k)|`` along a oneD segment; the last site reports 0."""
    out = np.zeros(len(values))
    for i in range(len(values) - 1):
        out[i] = abs(float(m.f(ks[i], thetas[i], values[i + 1], values[i])))
    return out


def segment_residuals(m: ModelInstance, seg: OrbitSegment) -> np.ndarray:
    ks = list(seg.ks)
    thetas = list(seg.thetas) if seg.thetas else [m.theta(k) for k in ks]
    if m.mode == "oneD":
        return chain_residuals(m, ks, thetas, seg.values)
    a, b = seg.boundary
    return window_residuals(m, ks, thetas, seg.values, a, b)


# ----------------------------------------------------------------------------
# oneD root solvers
# ----------------------------------------------------------------------------


def _require_oned(m: ModelInstance):
    if m.mode != "oneD":
        raise ContractError("this solver works on oneD models")


def solve_backward_1d(
    m: ModelInstance,
    theta,
    x_next: float,
    component: int | None = None,
    k: int = 0,
    report=None,
    strict: bool = True,
) -> list[float]:
    """All ``x`` in I with ``eps * Z(theta, x_next, x) + V(theta, x) = 0``.

    With ``component``, only the root on that almost-horizontal component
    (indexed bottom to top) of the fiber report is returned.
    """
    _require_oned(m)
    if strict:
        m.check_coupling()
    if not -1.0 <= x_next <= 1.0:
        raise ContractError(f"x_next = {x_next} is outside I")

    def g(y):
        return m.f(k, theta, np.full(np.shape(y), x_next), y)

    if component is None:
        roots = roots_on_grid(g, -1.0, 1.0, n=512, xtol=0.0)
    else:
        report = report if report is not None else scan_fiber_1d(m, theta, k=k)
        ah = report.almost_horizontal
        if not 0 <= component < len(ah):
            raise ContractError(f"component index {component} out of range (fiber has {len(ah)})")
        lo, hi = ah[component].y_range
        if lo == hi:
            roots = np.array([lo]) if g(np.array(lo)) == 0 else roots_on_grid(g, -1.0, 1.0, 512, 0.0)
            roots = roots[np.abs(roots - lo) <= 1e-12]
        else:
            roots = roots_on_grid(g, lo, hi, n=512, xtol=0.0)
    if roots.size == 0:
        raise ResolutionError(
            "no preimage found in I", theta=np.asarray(theta).tolist(), x_next=x_next, component=component
        )
    return [float(r) for r in roots]


def solve_forward_1d(m: ModelInstance, theta, x_k: float, k: int = 0, offset: float = 0.0) -> float:
    """The unique ``x_{k+1}`` in I with ``f_theta(x_{k+1}, x_k) + offset = 0``.

    Raises :class:`BoundaryEscapeError` unless ``f`` changes sign strictly
    between the walls (a root on the wall counts as an escape).
    """
    _require_oned(m)

    def g(u):
        return m.f(k, theta, u, np.full(np.shape(u), x_k)) + offset

    lo, hi = float(g(np.array(-1.0))), float(g(np.array(1.0)))
    if not lo * hi < 0:
        raise BoundaryEscapeError(
            "no strict sign change across I; the orbit leaves I",
            theta=np.asarray(theta).tolist(), x_k=x_k, f_left=lo, f_right=hi,
        )
    return float(bisect(g, [-1.0], [1.0], xtol=0.0)[0])


def make_segment(m: ModelInstance, k_min: int, values, boundary=None, itinerary=None,
                 method: str = "recursive") -> OrbitSegment:
    """Wrap values into a segment with freshly evaluated residuals."""
    values = np.asarray(values, dtype=float)
    ks = list(range(k_min, k_min + len(values)))
    thetas = tuple(m.theta(k) for k in ks)
    if m.mode == "oneD":
        res = chain_residuals(m, ks, thetas, values)
    else:
        if boundary is None:
            raise ContractError("twoD segments need boundary values (a, b)")
        res = window_residuals(m, ks, thetas, values, *boundary)
    itinerary = None if itinerary is None else tuple(itinerary)
    return OrbitSegment((k_min, k_min + len(values) - 1), values, res, thetas, boundary, itinerary, method)


def extend_segment(
    m: ModelInstance, seg: OrbitSegment, direction: str, component: int | None = None, strict: bool = True
) -> OrbitSegment:
    """Grow a oneD segment by one site.

    Backward steps pick the root on ``component`` or, without one, the root
    of smallest ``|x|``; the choice is appended to the itinerary.
    """
    _require_oned(m)
    k_min, k_max = seg.window
    itin = list(seg.itinerary) if seg.itinerary is not None else [None] * len(seg)
    if direction == "forward":
        if component is not None:
            raise ContractError("forward steps are unique; no component applies")
        x = solve_forward_1d(m, m.theta(k_max), seg.values[-1], k=k_max)
        values = np.append(seg.values, x)
        itin.append(None)
        k_new = k_min
    elif direction == "backward":
        k = k_min - 1
        roots = solve_backward_1d(m, m.theta(k), float(seg.values[0]), component, k=k, strict=strict)
        if component is None:
            choice = min(range(len(roots)), key=lambda i: (abs(roots[i]), roots[i]))
            x, tag = roots[choice], choice
        else:
            x, tag = roots[0], component
        values = np.insert(seg.values, 0, x)
        itin.insert(0, tag)
        k_new = k
    else:
        raise ContractError("direction must be 'forward' or 'backward'")
    out = make_segment(m, k_new, values, itinerary=itin, method="recursive")
    if out.max_residual > RESIDUAL_TOL:
        raise ResolutionError("extension residual above tolerance", residual=out.max_residual)
    return out


# ----------------------------------------------------------------------------
# twoD windows
# ----------------------------------------------------------------------------


def newton_window(
    m: ModelInstance,
    ks,
    thetas,
    a: float,
    b: float,
    seeds: np.ndarray,
    maxiter: int = 100,
    tol: float = 1e-13,
    accept: float = 1e-10,
    max_halvings: int = 30,
):
    """Damped Newton from each row of ``seeds``.

    Returns ``(X, status)`` where ``status`` is ``"converged"``, ``"escaped"``
    (an iterate left ``[-1 - 1e-9, 1 + 1e-9]``) or ``"stalled"`` per seed.
    """
    X = np.array(seeds, dtype=float, copy=True)
    S, n = X.shape
    status = np.array(["running"] * S, dtype=object)

    def evaluate(Xs):
        A, C = neighbours(Xs, a, b)
        return window_terms(m, ks, thetas, A, Xs, C)

    r, dA, dB, dC = evaluate(X)
    norm = np.abs(r).max(axis=1)
    for _ in range(maxiter):
        active = np.flatnonzero(status == "running")
        done = active[norm[active] <= tol]
        status[done] = "converged"
        active = active[norm[active] > tol]
        if active.size == 0:
            break
        steps = np.empty((active.size, n))
        for j, s in enumerate(active):
            ab = np.zeros((3, n))
            ab[0, 1:] = dA[s, :-1]
            ab[1] = dB[s]
            ab[2, :-1] = dC[s, 1:]
            try:
                steps[j] = solve_banded((1, 1), ab, -r[s])
            except (np.linalg.LinAlgError, ValueError):
                steps[j] = np.nan
        lam = np.ones(active.size)
        pending = np.isfinite(steps).all(axis=1)
        stalled = ~pending
        trial_X = X[active].copy()
        for _ in range(max_halvings + 1):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            cand = X[active[idx]] + lam[idx, None] * steps[idx]
            A, C = neighbours(cand, a, b)
            rc, _, _, _ = window_terms(m, ks, thetas, A, cand, C, derivatives=False)
            ok = np.abs(rc).max(axis=1) < norm[active[idx]]
            trial_X[idx[ok]] = cand[ok]
            pending[idx[ok]] = False
            lam[idx[~ok]] *= 0.5
        stalled |= pending
        moved = ~stalled
        X[active[moved]] = trial_X[moved]
        escaped = np.abs(X[active]).max(axis=1) > 1.0 + ESCAPE_SLACK
        for j, s in enumerate(active):
            if escaped[j]:
                status[s] = "escaped"
            elif stalled[j]:
                status[s] = "converged" if norm[s] <= accept else "stalled"
        upd = active[moved & ~escaped]
        if upd.size:
            rr, aa, bb, cc = evaluate(X[upd])
            r[upd], dA[upd], dB[upd], dC[upd] = rr, aa, bb, cc
            norm[upd] = np.abs(rr).max(axis=1)
    running = status == "running"
    status[running & (norm <= accept)] = "converged"
    status[running & (norm > accept)] = "stalled"
    return X, status


def zero_branches(m: ModelInstance, thetas, n: int = 512) -> list[np.ndarray]:
    """Zeros of ``V(theta_k, .)`` in I per site (the eps = 0 solutions)."""
    return [roots_on_grid(lambda x, t=t: m.potential(t, x), -1.0, 1.0, n=n, xtol=0.0) for t in thetas]


def _mixed_radix(index: int, radices: Sequence[int]) -> tuple[int, ...]:
    digits = []
    for r in reversed(radices):
        digits.append(index % r)
        index //= r
    return tuple(reversed(digits))


def solve_window_2d(
    m: ModelInstance,
    theta0=None,
    l: int = 2,
    a: float = 0.0,
    b: float = 0.0,
    seeds: np.ndarray | None = None,
    itinerary: Sequence[int] | None = None,
    max_seeds: int = 4096,
    strict: bool = True,
) -> SolutionSet:
    """Solve ``f_k = 0`` for ``-l <= k <= l`` with ``x_{l+1} = a`` and
    ``x_{-l-1} = b``.

    Seeds are, by default, every combination of per-site zeros of ``V``
    (``complete=True`` when there are at most ``max_seeds`` of them,
    otherwise an evenly strided subset). ``itinerary`` selects one branch
    per site instead; explicit ``seeds`` override both. ``strict`` enforces
    ``|eps| < eps0``.

    Raises
    ------
    ExistenceViolation
        If no seed converges to a solution in I.
    """
    if m.mode != "twoD":
        raise ContractError("solve_window_2d needs a twoD model")
    if strict:
        m.check_coupling()
    if not (-1.0 <= a <= 1.0 and -1.0 <= b <= 1.0):
        raise ContractError("boundary values must lie in I")
    if l < 0:
        raise ContractError("half-window l must be non-negative")
    if theta0 is not None:
        m = replace(m, base=m.base.with_theta0(theta0))
    ks = list(range(-l, l + 1))
    thetas = [m.theta(k) for k in ks]
    n = len(ks)

    itins: list[tuple | None]
    if seeds is not None:
        seed_arr = np.atleast_2d(np.asarray(seeds, dtype=float))
        if seed_arr.shape[1] != n:
            raise ContractError(f"seeds need {n} columns")
        itins = [None] * len(seed_arr)
        complete = False
    else:
        branches = zero_branches(m, thetas)
        empty = [k for k, br in zip(ks, branches) if br.size == 0]
        if empty:
            raise ExistenceViolation("V has no zero in I at some sites", sites=empty)
        radices = [len(br) for br in branches]
        if itinerary is not None:
            itinerary = tuple(int(j) for j in itinerary)
            if len(itinerary) != n or any(not 0 <= j < r for j, r in zip(itinerary, radices)):
                raise ContractError("itinerary must give one valid branch index per site")
            itins = [itinerary]
            complete = False
        else:
            total = math.prod(radices)
            if total <= max_seeds:
                itins = list(itertools.product(*[range(r) for r in radices]))
                complete = True
            else:
                stride = total / max_seeds
                itins = [_mixed_radix(int(i * stride), radices) for i in range(max_seeds)]
                complete = False
        seed_arr = np.array([[br[j] for br, j in zip(branches, it)] for it in itins])

    X, status = newton_window(m, ks, thetas, a, b, seed_arr)
    kept: list[OrbitSegment] = []
    for x, st, it in zip(X, status, itins):
        if st != "converged":
            continue
        x = np.clip(x, -1.0, 1.0)
        if any(np.abs(x - s.values).max() <= DISTINCT_TOL for s in kept):
            continue
        res = window_residuals(m, ks, thetas, x, a, b)
        if res.max() > RESIDUAL_TOL:
            continue
        kept.append(OrbitSegment((-l, l), x, res, tuple(thetas), (float(a), float(b)), it, "newton"))
    diagnostics = {
        "n_seeds": int(len(seed_arr)),
        "converged": int(np.sum(status == "converged")),
        "escaped": int(np.sum(status == "escaped")),
        "stalled": int(np.sum(status == "stalled")),
        "distinct": len(kept),
    }
    if not kept:
        raise ExistenceViolation("no solution found in I for this window", **diagnostics)
    return SolutionSet(tuple(kept), complete, diagnostics)
