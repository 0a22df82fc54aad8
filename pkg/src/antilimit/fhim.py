"""Invariant graphs over rotations, skew-map iteration, Lyapunov exponents
and the lattice gradient flow.

The invariant graph ``K`` solves, for every ``theta`` on the circle,

    eps * Z(theta, K(theta + w), K(theta), K(theta - w)) + V(theta, K(theta)) = 0.

It is discretised on ``N`` equispaced points with ``K(theta +- w)`` obtained
by trigonometric or linear interpolation, and solved by damped Newton.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ContractError, ExistenceViolation, NoConvergenceError
from .model import ModelInstance
from .orbits import OrbitSegment, neighbours, window_residuals, window_terms, zero_branches
from .roots import bisect

DENSE_LIMIT = 2048
INTERPOLATIONS = ("trigonometric", "linear")


# ----------------------------------------------------------------------------
# torus grids
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusGrid:
    N: int
    interpolation: str = "trigonometric"

    def __post_init__(self):
        if self.N < 4 or self.N & (self.N - 1):
            raise ContractError("grid size must be a power of two >= 4")
        if self.interpolation not in INTERPOLATIONS:
            raise ContractError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.interpolation == "trigonometric" and self.N > DENSE_LIMIT:
            raise ContractError(f"trigonometric interpolation is dense; use N <= {DENSE_LIMIT} or 'linear'")

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    def shift_operator(self, s: float):
        """Matrix mapping grid values ``K_i`` to ``K(theta_i + s)``."""
        N = self.N
        if self.interpolation == "trigonometric":
            n = np.arange(N // 2 + 1)
            phase = np.exp(2j * np.pi * n * s)
            phase[-1] = math.cos(math.pi * N * s)  # Nyquist mode kept real
            col = np.fft.irfft(phase, n=N)
            i = np.arange(N)
            return col[(i[:, None] - i[None, :]) % N]
        q, t = divmod(s * N, 1.0)
        q = int(q)
        rows = np.arange(N)
        cols0 = (rows + q) % N
        cols1 = (rows + q + 1) % N
        data = np.concatenate([np.full(N, 1.0 - t), np.full(N, t)])
        return sp.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([cols0, cols1]))), shape=(N, N))

    def evaluate(self, values: np.ndarray, theta) -> np.ndarray:
        """Interpolate grid values at arbitrary points."""
        theta = np.mod(np.asarray(theta, dtype=float), 1.0)
        N = self.N
        if self.interpolation == "trigonometric":
            c = np.fft.rfft(values) / N
            n = np.arange(N // 2 + 1)
            w = np.full(n.size, 2.0)
            w[0] = 1.0
            w[-1] = 1.0
            ang = 2 * np.pi * np.multiply.outer(theta, n)
            return (np.cos(ang) * (w * c.real) - np.sin(ang) * (w * c.imag)).sum(axis=-1)
        x = theta * N
        q = np.floor(x).astype(int)
        t = x - q
        return (1 - t) * values[q % N] + t * values[(q + 1) % N]

    def derivative(self, values: np.ndarray) -> np.ndarray:
        N = self.N
        if self.interpolation == "trigonometric":
            c = np.fft.rfft(values)
            n = np.arange(N // 2 + 1)
            d = 2j * np.pi * n * c
            d[-1] = 0.0
            return np.fft.irfft(d, n=N)
        return (np.roll(values, -1) - np.roll(values, 1)) * (N / 2.0)

    def resample(self, values: np.ndarray, source: "TorusGrid") -> np.ndarray:
        if source.N == self.N and source.interpolation == self.interpolation:
            return np.array(values, dtype=float)
        return source.evaluate(values, self.points)


@dataclass(frozen=True)
class GraphK:
    values: np.ndarray
    grid: TorusGrid
    epsilon: float
    residual_norm: float
    deriv_estimate: float
    newton_iters: int = 0
    lyapunov: tuple[float, float] | None = None

    @property
    def thetas(self) -> np.ndarray:
        return self.grid.points

    def __call__(self, theta):
        return self.grid.evaluate(self.values, theta)

    def to_dict(self) -> dict:
        return {
            "N": self.grid.N,
            "interpolation": self.grid.interpolation,
            "epsilon": self.epsilon,
            "residual_norm": self.residual_norm,
            "deriv_estimate": self.deriv_estimate,
            "newton_iters": self.newton_iters,
            "lyapunov": None if self.lyapunov is None else list(self.lyapunov),
        }

    def csv_rows(self):
        d = self.grid.derivative(self.values)
        return [(float(t), float(k), float(dk)) for t, k, dk in zip(self.thetas, self.values, d)]


def _rotation_omega(m: ModelInstance) -> float:
    b = m.base
    if b.kind != "rotation" or len(b.omega) != 1:
        raise ContractError("invariant graphs need a rotation base of dimension 1")
    if m.mode != "twoD":
        raise ContractError("invariant graphs are defined for twoD models")
    return b.omega[0]


def _operators(grid: TorusGrid, omega: float):
    return grid.shift_operator(omega), grid.shift_operator(-omega)


def graph_residual(m: ModelInstance, grid: TorusGrid, values: np.ndarray, ops=None) -> np.ndarray:
    """Functional residual at the grid points."""
    omega = _rotation_omega(m)
    Sp, Sm = ops if ops is not None else _operators(grid, omega)
    th = grid.points
    return m.epsilon * m.Z(th, Sp @ values, values, Sm @ values) + m.V(th, values)


def _as_values(guess, grid: TorusGrid) -> np.ndarray:
    if isinstance(guess, GraphK):
        return grid.resample(guess.values, guess.grid)
    g = np.asarray(guess, dtype=float)
    if g.ndim == 0:
        return np.full(grid.N, float(g))
    if g.shape != (grid.N,):
        raise ContractError(f"guess must have {grid.N} values")
    return g.copy()


ZERO_BRANCHES = ("lowest", "highest", "nearest")


def zero_guess(m: ModelInstance, grid: TorusGrid, branch: str = "lowest") -> np.ndarray:
    """Per-grid-point zero of ``V(theta, .)`` in I: the decoupled graph.

    ``branch`` picks the lowest, highest or smallest-``|x|`` zero.
    """
    if branch not in ZERO_BRANCHES:
        raise ContractError(f"branch must be one of {ZERO_BRANCHES}")
    thetas = list(grid.points)
    branches = zero_branches(m, thetas)
    empty = [i for i, b in enumerate(branches) if b.size == 0]
    if empty:
        raise ExistenceViolation("V has no zero in I at some grid points", points=empty[:10])
    if branch == "lowest":
        return np.array([b[0] for b in branches])
    if branch == "highest":
        return np.array([b[-1] for b in branches])
    return np.array([min(b, key=lambda x: (abs(x), x)) for b in branches])


def newton_solve_K(
    m: ModelInstance,
    grid: TorusGrid,
    guess,
    tol: float = 1e-10,
    target: float = 1e-13,
    maxiter: int = 50,
    max_halvings: int = 20,
) -> GraphK:
    """Damped Newton for the discretised invariant graph.

    Iterates until the sup-norm residual is below ``target`` or stops
    improving; the result is accepted when it is below ``tol``.

    Raises
    ------
    NoConvergenceError
        On stagnation (less than 10% residual reduction over 5 steps) above
        ``tol``, a non-finite residual, or ``maxiter`` exhausted. The last
        iterate is attached.
    """
    omega = _rotation_omega(m)
    Sp, Sm = _operators(grid, omega)
    th = grid.points
    K = _as_values(guess, grid)
    r = graph_residual(m, grid, K, (Sp, Sm))
    norm = float(np.abs(r).max())
    if not math.isfinite(norm):
        raise ContractError("guess residual is not finite")
    dense = grid.interpolation == "trigonometric"
    history = [norm]
    it = 0
    while it < maxiter and norm > target:
        it += 1
        Kp, Km = Sp @ K, Sm @ K
        da, db, dc = m.Z.gradient(th, Kp, K, Km)
        eps = m.epsilon
        diag = eps * np.broadcast_to(db, K.shape) + m.V.partial(0, th, K)
        a_part = eps * np.broadcast_to(da, K.shape)
        c_part = eps * np.broadcast_to(dc, K.shape)
        try:
            if dense:
                J = np.diag(diag) + a_part[:, None] * Sp + c_part[:, None] * Sm
                step = np.linalg.solve(J, -r)
            else:
                J = sp.diags(diag) + sp.diags(a_part) @ Sp + sp.diags(c_part) @ Sm
                step = spsolve(J.tocsc(), -r)
        except np.linalg.LinAlgError:
            raise NoConvergenceError("singular Jacobian", last_iterate=K, residual=norm, iterations=it) from None
        if not np.all(np.isfinite(step)):
            raise NoConvergenceError("singular Jacobian", last_iterate=K, residual=norm, iterations=it)
        lam = 1.0
        for _ in range(max_halvings + 1):
            K_new = K + lam * step
            r_new = graph_residual(m, grid, K_new, (Sp, Sm))
            n_new = float(np.abs(r_new).max())
            if n_new < norm:
                break
            lam *= 0.5
        else:
            if norm <= tol:
                break
            raise NoConvergenceError("damping failed to reduce the residual", last_iterate=K,
                                     residual=norm, iterations=it)
        K, r, norm = K_new, r_new, n_new
        history.append(norm)
        if len(history) > 5 and history[-1] > 0.9 * history[-6]:
            if norm <= tol:
                break
            raise NoConvergenceError("Newton stagnated", last_iterate=K, residual=norm, iterations=it)
    if norm > tol:
        raise NoConvergenceError("iteration limit reached", last_iterate=K, residual=norm, iterations=it)
    deriv = float(np.abs(grid.derivative(K)).max())
    return GraphK(K, grid, m.epsilon, norm, deriv, it)


# ----------------------------------------------------------------------------
# continuation
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanEntry:
    param: float
    status: str
    residual: float
    deriv_estimate: float
    newton_iters: int
    grid_N: int
    interpolation: str


@dataclass(frozen=True)
class BreakdownScan:
    param_name: str
    entries: tuple[ScanEntry, ...]
    critical: float | None
    threshold: float
    deriv_nondecreasing: bool
    graphs: tuple[GraphK, ...] = field(default_factory=tuple, compare=False)

    def to_dict(self) -> dict:
        return {
            "param_name": self.param_name,
            "critical": self.critical,
            "critical_is_upper_bound": self.critical is not None,
            "threshold": self.threshold,
            "deriv_nondecreasing": self.deriv_nondecreasing,
            "entries": [e.__dict__ for e in self.entries],
        }

    def csv_rows(self):
        return [(e.param, e.residual, e.deriv_estimate, e.newton_iters, e.grid_N, e.status)
                for e in self.entries]


def continue_parameter(
    m: ModelInstance,
    grid: TorusGrid,
    path,
    guess,
    param: str = "gamma",
    threshold: float = 1e4,
    max_N: int = 2 ** 16,
) -> BreakdownScan:
    """Secant-predicted Newton continuation along ``path`` in ``param``.

    A step fails on Newton breakdown or when ``max |dK/dtheta|`` exceeds
    ``threshold``; the grid is then doubled (switching to linear
    interpolation beyond the dense limit) up to ``max_N``. The first
    parameter that still fails is reported as critical: an upper bound for
    the true breakdown value, since finite grids cannot see the blow-up
    itself.
    """
    path = [float(p) for p in path]
    if len(path) > 1:
        d = np.diff(path)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ContractError("continuation path must be strictly monotone")
    entries: list[ScanEntry] = []
    graphs: list[GraphK] = []
    critical = None
    cur_grid = grid
    for p in path:
        mp = m.replace_param(param, p)
        if len(graphs) >= 2:
            g1, g0 = graphs[-1], graphs[-2]
            v1 = cur_grid_values(g1, cur_grid)
            v0 = cur_grid_values(g0, cur_grid)
            p1, p0 = entries[-1].param, entries[-2].param
            pred = v1 + (p - p1) / (p1 - p0) * (v1 - v0)
        elif graphs:
            pred = cur_grid_values(graphs[-1], cur_grid)
        else:
            pred = _as_values(guess, cur_grid)
        attempt_grid = cur_grid
        result = None
        last_fail = None
        while True:
            try:
                g = newton_solve_K(mp, attempt_grid, _resample_values(pred, cur_grid, attempt_grid))
                if g.deriv_estimate <= threshold:
                    result = g
                    break
                last_fail = ("deriv", g.residual_norm, g.deriv_estimate, g.newton_iters)
            except NoConvergenceError as exc:
                last_fail = ("no-convergence", float(exc.diagnostics.get("residual", math.nan)), math.nan,
                             int(exc.diagnostics.get("iterations", 0)))
            if attempt_grid.N * 2 > max_N:
                break
            attempt_grid = _doubled(attempt_grid)
        if result is None:
            kind, res, der, its = last_fail
            entries.append(ScanEntry(p, kind, res, der, its, attempt_grid.N, attempt_grid.interpolation))
            critical = p
            break
        cur_grid = attempt_grid
        graphs.append(result)
        entries.append(ScanEntry(p, "ok", result.residual_norm, result.deriv_estimate, result.newton_iters,
                                 cur_grid.N, cur_grid.interpolation))
    derivs = [e.deriv_estimate for e in entries if e.status == "ok"]
    nondecreasing = bool(np.all(np.diff(derivs) >= 0)) if len(derivs) > 1 else True
    return BreakdownScan(param, tuple(entries), critical, threshold, nondecreasing, tuple(graphs))


@dataclass(frozen=True)
class DerivativeGrowth:
    Ns: tuple[int, ...]
    deriv_estimates: tuple[float, ...]
    exponent: float

    def to_dict(self) -> dict:
        return {"N": list(self.Ns), "deriv_estimate": list(self.deriv_estimates), "exponent": self.exponent}


def derivative_growth(m: ModelInstance, grid: TorusGrid, guess, doublings: int = 3) -> DerivativeGrowth:
    """Solve on ``grid`` and ``doublings`` successively doubled grids and fit
    ``max |dK/dtheta| ~ N^p`` by least squares in log-log.

    ``p`` near zero indicates a resolved smooth graph; sustained positive
    ``p`` is evidence of derivative blow-up, not a proof of it.
    """
    if doublings < 1:
        raise ContractError("need at least one doubling")
    Ns, ds = [], []
    cur, g = grid, guess
    for i in range(doublings + 1):
        g = newton_solve_K(m, cur, g)
        Ns.append(cur.N)
        ds.append(g.deriv_estimate)
        if i < doublings:
            cur = _doubled(cur)
    logs = np.log(np.maximum(ds, np.finfo(float).tiny))
    p = float(np.polyfit(np.log(Ns), logs, 1)[0]) if np.ptp(logs) > 0 else 0.0
    return DerivativeGrowth(tuple(Ns), tuple(float(d) for d in ds), p)


def cur_grid_values(g: GraphK, grid: TorusGrid) -> np.ndarray:
    return grid.resample(g.values, g.grid)


def _resample_values(values: np.ndarray, source: TorusGrid, target: TorusGrid) -> np.ndarray:
    return target.resample(values, source)


def _doubled(grid: TorusGrid) -> TorusGrid:
    N = grid.N * 2
    interp = grid.interpolation if N <= DENSE_LIMIT else "linear"
    return TorusGrid(N, interp)


# ----------------------------------------------------------------------------
# skew map and Lyapunov exponents
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Orbit of the induced skew map: ``x[i]`` is ``x_{i-1}`` (so ``x[0]``
    is ``x_{-1}``); ``thetas[i]`` is ``theta_i``."""

    thetas: tuple
    x: np.ndarray
    truncated: bool
    reason: str | None = None

    @property
    def steps(self) -> int:
        return len(self.x) - 2

    def to_dict(self) -> dict:
        return {"steps": self.steps, "truncated": self.truncated, "reason": self.reason}

    def csv_rows(self):
        return [(k - 1, float(x)) for k, x in enumerate(self.x)]


def _affine_coefficient(m: ModelInstance, theta) -> float | None:
    g = np.linspace(-1.0, 1.0, 5)
    mesh = np.meshgrid(*([g] * m.nargs), indexing="ij")
    d = np.asarray(m.Z.partial(0, theta, *mesh), dtype=float)
    if np.ptp(d) <= 1e-10 and d.flat[0] != 0:
        return float(d.flat[0])
    return None


def iterate_skew(m: ModelInstance, theta0=None, x0: float = 0.0, x_minus1: float = 0.0,
                 steps: int = 1000, bracket: float = 10.0, limit: float = 1e10) -> Trajectory:
    """Iterate ``(theta_k, x_k, x_{k-1}) -> (theta_{k+1}, x_{k+1}, x_k)``.

    The forward value is explicit when ``Z`` is affine in its first
    argument; otherwise it is found by bisection in ``[-bracket, bracket]``.
    Runs stop early (flagged) if ``|x|`` exceeds ``limit`` or no root is
    bracketed.
    """
    if m.mode != "twoD":
        raise ContractError("the skew map is defined for twoD models")
    if m.epsilon == 0:
        raise ContractError("the skew map needs eps != 0")
    if steps < 0:
        raise ContractError("steps must be non-negative")
    base = m.base if theta0 is None else m.base.with_theta0(theta0)
    mm = replace(m, base=base)
    alpha = _affine_coefficient(mm, base.theta(0))
    eps = m.epsilon
    xs = [float(x_minus1), float(x0)]
    thetas = [base.theta(0)]
    truncated, reason = False, None
    for k in range(steps):
        th = thetas[-1]
        b, c = xs[-1], xs[-2]
        if alpha is not None:
            rest = eps * float(mm.coupling(k, th, 0.0, b, c)) + float(mm.potential(th, b))
            a = -rest / (eps * alpha)
        else:
            g = lambda u: eps * np.asarray(mm.coupling(k, th, u, b, c)) + mm.potential(th, b)  # noqa: E731
            lo, hi = float(g(-bracket)), float(g(bracket))
            if not lo * hi <= 0:
                truncated, reason = True, "no root in bracket"
                break
            a = float(bisect(g, [-bracket], [bracket], xtol=0.0)[0])
        if not math.isfinite(a) or abs(a) > limit:
            truncated, reason = True, "diverged"
            break
        xs.append(a)
        thetas.append(base.theta(k + 1))
    return Trajectory(tuple(thetas), np.array(xs), truncated, reason)


@dataclass(frozen=True)
class LyapunovResult:
    exponents: tuple[float, ...]
    steps: int
    mean_log_det: float | None
    warnings: tuple[str, ...] = ()

    @property
    def symplectic_defect(self) -> float | None:
        if len(self.exponents) != 2 or self.mean_log_det is None:
            return None
        return abs(sum(self.exponents) - self.mean_log_det)

    def to_dict(self) -> dict:
        return {
            "exponents": list(self.exponents),
            "steps": self.steps,
            "mean_log_det": self.mean_log_det,
            "sum": float(sum(self.exponents)),
            "warnings": list(self.warnings),
        }


def _cocycle(m: ModelInstance, k, theta, a, b, c) -> np.ndarray:
    za, zb, zc = (float(v) for v in m.coupling_grad(k, theta, a, b, c))
    vy = float(m.potential_dx(theta, b))
    eps = m.epsilon
    return np.array([[-(eps * zb + vy) / (eps * za), -zc / za], [1.0, 0.0]])


def lyapunov_exponents(m: ModelInstance, source, steps: int | None = None, theta0: float = 0.0) -> LyapunovResult:
    """QR Lyapunov exponents of the linearised induced map.

    ``source`` is a :class:`Trajectory` (twoD), a :class:`GraphK` (the orbit
    ``K(theta0 + k w)`` is followed for ``steps`` steps) or, for oneD
    models, a sequence of ``x_k`` values whose scalar multiplier
    ``d x_{k+1} / d x_k`` is averaged.
    """
    notes = []
    if isinstance(source, GraphK):
        if steps is None:
            raise ContractError("steps are required for a graph")
        omega = _rotation_omega(m)
        th = np.mod(theta0 + omega * np.arange(-1, steps + 2), 1.0)
        xs = source(th)
        thetas = list(th[1:])
        x = xs
    elif isinstance(source, Trajectory):
        x = source.x
        thetas = list(source.thetas)
        if source.truncated:
            notes.append(f"trajectory truncated ({source.reason}); exponents over {source.steps} steps")
    else:
        x = np.asarray(source, dtype=float)
        thetas = [m.theta(k) for k in range(len(x))]
    if m.mode == "oneD":
        n = len(x) - 1 if steps is None else min(steps, len(x) - 1)
        if n <= 0:
            raise ContractError("zero-length Jacobian product")
        tot = 0.0
        for k in range(n):
            za, zb = (float(v) for v in m.coupling_grad(k, thetas[k], x[k + 1], x[k]))
            mult = -(m.epsilon * zb + float(m.potential_dx(thetas[k], x[k]))) / (m.epsilon * za)
            tot += math.log(abs(mult))
        return _lyap_result((tot / n,), n, None, notes)
    # x[i] holds x_{i-1}; step k uses (x_{k+1}, x_k, x_{k-1}) = (x[k+2], x[k+1], x[k])
    avail = len(x) - 2
    n = avail if steps is None else min(steps, avail)
    if steps is not None and steps > avail:
        notes.append(f"only {avail} steps available")
    if n <= 0:
        raise ContractError("zero-length Jacobian product")
    Q = np.eye(2)
    logs = np.zeros(2)
    logdet = 0.0
    for k in range(n):
        J = _cocycle(m, k, thetas[k], x[k + 2], x[k + 1], x[k])
        Q, R = np.linalg.qr(J @ Q)
        logs += np.log(np.abs(np.diag(R)))
        logdet += math.log(abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]))
    lam = tuple(sorted((float(v) for v in logs / n), reverse=True))
    return _lyap_result(lam, n, logdet / n, notes)


def _lyap_result(lam, n, logdet, notes) -> LyapunovResult:
    if n < 1000:
        msg = f"only {n} steps; exponents are rough"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return LyapunovResult(lam, n, logdet, tuple(notes))


# ----------------------------------------------------------------------------
# gradient flow
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowResult:
    segment: OrbitSegment
    converged: bool
    time: float
    steps: int
    max_velocity: float

    def to_dict(self) -> dict:
        return {"converged": self.converged, "time": self.time, "steps": self.steps,
                "max_velocity": self.max_velocity, "segment": self.segment.to_dict()}


def gradient_flow(
    m: ModelInstance,
    l: int,
    boundary: tuple[float, float] = (0.0, 0.0),
    t_end: float = 1000.0,
    dt: float = 0.05,
    x_init=None,
    tol: float = 1e-10,
) -> FlowResult:
    """RK4 integration of ``dx_k/dt = eps * Z_k + V_k`` for ``-l <= k <= l``
    with ``x_{l+1} = a`` and ``x_{-l-1} = b`` held fixed.

    For the standard map (``eps * Z`` the unit discrete Laplacian and
    ``V = dW/dx``) this is the gradient flow of the formal Lagrangian.
    Stops when ``max |dx/dt| < tol``; otherwise the partial result is
    returned with ``converged=False``.
    """
    if m.mode != "twoD":
        raise ContractError("the gradient flow is defined for twoD models")
    a, b = (float(v) for v in boundary)
    ks = list(range(-l, l + 1))
    thetas = [m.theta(k) for k in ks]
    n = len(ks)
    if x_init is None:
        x = b + (a - b) * (np.arange(1, n + 1) / (n + 1))
    else:
        x = np.array(x_init, dtype=float)
        if x.shape != (n,):
            raise ContractError(f"x_init needs {n} values")

    def velocity(v):
        A, C = neighbours(v[None, :], a, b)
        r, *_ = window_terms(m, ks, thetas, A, v[None, :], C, derivatives=False)
        return r[0]

    t, steps = 0.0, 0
    vel = velocity(x)
    vmax = float(np.abs(vel).max())
    while vmax >= tol and t < t_end:
        h = min(dt, t_end - t)
        k1 = vel
        k2 = velocity(x + 0.5 * h * k1)
        k3 = velocity(x + 0.5 * h * k2)
        k4 = velocity(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        steps += 1
        t = min(steps * dt, t_end)
        vel = velocity(x)
        vmax = float(np.abs(vel).max())
    res = window_residuals(m, ks, thetas, x, a, b)
    seg = OrbitSegment((-l, l), x, res, tuple(thetas), (a, b), None, "gradient-flow")
    return FlowResult(seg, vmax < tol, t, steps, vmax)
