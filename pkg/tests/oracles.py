"""Independent reference computations.

Nothing here imports the package's numerical modules: every value is either
closed form or produced by a different algorithm (MINPACK root finding,
cubic discriminants, direct polynomial evaluation).
"""

from __future__ import annotations

import itertools
import math
import warnings

import numpy as np
from scipy import optimize


# --- closed forms --------------------------------------------------------------


def linear_level_slope_1d(eps: float) -> float:
    """Slope of the zero line of ``eps (u - 2y)/8 + y`` (``y = -slope * u``)."""
    return eps / (8.0 - 2.0 * eps)


def double_well_band(eps0: float) -> list[tuple[float, float]]:
    """``{x : |x^2 - 1/4| <= eps0}`` for ``eps0 < 1/4``."""
    inner, outer = math.sqrt(0.25 - eps0), math.sqrt(0.25 + eps0)
    return [(-outer, -inner), (inner, outer)]


def double_well_eps0(margin: float) -> float:
    """Band edge ``sqrt(1/4 + eps0) = 1 - margin``."""
    return (1.0 - margin) ** 2 - 0.25


def double_well_graph_1d(eps: float, branch: int, u):
    """Closed-form root ``y`` of ``eps (u - 2y)/8 + y^2 - 1/4 = 0``;
    ``branch`` 0 is the lower root."""
    u = np.asarray(u, dtype=float)
    root = np.sqrt(eps * eps / 64.0 - eps * u / 8.0 + 0.25)
    return eps / 8.0 + (root if branch else -root)


def double_well_tree_1d(eps: float, depth: int) -> list[np.ndarray]:
    """Per-level ``(count, 2)`` interval arrays from composing the closed-form
    graphs on the end points of I (itineraries in lexicographic order)."""
    levels = [np.array([[-1.0, 1.0]])]
    for n in range(1, depth + 1):
        rows = []
        for itin in itertools.product((0, 1), repeat=n):
            v = np.array([-1.0, 1.0])
            for j in reversed(itin):
                v = double_well_graph_1d(eps, j, v)
            rows.append([v.min(), v.max()])
        levels.append(np.array(rows))
    return levels


def linear_lyapunov(eps: float) -> float:
    """Top exponent of the constant cocycle ``[[2 - 8/eps, -1], [1, 0]]``."""
    t = 8.0 / eps - 2.0
    return math.log((t + math.sqrt(t * t - 4.0)) / 2.0)


# --- vs-family -------------------------------------------------------------------


def vs_coefficients(theta: float) -> tuple[float, float]:
    a = 1.1 - 1.2 * math.sin(2.0 * math.pi * (theta + 0.2))
    b = 1.2 + 1.2 * math.cos(math.pi * theta) ** 2
    return a, b


def vs_potential(s: float, theta: float, x: float) -> float:
    a, b = vs_coefficients(theta)
    return (x * x + a) * (x - b) + 2.15 - 0.15 * s


def vs_discriminant(s: float, theta) -> np.ndarray:
    """Discriminant of the monic cubic ``V_s(theta, .)``; positive means
    three distinct real zeros."""
    theta = np.asarray(theta, dtype=float)
    a = 1.1 - 1.2 * np.sin(2.0 * np.pi * (theta + 0.2))
    b = 1.2 + 1.2 * np.cos(np.pi * theta) ** 2
    B, C, D = -b, a, -a * b + 2.15 - 0.15 * s
    return 18 * B * C * D - 4 * B ** 3 * D + B * B * C * C - 4 * C ** 3 - 27 * D * D


def vs_fold_parameter(thetas, iters: int = 60) -> float:
    """Smallest ``s`` in [0, 1] with a folded (three-zero) fiber among
    ``thetas``, by bisection on the discriminant."""
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (vs_discriminant(mid, thetas) > 0).any():
            hi = mid
        else:
            lo = mid
    return hi


# --- window enumeration ------------------------------------------------------------


def double_well_window_residual(x, eps: float, a: float, b: float) -> np.ndarray:
    padded = np.concatenate(([b], x, [a]))
    lap = padded[2:] - 2.0 * padded[1:-1] + padded[:-2]
    return eps * lap / 8.0 + x * x - 0.25


def enumerate_double_well_window(eps: float, l: int, a: float = 0.0, b: float = 0.0) -> np.ndarray:
    """Multistart MINPACK solves from every sign pattern of +-1/2 on the
    ``2l + 1`` sites, polished by dense Newton steps; returns the distinct
    solutions with residual below 1e-10, sorted lexicographically."""
    n = 2 * l + 1
    lap = (np.eye(n, k=1) - 2.0 * np.eye(n) + np.eye(n, k=-1)) * eps / 8.0
    found = []
    for signs in itertools.product((-0.5, 0.5), repeat=n):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = optimize.fsolve(double_well_window_residual, np.array(signs), args=(eps, a, b), xtol=1e-13)
        for _ in range(5):
            sol = sol - np.linalg.solve(lap + np.diag(2.0 * sol), double_well_window_residual(sol, eps, a, b))
        if np.abs(double_well_window_residual(sol, eps, a, b)).max() < 1e-10:
            if not any(np.abs(sol - f).max() < 1e-6 for f in found):
                found.append(sol)
    return np.array(sorted(found, key=tuple))


# --- standard map -------------------------------------------------------------------


def standard_map_window_residual(x, kappa: float, a: float, b: float, rescale=(1.0, 0.25)) -> np.ndarray:
    """``gamma = 0`` standard map residual ``lap x + V(x)`` with the potential
    ``kappa/(2 pi) sin(2 pi p)`` at ``p = (x - beta)/alpha``."""
    alpha, beta = rescale
    padded = np.concatenate(([b], x, [a]))
    lap = padded[2:] - 2.0 * padded[1:-1] + padded[:-2]
    p = (x - beta) / alpha
    return lap + kappa / (2.0 * math.pi) * np.sin(2.0 * math.pi * p)
