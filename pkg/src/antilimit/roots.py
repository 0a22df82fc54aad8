"""Vectorised bracketing and bisection."""

from __future__ import annotations

from typing import Callable

import numpy as np


def bisect(
    f: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    xtol: float = 1e-12,
    maxiter: int = 200,
) -> np.ndarray:
    """Bisect many brackets at once.

    ``f`` maps an array of abscissae to an array of values of the same shape;
    each pair ``(lo[i], hi[i])`` must bracket a sign change (a zero at an end
    point is accepted). ``xtol=0`` runs until the bracket ends are adjacent
    floats.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    if lo.size == 0:
        return lo
    flo = np.asarray(f(lo), dtype=float)
    fhi = np.asarray(f(hi), dtype=float)
    # exact zeros at the ends collapse the bracket
    z = flo == 0
    hi[z] = lo[z]
    z = (fhi == 0) & ~z
    lo[z] = hi[z]
    slo = np.sign(flo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > xtol) & (mid != lo) & (mid != hi)
        if not active.any():
            break
        fm = np.asarray(f(mid), dtype=float)
        sm = np.sign(fm)
        same = (sm == slo) & active
        other = (sm != slo) & (sm != 0) & active
        zero = (sm == 0) & active
        lo[same] = mid[same]
        hi[other] = mid[other]
        lo[zero] = mid[zero]
        hi[zero] = mid[zero]
    return 0.5 * (lo + hi)


def bracket_indices(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Indices ``i`` (along ``axis``) where ``values`` changes sign between
    ``i`` and ``i + 1``, or is exactly zero at ``i``.

    Returns the ``np.nonzero`` tuple of the mask, with the last node checked
    for exact zeros as well.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    s = np.sign(v)
    mask = np.zeros(v.shape, dtype=bool)
    mask[..., :-1] = (s[..., :-1] * s[..., 1:] < 0) | (s[..., :-1] == 0)
    mask[..., -1] = s[..., -1] == 0
    return np.nonzero(np.moveaxis(mask, -1, axis))


def roots_on_grid(
    g: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    n: int = 512,
    xtol: float = 1e-12,
) -> np.ndarray:
    """All sign-change roots of a scalar function on ``[lo, hi]``.

    The interval is sampled at ``n + 1`` points; every bracket is refined by
    bisection. Double roots without a sign change are not found.
    """
    xs = np.linspace(lo, hi, n + 1)
    vs = np.asarray(g(xs), dtype=float)
    (idx,) = bracket_indices(vs)
    if idx.size == 0:
        return idx.astype(float)
    last = idx == n
    a = xs[idx]
    b = np.where(last, xs[idx], xs[np.minimum(idx + 1, n)])
    r = bisect(g, a, b, xtol=xtol)
    # a zero sitting on a node can be reported by two neighbouring brackets
    r = np.unique(r)
    if r.size > 1:
        keep = np.concatenate([[True], np.diff(r) > max(xtol, 1e-15)])
        r = r[keep]
    return r
