"""Orbits with a prescribed fibered rotation number.

Writing ``y_k = x_k + m_k`` with the floor staircase ``m_k = floor(k * omega)``
turns a periodic system into a k-dependent one on I, whose bounded solutions
lift to orbits with ``|y_k - k * omega| <= 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ContractError, HypothesisViolation
from .model import ModelInstance
from .orbits import OrbitSegment, solve_window_2d, window_residuals, zero_branches


def as_fraction(omega) -> Fraction:
    """Exact value of ``omega``: a ``Fraction``, a ``"p/q"`` string or the
    binary value of a float."""
    if isinstance(omega, Fraction):
        return omega
    if isinstance(omega, str):
        try:
            return Fraction(omega.strip())
        except ValueError:
            raise ContractError(f"cannot parse rotation number {omega!r}") from None
    if isinstance(omega, (int, np.integer)):
        return Fraction(int(omega))
    value = float(omega)
    if not math.isfinite(value):
        raise ContractError("rotation number must be finite")
    return Fraction(value)


@dataclass(frozen=True)
class Staircase:
    omega: Fraction
    window: tuple[int, int]

    def m(self, k: int) -> int:
        return math.floor(k * self.omega)

    def delta(self, k: int) -> int:
        return self.m(k + 1) - self.m(k)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    @property
    def ms(self) -> np.ndarray:
        return np.array([self.m(int(k)) for k in self.ks], dtype=np.int64)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([self.delta(int(k)) for k in self.ks], dtype=np.int64)

    def deviation(self, k: int) -> float:
        """``m_k - k * omega`` (exact, then rounded)."""
        return float(self.m(k) - k * self.omega)

    def site_offsets(self, k: int, nargs: int) -> tuple[float, ...]:
        # periodicity in the diagonal direction reduces the shift by m_k to
        # the neighbouring steps, keeping arguments near I
        if nargs == 2:
            return (float(self.delta(k)), 0.0)
        return (float(self.delta(k)), 0.0, float(-self.delta(k - 1)))


def staircase(omega, window: tuple[int, int]) -> Staircase:
    k0, k1 = int(window[0]), int(window[1])
    if k1 < k0:
        raise ContractError("window must satisfy k_min <= k_max")
    return Staircase(as_fraction(omega), (k0, k1))


@dataclass(frozen=True)
class ShiftHypotheses:
    z_periodic: bool
    v_periodic: bool
    max_abs_z_unit: float
    max_abs_z_double: float
    probe: int

    @property
    def passed(self) -> bool:
        return self.z_periodic and self.v_periodic and self.max_abs_z_double <= 1.0 + 1e-12

    def to_dict(self) -> dict:
        return {
            "z_periodic": self.z_periodic, "v_periodic": self.v_periodic,
            "max_abs_Z_on_I3": self.max_abs_z_unit, "max_abs_Z_on_2I3": self.max_abs_z_double,
            "probe": self.probe, "passed": self.passed,
        }


def check_shift_hypotheses(m: ModelInstance, probe: int = 64, n_theta: int = 4) -> ShiftHypotheses:
    """Probe ``Z(a+1, b+1, c+1) = Z(a, b, c)``, ``V(x+1) = V(x)`` and
    ``|Z| <= 1`` on ``[-2, 2]^3`` (also reporting ``max |Z|`` on I^3)."""
    g2 = np.linspace(-2.0, 2.0, probe)
    g1 = np.linspace(-1.0, 1.0, probe)
    thetas = m.base.sample_points(n_theta)[:n_theta]
    z_per, v_per = True, True
    zmax1, zmax2 = 0.0, 0.0
    for th in thetas:
        big = np.meshgrid(*([g2] * m.nargs), indexing="ij", sparse=False)
        z = np.asarray(m.Z(th, *big))
        z_shift = np.asarray(m.Z(th, *[x + 1.0 for x in big]))
        scale = max(1.0, float(np.abs(z).max()))
        z_per &= bool(np.abs(z_shift - z).max() <= 1e-12 * scale)
        zmax2 = max(zmax2, float(np.abs(z).max()))
        unit = np.meshgrid(*([g1] * m.nargs), indexing="ij")
        zmax1 = max(zmax1, float(np.abs(m.Z(th, *unit)).max()))
        v = np.asarray(m.V(th, g2))
        vs = np.asarray(m.V(th, g2 + 1.0))
        v_per &= bool(np.abs(vs - v).max() <= 1e-12 * max(1.0, float(np.abs(v).max())))
    return ShiftHypotheses(z_per, v_per, zmax1, zmax2, probe)


def shifted_coupling(m: ModelInstance, s: Staircase, probe: int = 64) -> ModelInstance:
    """The system with site coupling ``Z(a + m_{k+1}, b + m_k, c + m_{k-1})``."""
    hyp = check_shift_hypotheses(m, probe)
    if not hyp.passed:
        raise HypothesisViolation("periodicity or coupling bound fails on the probe grid", **hyp.to_dict())
    return replace(m, shift=s)


def coupling_shift_values(m: ModelInstance, s: Staircase, theta=None) -> np.ndarray:
    """``G_k = Zhat_k - Z`` per site of the window, evaluated at the origin
    (the full shift for translation-invariant couplings)."""
    th = m.theta(0) if theta is None else theta
    zero = (0.0,) * m.nargs
    base = float(m.Z(th, *zero))
    return np.array([float(m.Z(th, *s.site_offsets(int(k), m.nargs))) - base for k in s.ks])


@dataclass(frozen=True)
class RotationOrbit:
    omega: Fraction
    segment: OrbitSegment
    ms: np.ndarray
    y: np.ndarray
    deviation: np.ndarray
    forward: float | None
    backward: float | None
    profile: np.ndarray
    backward_profile: np.ndarray
    original_residual: float

    @property
    def ks(self) -> np.ndarray:
        return self.segment.ks

    @property
    def max_deviation(self) -> float:
        return float(np.abs(self.deviation).max())

    def to_dict(self) -> dict:
        return {
            "omega": float(self.omega),
            "omega_exact": str(self.omega),
            "window": list(self.segment.window),
            "forward": self.forward,
            "backward": self.backward,
            "max_deviation": self.max_deviation,
            "bound": 2.0,
            "bound_holds": self.max_deviation <= 2.0,
            "max_residual_shifted": self.segment.max_residual,
            "max_residual_original": self.original_residual,
        }

    def csv_rows(self):
        rows = []
        for i, k in enumerate(self.ks):
            k = int(k)
            if k > 0:
                rho = self.profile[k - 1] if k - 1 < len(self.profile) else math.nan
            elif k < 0:
                rho = self.backward_profile[-k - 1] if -k - 1 < len(self.backward_profile) else math.nan
            else:
                rho = math.nan
            rows.append((k, int(self.ms[i]), float(self.segment.values[i]), float(self.y[i]), float(rho)))
        return rows


def construct_rotation_orbit(
    m: ModelInstance, omega, l: int, a: float = 0.0, b: float = 0.0, strict: bool = True
) -> RotationOrbit:
    """Solve the shifted window ``-l..l`` and lift it by the staircase.

    The window is seeded with the smallest-``|x|`` zero of ``V`` at each
    site (ties go to the smaller value).

    Raises
    ------
    HypothesisViolation
        If the shift hypotheses fail or the lifted orbit leaves the band
        ``|y_k - k omega| <= 2``.
    """
    if m.mode != "twoD":
        raise ContractError("rotation orbits are built on twoD models")
    s = staircase(omega, (-l - 1, l + 1))
    sm = shifted_coupling(m, s)
    ks = list(range(-l, l + 1))
    thetas = [sm.theta(k) for k in ks]
    seed = [min(br, key=lambda x: (abs(x), x)) if br.size else 0.0 for br in zero_branches(sm, thetas)]
    sol = solve_window_2d(sm, None, l, a, b, seeds=np.array([seed]), strict=strict)
    seg = sol.segments[0]
    ms = np.array([s.m(k) for k in ks], dtype=np.int64)
    y = seg.values + ms
    dev = np.array([x + float(s.m(k) - k * s.omega) for x, k in zip(seg.values, ks)])
    if np.abs(dev).max() > 2.0:
        raise HypothesisViolation("lifted orbit leaves |y_k - k omega| <= 2", max_deviation=float(np.abs(dev).max()))
    # residual of the original (unshifted) system along the lifted orbit
    ya, yb = a + s.m(l + 1), b + s.m(-l - 1)
    orig = float(window_residuals(m, ks, thetas, y, ya, yb).max())
    fwd, bwd, prof, bprof = measure_rotation_number(y, origin=l)
    return RotationOrbit(s.omega, seg, ms, y, dev, fwd, bwd, prof, bprof, orig)


def measure_rotation_number(values: Sequence[float], origin: int = 0):
    """Partial rotation numbers of a sequence indexed from ``-origin``.

    Returns ``(forward, backward, profile, backward_profile)`` where
    ``profile[N-1] = (y_N - y_0) / N`` and
    ``backward_profile[N-1] = (y_0 - y_{-N}) / N``. A side with no samples
    gives ``None`` and an empty profile.
    """
    y = np.asarray(values, dtype=float)
    if y.size < 2:
        raise ContractError("need at least two values")
    if not 0 <= origin < y.size:
        raise ContractError("origin must index into the sequence")
    y0 = y[origin]
    fwd_part = y[origin + 1:]
    bwd_part = y[:origin][::-1]
    profile = (fwd_part - y0) / np.arange(1, fwd_part.size + 1)
    bprofile = (y0 - bwd_part) / np.arange(1, bwd_part.size + 1)
    forward = float(profile[-1]) if profile.size else None
    backward = float(bprofile[-1]) if bprofile.size else None
    return forward, backward, profile, bprofile
