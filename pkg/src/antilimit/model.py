"""Lattice systems ``eps * Z(theta_k, x_{k+1}, x_k, x_{k-1}) + V(theta_k, x_k) = 0``.

A :class:`ModelInstance` bundles the coupling ``Z``, the potential ``V``, the
base dynamics ``k -> theta_k`` and the coupling strength. All analysis happens
in the square/cube over ``I = [-1, 1]``; fields defined on a larger physical
range carry an affine rescale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import partial
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DegeneratePotentialError
from .roots import bisect

TWO_PI = 2.0 * math.pi
GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0
MODES = ("oneD", "twoD")


# ----------------------------------------------------------------------------
# base dynamics
# ----------------------------------------------------------------------------


def _frac_part(t: Fraction) -> float:
    r = float(t - math.floor(t))
    return 0.0 if r >= 1.0 else r


@dataclass(frozen=True)
class BaseDynamics:
    """The driving sequence ``theta_k``.

    ``rotation`` evaluates ``theta_0 + k*omega (mod 1)`` in exact rational
    arithmetic on the binary values of ``theta_0`` and ``omega``, so
    ``theta(k)`` is the correctly rounded result for every ``k``.
    """

    kind: str
    omega: tuple[float, ...] = ()
    theta0: tuple[float, ...] = (0.0,)
    values: tuple[Any, ...] = ()
    offset: int = 0

    def __post_init__(self):
        if self.kind not in ("rotation", "fixed-point", "explicit-sequence"):
            raise ConfigurationError(f"unknown base dynamics kind {self.kind!r}", "base.kind")
        if self.kind == "rotation" and len(self.omega) != len(self.theta0):
            raise ConfigurationError("omega and theta0 must have the same dimension", "base")

    @classmethod
    def rotation(cls, omega, theta0=None) -> "BaseDynamics":
        items = omega if isinstance(omega, (list, tuple, np.ndarray)) else [omega]
        om = tuple(float(Fraction(w.strip())) if isinstance(w, str) else float(w) for w in items)
        th = (0.0,) * len(om) if theta0 is None else tuple(float(t) for t in np.atleast_1d(theta0))
        return cls("rotation", omega=om, theta0=th)

    @classmethod
    def fixed_point(cls, theta=0.0) -> "BaseDynamics":
        return cls("fixed-point", theta0=tuple(float(t) for t in np.atleast_1d(theta)))

    @classmethod
    def explicit(cls, values: Sequence, offset: int = 0) -> "BaseDynamics":
        return cls("explicit-sequence", values=tuple(values), offset=int(offset))

    @property
    def dim(self) -> int:
        if self.kind == "explicit-sequence":
            return int(np.size(self.values[0])) if self.values else 1
        return len(self.theta0)

    def _squeeze(self, th: Sequence[float]):
        return th[0] if len(th) == 1 else np.array(th)

    def theta(self, k: int):
        k = int(k)
        if self.kind == "fixed-point":
            return self._squeeze(self.theta0)
        if self.kind == "rotation":
            th = [
                _frac_part(Fraction(t0) + k * Fraction(w))
                for t0, w in zip(self.theta0, self.omega)
            ]
            return self._squeeze(th)
        i = k - self.offset
        if not 0 <= i < len(self.values):
            raise ContractError(
                f"theta_{k} requested outside the stored window "
                f"[{self.offset}, {self.offset + len(self.values) - 1}]"
            )
        return self.values[i]

    def thetas(self, ks: Sequence[int]) -> list:
        return [self.theta(k) for k in ks]

    def step(self, theta):
        """One application of ``h``."""
        if self.kind == "fixed-point":
            return theta
        if self.kind == "rotation":
            t = np.mod(np.asarray(theta, dtype=float) + np.array(self.omega), 1.0)
            return float(t.item()) if t.size == 1 else t
        raise ContractError("explicit sequences have no map h; use theta(k)")

    def with_theta0(self, theta0) -> "BaseDynamics":
        if self.kind == "rotation":
            return replace(self, theta0=tuple(float(t) for t in np.atleast_1d(theta0)))
        if self.kind == "fixed-point":
            return replace(self, theta0=tuple(float(t) for t in np.atleast_1d(theta0)))
        raise ContractError("explicit sequences cannot be re-anchored")

    def continued_fraction(self, terms: int = 12) -> list[int]:
        """Partial quotients of ``omega`` (d = 1 rotations only)."""
        if self.kind != "rotation" or len(self.omega) != 1:
            raise ContractError("continued fractions are reported for one-dimensional rotations")
        x = Fraction(self.omega[0])
        out = []
        for _ in range(terms):
            a = math.floor(x)
            out.append(int(a))
            x -= a
            if x == 0:
                break
            x = 1 / x
        return out

    def sample_points(self, n: int) -> list:
        """Base points used by grid-sampled checks."""
        if self.kind == "fixed-point":
            return [self.theta(0)]
        if self.kind == "explicit-sequence":
            return list(self.values)
        if self.dim == 1:
            return list(np.arange(n) / n)
        # tori of dimension > 1: sample along the orbit
        return [self.theta(k) for k in range(n)]

    def to_dict(self) -> dict:
        if self.kind == "rotation":
            return {"kind": "rotation", "omega": list(self.omega), "theta0": list(self.theta0)}
        if self.kind == "fixed-point":
            return {"kind": "fixed-point", "theta": list(self.theta0)}
        return {"kind": "explicit-sequence", "values": [np.asarray(v).tolist() for v in self.values],
                "offset": self.offset}

    @classmethod
    def from_dict(cls, d: Mapping, path: str = "base") -> "BaseDynamics":
        kind = d.get("kind")
        try:
            if kind == "rotation":
                return cls.rotation(d["omega"], d.get("theta0"))
            if kind == "fixed-point":
                return cls.fixed_point(d.get("theta", 0.0))
            if kind == "explicit-sequence":
                return cls.explicit(d["values"], d.get("offset", 0))
        except KeyError as exc:
            raise ConfigurationError(f"missing key {exc.args[0]!r}", path) from None
        raise ConfigurationError(f"unknown kind {kind!r}", f"{path}.kind")


# ----------------------------------------------------------------------------
# scalar fields
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """A field ``g(theta, *args)`` evaluated in rescaled coordinates.

    ``func`` and ``partials`` work in physical coordinates ``p``; the field is
    exposed in analysis coordinates ``u = alpha * p + beta``. Missing partials
    fall back to central differences with step ``step`` in ``u``.
    """

    func: Callable[..., Any]
    arity: int
    partials: tuple[Callable[..., Any], ...] | None = None
    step: float = 1e-6
    rescale: tuple[float, float] = (1.0, 0.0)
    label: str = ""

    def __post_init__(self):
        if self.rescale[0] == 0:
            raise ConfigurationError("rescale alpha must be non-zero", "rescale")
        if self.partials is not None and len(self.partials) != self.arity:
            raise ConfigurationError(f"{self.label or 'field'}: need one partial per argument")

    def _physical(self, args):
        alpha, beta = self.rescale
        if alpha == 1.0 and beta == 0.0:
            return [np.asarray(a, dtype=float) for a in args]
        return [(np.asarray(a, dtype=float) - beta) / alpha for a in args]

    def __call__(self, theta, *args):
        if len(args) != self.arity:
            raise ContractError(f"{self.label or 'field'} takes {self.arity} arguments, got {len(args)}")
        return self.func(theta, *self._physical(args))

    @property
    def has_partials(self) -> bool:
        return self.partials is not None

    def partial(self, i: int, theta, *args):
        if self.partials is not None:
            return np.asarray(self.partials[i](theta, *self._physical(args))) / self.rescale[0]
        return self.fd_partial(i, theta, *args)

    def fd_partial(self, i: int, theta, *args):
        h = self.step
        up = list(args)
        dn = list(args)
        up[i] = np.asarray(args[i], dtype=float) + h
        dn[i] = np.asarray(args[i], dtype=float) - h
        return (np.asarray(self(theta, *up)) - np.asarray(self(theta, *dn))) / (2 * h)

    def gradient(self, theta, *args) -> tuple:
        return tuple(self.partial(i, theta, *args) for i in range(self.arity))


# built-in field functions live at module level so instances pickle


def _full(value, *arrays):
    shape = np.broadcast(*arrays).shape
    return np.full(shape, value, dtype=float)


def _laplacian(theta, a, b, c, scale):
    return scale * (a - 2.0 * b + c)


def _laplacian_d(theta, a, b, c, scale, weight):
    return _full(weight * scale, a, b, c)


def _laplacian_1d(theta, a, b, scale):
    return scale * (a - 2.0 * b)


def _laplacian_1d_d(theta, a, b, scale, weight):
    return _full(weight * scale, a, b)


def _v_linear(theta, x):
    return np.asarray(x, dtype=float) * 1.0


def _v_linear_d(theta, x):
    return _full(1.0, x)


def _v_double_well(theta, x):
    return x * x - 0.25


def _v_double_well_d(theta, x):
    return 2.0 * x


def _v_standard(theta, x, gamma, kappa):
    return gamma * np.sin(TWO_PI * np.asarray(theta)) + kappa / TWO_PI * np.sin(TWO_PI * x)


def _v_standard_d(theta, x, gamma, kappa):
    return kappa * np.cos(TWO_PI * x) + 0.0 * np.asarray(theta)


def _w_standard(theta, x, gamma, kappa):
    return gamma * x * np.sin(TWO_PI * np.asarray(theta)) - kappa / TWO_PI**2 * np.cos(TWO_PI * x)


def _w_standard_d(theta, x, gamma, kappa):
    return _v_standard(theta, x, gamma, kappa)


def vs_a(theta):
    return 1.1 - 1.2 * np.sin(TWO_PI * (np.asarray(theta) + 0.2))


def vs_b(theta):
    return 1.2 + 1.2 * np.cos(math.pi * np.asarray(theta)) ** 2


def _v_vs(theta, x, s):
    return (x * x + vs_a(theta)) * (x - vs_b(theta)) + 2.15 - 0.15 * s


def _v_vs_d(theta, x, s):
    b = vs_b(theta)
    return 3.0 * x * x - 2.0 * b * x + vs_a(theta)


@dataclass(frozen=True)
class TermField:
    """Sum of ``c * prod(x_i**p_i) * trig(2*pi*(q*theta + phi))`` terms.

    This is the only form of user-supplied field accepted from configs.
    ``q`` may be a vector for tori of dimension > 1.
    """

    terms: tuple[tuple[float, tuple[int, ...], str | None, tuple[float, ...], float], ...]
    arity: int

    @classmethod
    def from_config(cls, block: Mapping, arity: int, path: str) -> "TermField":
        raw = block.get("terms")
        if not isinstance(raw, list):
            raise ConfigurationError("expected a list of terms", f"{path}.terms")
        out = []
        for n, t in enumerate(raw):
            p = f"{path}.terms[{n}]"
            if not isinstance(t, Mapping) or "c" not in t:
                raise ConfigurationError("each term needs a coefficient 'c'", p)
            if arity == 1:
                powers = (int(t.get("p", 0)),)
            else:
                powers = tuple(int(v) for v in t.get("powers", [0] * arity))
            if len(powers) != arity or min(powers) < 0:
                raise ConfigurationError(f"powers must be {arity} non-negative integers", p)
            trig = t.get("trig")
            if trig not in (None, "sin", "cos"):
                raise ConfigurationError("trig must be 'sin', 'cos' or null", f"{p}.trig")
            q = tuple(float(v) for v in np.atleast_1d(t.get("q", 0.0)))
            out.append((float(t["c"]), powers, trig, q, float(t.get("phi", 0.0))))
        return cls(tuple(out), arity)

    def _angle(self, theta, q, phi):
        th = np.asarray(theta, dtype=float)
        if len(q) == 1:
            return TWO_PI * (q[0] * th + phi)
        return TWO_PI * (float(np.dot(q, th)) + phi)

    def _trig(self, theta, trig, q, phi):
        if trig is None:
            return 1.0
        ang = self._angle(theta, q, phi)
        return np.sin(ang) if trig == "sin" else np.cos(ang)

    def __call__(self, theta, *args):
        shape = np.broadcast(*args).shape
        total = np.zeros(shape)
        for c, powers, trig, q, phi in self.terms:
            mono = np.ones(shape)
            for x, p in zip(args, powers):
                if p:
                    mono = mono * np.asarray(x, dtype=float) ** p
            total = total + c * mono * self._trig(theta, trig, q, phi)
        return total

    def partial(self, i: int, theta, *args):
        shape = np.broadcast(*args).shape
        total = np.zeros(shape)
        for c, powers, trig, q, phi in self.terms:
            if powers[i] == 0:
                continue
            mono = np.full(shape, float(powers[i]))
            for j, (x, p) in enumerate(zip(args, powers)):
                e = p - 1 if j == i else p
                if e:
                    mono = mono * np.asarray(x, dtype=float) ** e
            total = total + c * mono * self._trig(theta, trig, q, phi)
        return total

    def as_field(self, label: str, rescale=(1.0, 0.0)) -> ScalarField:
        parts = tuple(partial(_term_partial, self, i) for i in range(self.arity))
        return ScalarField(self, self.arity, parts, rescale=tuple(rescale), label=label)


def _term_partial(field_: TermField, i, theta, *args):
    return field_.partial(i, theta, *args)


# ----------------------------------------------------------------------------
# model instance
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelInstance:
    Z: ScalarField
    V: ScalarField
    base: BaseDynamics
    epsilon: float
    mode: str = "twoD"
    eps0: float | None = None
    shift: Any = None
    W: ScalarField | None = None
    name: str | None = None
    params: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}", "model.params.mode")
        want = 2 if self.mode == "oneD" else 3
        if self.Z.arity != want:
            raise ConfigurationError(f"{self.mode} needs a coupling with {want} arguments")
        if self.V.arity != 1:
            raise ConfigurationError("the potential takes one argument")
        self._probe_transversality()

    def _probe_transversality(self):
        g = np.linspace(-1.0, 1.0, 5)
        th = self.base.sample_points(4)[0]
        if self.mode == "oneD":
            a, b = np.meshgrid(g, g, indexing="ij")
            if np.any(self.Z.partial(0, th, a, b) == 0):
                raise ConfigurationError("oneD mode needs dZ/dx != 0 on the probe grid")
        else:
            a, b, c = np.meshgrid(g, g, g, indexing="ij")
            if np.any(self.Z.partial(0, th, a, b, c) == 0) or np.any(self.Z.partial(2, th, a, b, c) == 0):
                raise ConfigurationError("twoD mode needs dZ/dx != 0 != dZ/dz on the probe grid (C2)")

    @property
    def nargs(self) -> int:
        return self.Z.arity

    def theta(self, k: int):
        return self.base.theta(k)

    def _shifted(self, k, args):
        if self.shift is None:
            return args
        offs = self.shift.site_offsets(k, self.nargs)
        return tuple(np.asarray(a, dtype=float) + o for a, o in zip(args, offs))

    def coupling(self, k: int, theta, *args):
        return self.Z(theta, *self._shifted(k, args))

    def coupling_grad(self, k: int, theta, *args) -> tuple:
        return self.Z.gradient(theta, *self._shifted(k, args))

    def coupling_partial(self, i: int, k: int, theta, *args):
        return self.Z.partial(i, theta, *self._shifted(k, args))

    def potential(self, theta, x):
        return self.V(theta, x)

    def potential_dx(self, theta, x):
        return self.V.partial(0, theta, x)

    def f(self, k: int, theta, *args):
        """``eps * Z + V`` at site ``k``; ``args = (x_{k+1}, x_k[, x_{k-1}])``."""
        if len(args) != self.nargs:
            raise ContractError(f"{self.mode} expects {self.nargs} lattice values, got {len(args)}")
        return self.epsilon * self.coupling(k, theta, *args) + self.V(theta, args[1])

    def check_coupling(self, eps: float | None = None):
        """Raise unless ``|eps| < eps0`` (skipped when eps0 is unknown)."""
        eps = self.epsilon if eps is None else eps
        if self.eps0 is not None and not abs(eps) < self.eps0:
            raise ContractError(f"|epsilon| = {abs(eps)} is not below eps0 = {self.eps0}")

    def with_epsilon(self, epsilon: float) -> "ModelInstance":
        return replace(self, epsilon=float(epsilon))

    def replace_param(self, name: str, value) -> "ModelInstance":
        """Rebuild with one scalar parameter changed (``epsilon`` or a
        built-in family parameter such as ``gamma`` or ``s``)."""
        if name in ("epsilon", "eps"):
            return self.with_epsilon(value)
        if self.name is None or self.name == "custom":
            raise ContractError(f"parameter {name!r} cannot be varied on a user-defined model")
        params = dict(self.params)
        params[name] = value
        params["epsilon"] = self.epsilon
        params.setdefault("_base", self.base)
        m = builtin_model(self.name, params)
        return replace(m, base=self.base, shift=self.shift)


def eval_f(m: ModelInstance, theta, args: Sequence[float], k: int = 0):
    """Evaluate ``f_theta(args) = eps * Z(theta, args) + V(theta, args[1])``."""
    if len(args) != m.nargs:
        raise ContractError(f"{m.mode} expects {m.nargs} arguments, got {len(args)}")
    return m.f(k, theta, *args)


# ----------------------------------------------------------------------------
# built-in families
# ----------------------------------------------------------------------------

BUILTINS = ("linear", "double-well", "standard-map", "vs-family")
_REQUIRED = {
    "linear": ("epsilon",),
    "double-well": ("epsilon",),
    "standard-map": ("gamma", "kappa"),
    "vs-family": ("s", "epsilon"),
}


def laplacian_coupling(mode: str = "twoD", scale: float = 0.125) -> ScalarField:
    if mode == "oneD":
        return ScalarField(
            partial(_laplacian_1d, scale=scale), 2,
            (partial(_laplacian_1d_d, scale=scale, weight=1.0),
             partial(_laplacian_1d_d, scale=scale, weight=-2.0)),
            label="Z",
        )
    return ScalarField(
        partial(_laplacian, scale=scale), 3,
        (partial(_laplacian_d, scale=scale, weight=1.0),
         partial(_laplacian_d, scale=scale, weight=-2.0),
         partial(_laplacian_d, scale=scale, weight=1.0)),
        label="Z",
    )


def _base_from_params(params: Mapping, default: str) -> BaseDynamics:
    if isinstance(params.get("_base"), BaseDynamics):
        return params["_base"]
    if isinstance(params.get("base"), Mapping):
        return BaseDynamics.from_dict(params["base"], "model.base")
    if "omega" in params:
        return BaseDynamics.rotation(float(Fraction(str(params["omega"]))), params.get("theta0"))
    if "theta" in params:
        return BaseDynamics.fixed_point(params["theta"])
    if default == "rotation":
        return BaseDynamics.rotation(GOLDEN_MEAN, params.get("theta0"))
    return BaseDynamics.fixed_point(0.0)


def builtin_model(name: str, params: Mapping[str, Any] | None = None) -> ModelInstance:
    """Construct one of the built-in lattice systems.

    ``params`` keys: ``epsilon``, ``gamma``, ``kappa``, ``s`` as the family
    needs; optional ``mode`` (``oneD``/``twoD``), ``omega``/``theta``/``base``
    for the base dynamics, ``rescale`` ``[alpha, beta]`` for the potential,
    ``coupling_scale`` (default 1/8) and ``eps0``. When ``eps0`` is absent it
    is estimated with margin 0.1; potentials for which that fails get
    ``eps0 = None`` and skip the coupling check.
    """
    params = dict(params or {})
    if name not in BUILTINS:
        raise ConfigurationError(f"unknown model {name!r}; expected one of {list(BUILTINS)}", "model.name")
    missing = [k for k in _REQUIRED[name] if k not in params]
    if missing:
        raise ConfigurationError(f"missing parameters {missing}", "model.params")
    mode = params.get("mode", "twoD")
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}", "model.params.mode")
    scale = float(params.get("coupling_scale", 0.125))
    Z = laplacian_coupling(mode, scale)
    W = None
    if name == "linear":
        V = ScalarField(_v_linear, 1, (_v_linear_d,), label="V")
        base = _base_from_params(params, "fixed-point")
        eps = float(params["epsilon"])
        rescale = (1.0, 0.0)
    elif name == "double-well":
        V = ScalarField(_v_double_well, 1, (_v_double_well_d,), label="V")
        base = _base_from_params(params, "fixed-point")
        eps = float(params["epsilon"])
        rescale = (1.0, 0.0)
    elif name == "standard-map":
        g, kap = float(params["gamma"]), float(params["kappa"])
        V = ScalarField(partial(_v_standard, gamma=g, kappa=kap), 1,
                        (partial(_v_standard_d, gamma=g, kappa=kap),), label="V")
        W = ScalarField(partial(_w_standard, gamma=g, kappa=kap), 1,
                        (partial(_w_standard_d, gamma=g, kappa=kap),), label="W")
        base = _base_from_params(params, "rotation")
        # eps = 1/scale turns eps*Z into the unit discrete Laplacian
        eps = float(params.get("epsilon", 1.0 / scale))
        rescale = (1.0, 0.0)
    else:
        s = float(params["s"])
        V = ScalarField(partial(_v_vs, s=s), 1, (partial(_v_vs_d, s=s),), label="V")
        base = _base_from_params(params, "rotation")
        eps = float(params["epsilon"])
        rescale = (1.0 / 3.0, 0.0)
    if "rescale" in params:
        r = params["rescale"]
        if not (isinstance(r, (list, tuple)) and len(r) == 2):
            raise ConfigurationError("rescale must be [alpha, beta]", "model.rescale")
        rescale = (float(r[0]), float(r[1]))
    V = replace(V, rescale=rescale)
    if W is not None:
        W = replace(W, rescale=rescale)
    stored = {k: v for k, v in params.items() if k != "_base"}
    m = ModelInstance(Z, V, base, eps, mode, None, None, W, name, stored)
    if params.get("eps0") is not None:
        return replace(m, eps0=float(params["eps0"]))
    try:
        return replace(m, eps0=estimate_epsilon0(m, 0.1))
    except DegeneratePotentialError:
        return m


def model_from_config(block: Mapping[str, Any]) -> ModelInstance:
    """Build a model from the ``"model"`` block of a run config."""
    if not isinstance(block, Mapping):
        raise ConfigurationError("expected an object", "model")
    name = block.get("name")
    if name is None:
        raise ConfigurationError("missing key 'name'", "model")
    params = block.get("params", {})
    if not isinstance(params, Mapping):
        raise ConfigurationError("expected an object", "model.params")
    params = dict(params)
    for key in ("epsilon", "eps0", "rescale"):
        if key in block:
            params[key] = block[key]
    if "base" in block:
        if not isinstance(block["base"], Mapping):
            raise ConfigurationError("expected an object", "model.base")
        params["base"] = block["base"]
    if name != "custom":
        return builtin_model(name, params)
    mode = block.get("mode", params.get("mode", "twoD"))
    arity = 2 if mode == "oneD" else 3
    for key in ("V", "Z", "epsilon"):
        if key not in block and key not in params:
            raise ConfigurationError(f"missing key {key!r}", "model")
    rescale = tuple(params.get("rescale", (1.0, 0.0)))
    V = TermField.from_config(block["V"], 1, "model.V").as_field("V", rescale)
    Z = TermField.from_config(block["Z"], arity, "model.Z").as_field("Z")
    base = _base_from_params(params, "fixed-point")
    m = ModelInstance(Z, V, base, float(params["epsilon"]), mode, None, None, None, "custom", params)
    if params.get("eps0") is not None:
        return replace(m, eps0=float(params["eps0"]))
    try:
        return replace(m, eps0=estimate_epsilon0(m, 0.1))
    except DegeneratePotentialError:
        return m


# ----------------------------------------------------------------------------
# condition checks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Extremum:
    value: float
    location: tuple

    def to_dict(self):
        return {"value": self.value, "location": [np.asarray(v).tolist() for v in self.location]}


@dataclass(frozen=True)
class ConditionReport:
    grid: int
    eps0: float | None
    n_theta: int
    min_abs_dz_first: Extremum
    min_abs_dz_last: Extremum | None
    max_abs_z: Extremum
    band: tuple[tuple[tuple[float, float], ...], ...]
    t0: float
    t1: float
    band_surjective: bool
    c0: bool
    c1: bool
    c2: bool
    partials_consistent: bool
    max_partial_mismatch: float
    mode: str

    @property
    def passed(self) -> bool:
        return self.c0 and self.c1 and self.c2 and self.partials_consistent

    @property
    def K1(self) -> float:
        return self.min_abs_dz_first.value

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "eps0": self.eps0,
            "n_theta": self.n_theta,
            "mode": self.mode,
            "min_abs_dZ_dx": self.min_abs_dz_first.to_dict(),
            "min_abs_dZ_dz": None if self.min_abs_dz_last is None else self.min_abs_dz_last.to_dict(),
            "max_abs_Z": self.max_abs_z.to_dict(),
            "band": [[list(iv) for iv in per] for per in self.band],
            "t0": self.t0,
            "t1": self.t1,
            "band_surjective": self.band_surjective,
            "conditions": {"C0": self.c0, "C1": self.c1, "C2": self.c2,
                           "partials_consistent": self.partials_consistent},
            "max_partial_mismatch": self.max_partial_mismatch,
            "passed": self.passed,
        }


def _probe_points(n: int, dim: int, lo: float = -0.95, hi: float = 0.95) -> np.ndarray:
    """Deterministic Kronecker sequence in ``[lo, hi]^dim``."""
    # generalized golden ratio (root of x^(d+1) = x + 1)
    phi = 2.0
    for _ in range(50):
        phi = (1 + phi) ** (1.0 / (dim + 1))
    alpha = np.array([phi ** -(i + 1) for i in range(dim)]) % 1.0
    pts = (0.5 + np.outer(np.arange(1, n + 1), alpha)) % 1.0
    return lo + (hi - lo) * pts


def _check_partials(m: ModelInstance, thetas: list, n: int = 32) -> float:
    """Largest relative mismatch between analytic partials and central
    differences on a 32-point probe set."""
    worst = 0.0
    pts = _probe_points(n, m.nargs + 1)
    for fld, arity in ((m.Z, m.nargs), (m.V, 1)):
        if not fld.has_partials:
            continue
        for p in pts:
            th = thetas[int(p[0] * 1e6) % len(thetas)]
            args = tuple(p[1:1 + arity])
            for i in range(arity):
                a = float(fld.partial(i, th, *args))
                d = float(fld.fd_partial(i, th, *args))
                mismatch = abs(a - d) / max(abs(a), abs(d), 1.0)
                worst = max(worst, mismatch)
    return worst


def band_intervals(m: ModelInstance, theta, eps0: float, n: int = 4096) -> list[tuple[float, float]]:
    """The sampled slice ``{x in I : |V(theta, x)| <= eps0}`` as intervals
    with bisection-refined end points."""
    xs = np.linspace(-1.0, 1.0, n + 1)
    g = lambda x: np.abs(np.asarray(m.potential(theta, x), dtype=float)) - eps0  # noqa: E731
    inside = g(xs) <= 0
    out = []
    i = 0
    while i <= n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 <= n and inside[j + 1]:
            j += 1
        lo = xs[i] if i == 0 else float(bisect(g, [xs[i - 1]], [xs[i]], xtol=0.0)[0])
        hi = xs[j] if j == n else float(bisect(g, [xs[j]], [xs[j + 1]], xtol=0.0)[0])
        out.append((lo, hi))
        i = j + 1
    return out


def verify_conditions(m: ModelInstance, grid: int = 64, eps0: float | None = None) -> ConditionReport:
    """Grid-sampled check of the standing conditions (C0)-(C2).

    Failures are reported, never raised. ``eps0`` defaults to the model's.
    """
    if grid < 64:
        raise ContractError("condition checks need at least 64 points per axis")
    eps0 = m.eps0 if eps0 is None else eps0
    thetas = m.base.sample_points(grid)
    g = np.linspace(-1.0, 1.0, grid)
    mesh = np.meshgrid(*([g] * m.nargs), indexing="ij")

    best = {"d0": (math.inf, None), "dl": (math.inf, None), "z": (-math.inf, None)}
    for th in thetas:
        zv = np.abs(m.Z(th, *mesh))
        i = int(np.argmax(zv))
        if zv.flat[i] > best["z"][0]:
            best["z"] = (float(zv.flat[i]), (th,) + tuple(float(a.flat[i]) for a in mesh))
        d0 = np.abs(m.Z.partial(0, th, *mesh))
        i = int(np.argmin(d0))
        if d0.flat[i] < best["d0"][0]:
            best["d0"] = (float(d0.flat[i]), (th,) + tuple(float(a.flat[i]) for a in mesh))
        if m.mode == "twoD":
            dl = np.abs(m.Z.partial(2, th, *mesh))
            i = int(np.argmin(dl))
            if dl.flat[i] < best["dl"][0]:
                best["dl"] = (float(dl.flat[i]), (th,) + tuple(float(a.flat[i]) for a in mesh))

    min_first = Extremum(*best["d0"])
    min_last = Extremum(*best["dl"]) if m.mode == "twoD" else None
    max_z = Extremum(*best["z"])

    band: list[tuple[tuple[float, float], ...]] = []
    surjective = True
    compact = True
    t0, t1 = math.inf, -math.inf
    if eps0 is None:
        surjective = compact = False
    else:
        for th in thetas:
            ivs = band_intervals(m, th, eps0)
            band.append(tuple(ivs))
            if not ivs:
                surjective = False
                continue
            t0 = min(t0, ivs[0][0])
            t1 = max(t1, ivs[-1][1])
            if ivs[0][0] <= -1.0 or ivs[-1][1] >= 1.0:
                compact = False

    mismatch = _check_partials(m, thetas)
    c2 = min_first.value > 0 and (min_last is None or min_last.value > 0)
    return ConditionReport(
        grid=grid,
        eps0=eps0,
        n_theta=len(thetas),
        min_abs_dz_first=min_first,
        min_abs_dz_last=min_last,
        max_abs_z=max_z,
        band=tuple(band),
        t0=t0,
        t1=t1,
        band_surjective=surjective,
        c0=surjective and compact,
        c1=max_z.value < 1.0,
        c2=c2,
        partials_consistent=mismatch <= 1e-4,
        max_partial_mismatch=mismatch,
        mode=m.mode,
    )


def estimate_epsilon0(m: ModelInstance, margin: float = 0.1, n_theta: int = 64, n_x: int = 2000) -> float:
    """Largest eps0 (to relative precision 1e-3) whose sampled band
    ``V^{-1}([-eps0, eps0])`` stays in ``[-1 + margin, 1 - margin]`` and
    meets every sampled fiber."""
    if not 0.0 < margin < 1.0:
        raise ContractError("margin must lie in (0, 1)")
    xs = np.linspace(-1.0, 1.0, n_x + 1)
    edge = 1.0 - margin
    xs = np.union1d(xs, [-edge, edge])
    outer = np.abs(xs) >= edge
    thetas = m.base.sample_points(n_theta)
    vals = np.array([np.asarray(m.potential(th, xs), dtype=float) for th in thetas])
    absv = np.abs(vals)
    outer_min = absv[:, outer].min()
    inner_min = absv.min(axis=1)
    changes = np.any(np.sign(vals[:, :-1]) * np.sign(vals[:, 1:]) <= 0, axis=1)

    def admissible(e: float) -> bool:
        return bool(outer_min > e and np.all(changes | (inner_min <= e)))

    hi = float(absv.max())
    if hi == 0.0:
        raise DegeneratePotentialError("potential vanishes identically on the sample")
    lo = hi
    while not admissible(lo):
        hi = lo
        lo *= 0.5
        if lo < 1e-12:
            raise DegeneratePotentialError(
                "no admissible eps0 down to 1e-12",
                margin=margin, outer_min=float(outer_min), fibers_without_zero=int(np.sum(~changes)),
            )
    if lo == hi:
        return lo
    while (hi - lo) > 1e-3 * lo:
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo
