"""Weak N-functions M(x, xi) as immutable, vectorized family objects.

Every family is called as ``M(x, xi)`` with ``x`` of shape ``(..., dim)`` and
``xi`` of shape ``(..., grad_dim)``; leading axes broadcast.  Families carry the
convex envelopes ``m1 <= M <= m2`` in |xi| and enough structural data
(exponents, coefficients, Young functions) for the balance checker.
"""
from __future__ import annotations

import importlib
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

import numpy as np

from .coefficients import (Coefficient, Constant, Young, coefficient_from_dict,
                           log_modulus)
from .errors import InvalidInputError, ParameterError, UnsupportedFamilyError

SCHEMA_VERSION = 1
E = np.e


def _unit_box(dim):
    return (0.0,) * dim, (1.0,) * dim


def kappa_envelope(t, lo: float, hi: float, scale: float = 1.0):
    """Convex minorant of ``scale * min(t**lo, t**hi)``.

    Equals ``k t**hi`` on [0, 1] and continues linearly with slope ``k hi``
    beyond 1, where ``k = scale * lo / hi``.
    """
    t = np.abs(np.asarray(t, float))
    k = scale * lo / hi
    return np.where(t <= 1.0, k * t**hi, k * (1.0 + hi * (t - 1.0)))


def _pow_pair(t, lo, hi):
    t = np.abs(np.asarray(t, float))
    return np.maximum(t**lo, t**hi)


def _pow(t, p):
    # t**p with the convention 0**0 = 1 kept away from t = 0, p = 0
    return np.power(t, p)


def _dpow(t, p):
    """d/dt t**p, finite at t = 0 for p >= 1."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p * np.power(t, p - 1.0)
    return np.where(t > 0, out, np.where(np.asarray(p) == 1.0, 1.0, 0.0))


class NFunction:
    """Common interface.  Subclasses are frozen dataclasses."""

    family = "abstract"
    dim: int
    lower: tuple
    upper: tuple

    @property
    def grad_dim(self) -> int:
        return self.dim

    # -- evaluation -------------------------------------------------------
    def __call__(self, x, xi) -> np.ndarray:
        raise NotImplementedError

    def grad_xi(self, x, xi) -> np.ndarray:
        """Gradient of M with respect to xi, same shape as broadcast xi."""
        raise NotImplementedError

    def m1(self, t) -> np.ndarray:
        raise NotImplementedError

    def m2(self, t) -> np.ndarray:
        raise NotImplementedError

    def analytic_conjugate(self, x, eta):
        return None

    def coefficient_centers(self) -> list:
        """Points where a coefficient is singular or extremal (ball-lattice hints)."""
        out = []
        for c in self._coefficients():
            center = getattr(c, "center", None)
            if center is not None:
                pt = np.zeros(self.dim)
                pt[: len(center)] = center
                out.append(pt)
        return out

    def ball_hints(self, c, r) -> np.ndarray:
        """Per centred coefficient, the point of B(c, r) within the box nearest its centre set.

        Shape (k, dim).  Sampled ball envelopes include these so that the
        extremes of radially monotone coefficients are hit exactly.
        """
        c = np.asarray(c, float)
        pts = []
        for coef in self._coefficients():
            center = getattr(coef, "center", None)
            if center is None or len(center) == 0:
                continue
            t = c.copy()
            axis = getattr(coef, "axis", None)
            if axis is not None:
                t[axis] = center[0]
            else:
                t[: len(center)] = center
            d = float(np.linalg.norm(t - c))
            if d > r:
                t = c + (t - c) * (r / d)
            pts.append(np.clip(t, self.lower, self.upper))
        return np.array(pts).reshape(-1, self.dim)

    def _coefficients(self) -> list:
        return []

    def params_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "family": self.family, "dim": self.dim,
                "box": {"lower": list(self.lower), "upper": list(self.upper)},
                "params": self.params_dict()}


class _Radial(NFunction):
    """Families of the form M(x, xi) = Phi(x, |xi|)."""

    def profile(self, x, t):
        raise NotImplementedError

    def dprofile(self, x, t):
        raise NotImplementedError

    def exponent_range(self) -> tuple[float, float]:
        """Bounds of the exponent of the lowest-order power term (unit coefficient)."""
        raise NotImplementedError

    def __call__(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        return self.profile(x, np.linalg.norm(xi, axis=-1))

    def grad_xi(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        t = np.linalg.norm(xi, axis=-1)
        d = self.dprofile(x, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(t[..., None] > 0, xi / t[..., None], 0.0)
        return d[..., None] * unit


def _box_fields(d: dict | None, dim: int):
    if d is None:
        return _unit_box(dim)
    return tuple(float(v) for v in d["lower"]), tuple(float(v) for v in d["upper"])


@dataclass(frozen=True)
class VariableExponent(_Radial):
    """|xi|**p(x)."""

    p: Coefficient
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "VariableExponent"

    def __post_init__(self):
        _init_box(self)
        lo, hi = self.p.bounds(self.lower, self.upper)
        if lo < 1:
            raise ParameterError(f"variable exponent must satisfy p >= 1, got min {lo}")
        object.__setattr__(self, "_prange", (lo, hi))

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def profile(self, x, t):
        return _pow(t, self.p(x))

    def dprofile(self, x, t):
        return _dpow(t, self.p(x))

    def exponent_range(self):
        return self._prange

    def m1(self, t):
        return kappa_envelope(t, *self._prange)

    def m2(self, t):
        return _pow_pair(t, *self._prange)

    def analytic_conjugate(self, x, eta):
        p = self.p(np.asarray(x, float))
        if np.any(p <= 1):
            return None
        s = np.linalg.norm(np.asarray(eta, float), axis=-1)
        return (p - 1) * (s / p) ** (p / (p - 1))

    def _coefficients(self):
        return [self.p]

    def params_dict(self):
        return {"p": self.p.to_dict(), "grad_dim": self.grad_dim}


@dataclass(frozen=True)
class MildDoublePhase(_Radial):
    """|xi|**p (1 + a(x) log(e + |xi|))."""

    p: float
    a: Coefficient
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "MildDoublePhase"

    def __post_init__(self):
        _init_box(self)
        if self.p < 1:
            raise ParameterError("p must be >= 1")
        _check_nonneg(self.a, self)

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def profile(self, x, t):
        return t**self.p * (1.0 + self.a(x) * np.log(E + t))

    def dprofile(self, x, t):
        a = self.a(x)
        return _dpow(t, self.p) * (1.0 + a * np.log(E + t)) + t**self.p * a / (E + t)

    def exponent_range(self):
        return self.p, self.p

    def m1(self, t):
        return np.abs(np.asarray(t, float)) ** self.p

    def m2(self, t):
        t = np.abs(np.asarray(t, float))
        return t**self.p * (1.0 + self._amax * np.log(E + t))

    def _coefficients(self):
        return [self.a]

    def params_dict(self):
        return {"p": self.p, "a": self.a.to_dict(), "grad_dim": self.grad_dim}


@dataclass(frozen=True)
class DoublePhase(_Radial):
    """|xi|**p + a(x) |xi|**q with a >= 0 of declared Hoelder exponent alpha."""

    p: float
    q: float
    a: Coefficient
    alpha: float | None = None
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "DoublePhase"

    def __post_init__(self):
        _init_box(self)
        if not (1 <= self.p <= self.q):
            raise ParameterError(f"need 1 <= p <= q, got p={self.p}, q={self.q}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.a.holder_exponent))
        if not (0 < self.alpha <= 1):
            raise ParameterError("alpha must lie in (0, 1]")
        _check_nonneg(self.a, self)
        _warn_if_rougher(self.a, self.alpha)

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def profile(self, x, t):
        return t**self.p + self.a(x) * t**self.q

    def dprofile(self, x, t):
        return _dpow(t, self.p) + self.a(x) * _dpow(t, self.q)

    def exponent_range(self):
        return self.p, self.p

    def m1(self, t):
        return np.abs(np.asarray(t, float)) ** self.p

    def m2(self, t):
        t = np.abs(np.asarray(t, float))
        return t**self.p + self._amax * t**self.q

    def _coefficients(self):
        return [self.a]

    def params_dict(self):
        return {"p": self.p, "q": self.q, "a": self.a.to_dict(), "alpha": self.alpha,
                "grad_dim": self.grad_dim}


@dataclass(frozen=True)
class VariableExponentDoublePhase(_Radial):
    """|xi|**p(x) + a(x) |xi|**q(x)."""

    p: Coefficient
    q: Coefficient
    a: Coefficient
    alpha: float | None = None
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "VariableExponentDoublePhase"

    def __post_init__(self):
        _init_box(self)
        plo, phi = self.p.bounds(self.lower, self.upper)
        qlo, qhi = self.q.bounds(self.lower, self.upper)
        if plo < 1:
            raise ParameterError("need p(x) >= 1")
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.a.holder_exponent))
        # pointwise p <= q checked on a lattice of the box
        pts = _box_lattice(self.lower, self.upper, 33)
        if np.any(self.p(pts) > self.q(pts) + 1e-12):
            raise ParameterError("need p(x) <= q(x)")
        _check_nonneg(self.a, self)
        object.__setattr__(self, "_prange", (plo, phi))
        object.__setattr__(self, "_qrange", (qlo, qhi))

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def profile(self, x, t):
        return _pow(t, self.p(x)) + self.a(x) * _pow(t, self.q(x))

    def dprofile(self, x, t):
        return _dpow(t, self.p(x)) + self.a(x) * _dpow(t, self.q(x))

    def exponent_range(self):
        return self._prange

    def m1(self, t):
        return kappa_envelope(t, *self._prange)

    def m2(self, t):
        return _pow_pair(t, *self._prange) + self._amax * _pow_pair(t, *self._qrange)

    def _coefficients(self):
        return [self.p, self.q, self.a]

    def params_dict(self):
        return {"p": self.p.to_dict(), "q": self.q.to_dict(), "a": self.a.to_dict(),
                "alpha": self.alpha, "grad_dim": self.grad_dim}


@dataclass(frozen=True)
class MultiPhase(_Radial):
    """|xi|**p + sum_i a_i(x) |xi|**q_i."""

    p: float
    qs: tuple
    coefs: tuple
    alphas: tuple | None = None
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "MultiPhase"

    def __post_init__(self):
        _init_box(self)
        if len(self.qs) != len(self.coefs) or not self.qs:
            raise ParameterError("qs and coefs must be nonempty and of equal length")
        if self.p < 1 or any(q < self.p for q in self.qs):
            raise ParameterError("need 1 <= p <= q_i")
        if self.alphas is None:
            object.__setattr__(self, "alphas", tuple(float(a.holder_exponent) for a in self.coefs))
        amax = []
        for a in self.coefs:
            lo, hi = a.bounds(self.lower, self.upper)
            if lo < 0:
                raise ParameterError("coefficients must be nonnegative")
            amax.append(hi)
        object.__setattr__(self, "_amaxs", tuple(amax))

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def profile(self, x, t):
        out = t**self.p
        for q, a in zip(self.qs, self.coefs):
            out = out + a(x) * t**q
        return out

    def dprofile(self, x, t):
        out = _dpow(t, self.p)
        for q, a in zip(self.qs, self.coefs):
            out = out + a(x) * _dpow(t, q)
        return out

    def exponent_range(self):
        return self.p, self.p

    def m1(self, t):
        return np.abs(np.asarray(t, float)) ** self.p

    def m2(self, t):
        t = np.abs(np.asarray(t, float))
        out = t**self.p
        for q, am in zip(self.qs, self._amaxs):
            out = out + am * t**q
        return out

    def _coefficients(self):
        return list(self.coefs)

    def params_dict(self):
        return {"p": self.p, "qs": list(self.qs), "coefs": [a.to_dict() for a in self.coefs],
                "alphas": list(self.alphas), "grad_dim": self.grad_dim}


@dataclass(frozen=True)
class OrliczDoublePhase(_Radial):
    """phi(|xi|) + a(x) psi(|xi|); ``omega`` is the declared modulus of continuity of a.

    ``omega`` is a dict ``{"kind": "log", "beta": b, "c": c}`` for
    c log(e + 1/t)**(-b), ``{"kind": "power", "alpha": s, "c": c}`` for c t**s,
    or None to use the coefficient's own modulus.
    """

    phi: Young
    psi: Young
    a: Coefficient
    omega: dict | None = None
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "OrliczDoublePhase"

    def __post_init__(self):
        _init_box(self)
        _check_nonneg(self.a, self)
        grid = np.linspace(0, 50, 2001)
        for f in (self.phi, self.psi):
            v = f(grid)
            if v[0] != 0 or np.any(np.diff(v) < -1e-12) or np.any(
                    v[1:-1] > 0.5 * (v[:-2] + v[2:]) + 1e-9 * (1 + v[1:-1])):
                raise ParameterError("phi and psi must be nondecreasing, convex, vanish at 0")

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def omega_a(self, t):
        t = np.asarray(t, float)
        if self.omega is None:
            return self.a.modulus(t)
        c = float(self.omega.get("c", 1.0))
        if self.omega["kind"] == "log":
            return c * log_modulus(t, float(self.omega["beta"]))
        if self.omega["kind"] == "power":
            return c * t ** float(self.omega["alpha"])
        raise ParameterError(f"unknown modulus kind {self.omega['kind']!r}")

    def profile(self, x, t):
        return self.phi(t) + self.a(x) * self.psi(t)

    def dprofile(self, x, t):
        return self.phi.derivative(t) + self.a(x) * self.psi.derivative(t)

    def exponent_range(self):
        raise UnsupportedFamilyError("Orlicz double phase has no power lower term")

    def m1(self, t):
        return self.phi(t)

    def m2(self, t):
        return self.phi(t) + self._amax * self.psi(t)

    def _coefficients(self):
        return [self.a]

    def params_dict(self):
        return {"phi": self.phi.to_dict(), "psi": self.psi.to_dict(), "a": self.a.to_dict(),
                "omega": self.omega, "grad_dim": self.grad_dim}


_POWER_LIKE = (VariableExponent, MildDoublePhase, DoublePhase, VariableExponentDoublePhase,
               MultiPhase)


@dataclass(frozen=True)
class Orthotropic(NFunction):
    """sum_i M_i(x, |xi_i|) with 1-D-gradient component families."""

    components: tuple
    dim: int = 2
    lower: tuple = ()
    upper: tuple = ()
    family = "Orthotropic"

    def __post_init__(self):
        _init_box(self)
        if len(self.components) != self.dim:
            raise ParameterError("need one component per coordinate")
        for c in self.components:
            if c.grad_dim != 1 or c.dim != self.dim:
                raise ParameterError("components must act on scalar gradients over the same x")
            if not isinstance(c, _POWER_LIKE):
                raise UnsupportedFamilyError("orthotropic components must be power-type families")
        ranges = [c.exponent_range() for c in self.components]
        object.__setattr__(self, "_prange", (min(r[0] for r in ranges), max(r[1] for r in ranges)))

    def __call__(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        out = 0.0
        for i, c in enumerate(self.components):
            out = out + c.profile(x, np.abs(xi[..., i]))
        return out

    def grad_xi(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        parts = [c.dprofile(x, np.abs(xi[..., i])) * np.sign(xi[..., i])
                 for i, c in enumerate(self.components)]
        return np.stack(np.broadcast_arrays(*parts), axis=-1)

    def m1(self, t):
        # some coordinate has |xi_i| >= |xi|/sqrt(n) and each M_i >= min(s^lo, s^hi)
        s = np.abs(np.asarray(t, float)) / np.sqrt(self.dim)
        return kappa_envelope(s, *self._prange)

    def m2(self, t):
        return sum(c.m2(t) for c in self.components)

    def _coefficients(self):
        out = []
        for c in self.components:
            out.extend(c._coefficients())
        return out

    def params_dict(self):
        return {"components": [c.to_dict() for c in self.components]}


@dataclass(frozen=True)
class XIndependent(NFunction):
    """M(xi) independent of x: ``young`` phi(|xi|) or ``aniso_power`` sum |xi_i|**p_i."""

    kind: str
    young: Young | None = None
    exponents: tuple = ()
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    family = "XIndependent"

    def __post_init__(self):
        _init_box(self)
        if self.kind == "young":
            if self.young is None:
                raise ParameterError("young kind needs a Young function")
        elif self.kind == "aniso_power":
            if len(self.exponents) != self.grad_dim or min(self.exponents) < 1:
                raise ParameterError("need one exponent >= 1 per gradient component")
        else:
            raise ParameterError(f"unknown XIndependent kind {self.kind!r}")

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def __call__(self, x, xi):
        xi = np.asarray(xi, float)
        x = np.asarray(x, float)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        if self.kind == "young":
            out = self.young(np.linalg.norm(xi, axis=-1))
        else:
            out = sum(np.abs(xi[..., i]) ** p for i, p in enumerate(self.exponents))
        return np.broadcast_to(out, shape)

    def grad_xi(self, x, xi):
        xi = np.asarray(xi, float)
        x = np.asarray(x, float)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1]) + (xi.shape[-1],)
        if self.kind == "young":
            t = np.linalg.norm(xi, axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                unit = np.where(t[..., None] > 0, xi / t[..., None], 0.0)
            out = self.young.derivative(t)[..., None] * unit
        else:
            out = np.stack([_dpow(np.abs(xi[..., i]), p) * np.sign(xi[..., i])
                            for i, p in enumerate(self.exponents)], axis=-1)
        return np.broadcast_to(out, shape)

    def m1(self, t):
        if self.kind == "young":
            return self.young(t)
        s = np.abs(np.asarray(t, float)) / np.sqrt(self.grad_dim)
        return kappa_envelope(s, min(self.exponents), max(self.exponents))

    def m2(self, t):
        if self.kind == "young":
            return self.young(t)
        t = np.abs(np.asarray(t, float))
        return sum(t**p for p in self.exponents)

    def analytic_conjugate(self, x, eta):
        if self.kind != "young":
            return None
        return self.young.conjugate(np.linalg.norm(np.asarray(eta, float), axis=-1))

    def params_dict(self):
        d = {"kind": self.kind, "grad_dim": self.grad_dim}
        if self.kind == "young":
            d["young"] = self.young.to_dict()
        else:
            d["exponents"] = list(self.exponents)
        return d


@dataclass(frozen=True)
class Custom(NFunction):
    """User callback ``func(x, xi)`` (vectorized) with declared envelopes.

    ``m1``/``m2`` are Young functions.  ``ref`` is an optional ``"module:attr"``
    import path used for serialization.  A sampled validation pass runs at
    construction.
    """

    func: Callable = field(compare=False)
    m1_young: Young = Young("power", 1.0)
    m2_young: Young = Young("power", 2.0)
    dim: int = 1
    lower: tuple = ()
    upper: tuple = ()
    gdim: int | None = None
    grad: Callable | None = field(default=None, compare=False)
    ref: str | None = None
    family = "Custom"

    def __post_init__(self):
        _init_box(self)
        defect = validate(self, samples=200, seed=0)
        if defect > 1e-9:
            raise ParameterError(f"custom N-function violates the contract (defect {defect:.3g})")

    @property
    def grad_dim(self):
        return self.gdim or self.dim

    def __call__(self, x, xi):
        return np.asarray(self.func(np.asarray(x, float), np.asarray(xi, float)), float)

    def grad_xi(self, x, xi):
        if self.grad is not None:
            return np.asarray(self.grad(np.asarray(x, float), np.asarray(xi, float)), float)
        xi = np.asarray(xi, float)
        x = np.asarray(x, float)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1]) + (xi.shape[-1],)
        xi = np.broadcast_to(xi, shape)
        out = np.empty(shape)
        for i in range(shape[-1]):
            step = 1e-6 * np.maximum(1.0, np.abs(xi[..., i]))
            e = np.zeros(shape)
            e[..., i] = step
            out[..., i] = (self(x, xi + e) - self(x, xi - e)) / (2 * step)
        return out

    def m1(self, t):
        return self.m1_young(t)

    def m2(self, t):
        return self.m2_young(t)

    def params_dict(self):
        if self.ref is None:
            raise UnsupportedFamilyError("custom N-function needs an import path 'module:attr' "
                                         "to be serialized")
        return {"callable": self.ref, "m1": self.m1_young.to_dict(), "m2": self.m2_young.to_dict(),
                "grad_dim": self.grad_dim}


# ---------------------------------------------------------------------------
# construction helpers


def _init_box(obj):
    lower, upper = obj.lower, obj.upper
    if not lower:
        lower, upper = _unit_box(obj.dim)
    lower = tuple(float(v) for v in lower)
    upper = tuple(float(v) for v in upper)
    if len(lower) != obj.dim or len(upper) != obj.dim or any(
            hi <= lo for lo, hi in zip(lower, upper)):
        raise ParameterError("bounding box must have one nonempty interval per dimension")
    object.__setattr__(obj, "lower", lower)
    object.__setattr__(obj, "upper", upper)


def _check_nonneg(a: Coefficient, obj):
    lo, hi = a.bounds(obj.lower, obj.upper)
    if lo < 0:
        raise ParameterError(f"coefficient must be nonnegative, min over box is {lo}")
    object.__setattr__(obj, "_amax", hi)


def _warn_if_rougher(a: Coefficient, alpha: float):
    if a.holder_exponent + 1e-12 < alpha:
        warnings.warn(f"declared alpha={alpha} exceeds the coefficient's Hoelder exponent "
                      f"{a.holder_exponent}", UserWarning, stacklevel=3)


def _box_lattice(lower, upper, m):
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def _as_x(M: NFunction, x) -> np.ndarray:
    x = np.asarray(x, float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != M.dim:
        raise InvalidInputError(f"x must have trailing axis {M.dim}, got shape {x.shape}")
    return x


def _as_xi(M: NFunction, xi) -> np.ndarray:
    xi = np.asarray(xi, float)
    if xi.ndim == 0:
        xi = xi.reshape(1)
    if xi.shape[-1] != M.grad_dim:
        raise InvalidInputError(f"xi must have trailing axis {M.grad_dim}, got shape {xi.shape}")
    return xi


# ---------------------------------------------------------------------------
# operations


def evaluate(M: NFunction, x, xi) -> np.ndarray | float:
    """M(x, xi) with input validation; scalars in, scalar out."""
    x = _as_x(M, x)
    xi = _as_xi(M, xi)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
        raise InvalidInputError("x and xi must be finite")
    out = M(x, xi)
    return float(out) if np.ndim(out) == 0 else out


def conjugate(M: NFunction, x, eta, search_radius: float, points: int | None = None,
              levels: int = 3, factor: int = 8):
    """Lower bound of M*(x, eta) = sup_{|xi| <= R} (xi . eta - M(x, xi)).

    Coarse tensor grid over [-R, R]^k (``points`` per axis, odd, contains 0),
    then ``levels`` refinements around the running argmax, each ``factor``
    times finer.  ``eta`` may carry leading batch axes; ``x`` broadcasts.
    """
    if not search_radius > 0:
        raise InvalidInputError("search_radius must be positive")
    x = _as_x(M, x)
    eta = _as_xi(M, eta)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(eta))):
        raise InvalidInputError("x and eta must be finite")
    k = M.grad_dim
    if points is None:
        points = 257 if k == 1 else 33
    points = int(points) | 1
    if (points - 1) < 2 * factor:
        raise ParameterError("points must exceed 2*factor so refinements overlap")
    batch = np.broadcast_shapes(x.shape[:-1], eta.shape[:-1])
    xb = np.broadcast_to(x, batch + (M.dim,)).reshape(-1, M.dim)
    eb = np.broadcast_to(eta, batch + (k,)).reshape(-1, k)
    R = float(search_radius)

    offs = np.linspace(-1.0, 1.0, points)
    stencil = np.stack([g.ravel() for g in np.meshgrid(*([offs] * k), indexing="ij")], axis=-1)

    def scan(centers, half):
        cand = centers[:, None, :] + half * stencil[None, :, :]
        inside = np.linalg.norm(cand, axis=-1) <= R * (1 + 1e-15)
        val = np.einsum("bk,bmk->bm", eb, cand) - M(xb[:, None, :], cand)
        val = np.where(inside, val, -np.inf)
        j = np.argmax(val, axis=1)
        rows = np.arange(len(cand))
        return val[rows, j], cand[rows, j]

    best, arg = scan(np.zeros_like(eb), R)
    best = np.maximum(best, 0.0)
    half = R
    for _ in range(levels):
        spacing = 2 * half / (points - 1)
        half = spacing / factor * (points - 1) / 2
        val, cand = scan(arg, half)
        improve = val > best
        best = np.where(improve, val, best)
        arg = np.where(improve[:, None], cand, arg)
    best = best.reshape(batch)
    return float(best) if best.ndim == 0 else best


class Delta2Estimate(NamedTuple):
    holds: bool
    c_fit: float
    h: float
    c_fits: tuple


def delta2_estimate(M: NFunction, sample_box=None, C: float = 1.0, C_max: float | None = None,
                    doublings: int = 2, n_x: int = 9, n_r: int = 48,
                    growth_tol: float = 0.25) -> Delta2Estimate:
    """Fit M(x, 2 xi) <= c M(x, xi) + h on |xi| in (C, C_max].

    ``c_fit`` is the sampled max ratio on the first window; ``holds`` is true
    when the fit grows by at most ``growth_tol`` (relative) over ``doublings``
    doublings of C_max.  ``h`` is the largest defect 2-ratio defect below C.
    """
    if not C > 0:
        raise ParameterError("C must be positive")
    lower, upper = sample_box if sample_box is not None else (M.lower, M.upper)
    C_max = 16.0 * C if C_max is None else float(C_max)
    xs = _box_lattice(lower, upper, n_x)
    dirs = _directions(M.grad_dim)

    def fit(cmax):
        r = np.geomspace(C * (1 + 1e-9), cmax, n_r)
        xi = (r[:, None, None] * dirs[None, :, :]).reshape(-1, M.grad_dim)
        m1 = M(xs[:, None, :], xi[None, :, :])
        m2 = M(xs[:, None, :], 2 * xi[None, :, :])
        return float(np.max(m2 / m1))

    fits = tuple(fit(C_max * 2**j) for j in range(doublings + 1))
    c_fit = fits[0]
    r_low = np.linspace(0, C, n_r)
    xi = (r_low[:, None, None] * dirs[None, :, :]).reshape(-1, M.grad_dim)
    h = float(np.max(M(xs[:, None, :], 2 * xi[None, :, :]) - c_fit * M(xs[:, None, :], xi[None, :, :])))
    holds = bool(fits[-1] <= fits[0] * (1 + growth_tol))
    return Delta2Estimate(holds, c_fit, max(h, 0.0), fits)


def _directions(k: int, count: int = 16) -> np.ndarray:
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        th = np.linspace(0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal((count * k, k))
    v = np.vstack([np.eye(k), -np.eye(k), v])
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def validate(M: NFunction, samples: int = 1000, seed: int = 0, scale: float = 4.0) -> float:
    """Largest sampled violation of the weak N-function contract.

    Checks M(x,0) = 0, evenness, midpoint convexity and the envelope sandwich,
    each as a relative defect.  Returns 0.0 when nothing is violated.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(M.lower)
    hi = np.asarray(M.upper)
    x = lo + (hi - lo) * rng.random((samples, M.dim))
    k = M.grad_dim
    xi = scale * rng.standard_normal((samples, k))
    eta = scale * rng.standard_normal((samples, k))
    mx = M(x, xi)
    me = M(x, eta)
    zero = np.abs(M(x, np.zeros((samples, k))))
    sym = np.abs(mx - M(x, -xi)) / (1 + mx)
    mid = (M(x, 0.5 * (xi + eta)) - 0.5 * (mx + me)) / (1 + mx + me)
    t = np.linalg.norm(xi, axis=-1)
    low = (M.m1(t) - mx) / (1 + mx)
    up = (mx - M.m2(t)) / (1 + mx)
    worst = max(zero.max(), sym.max(), mid.max(), low.max(), up.max(), 0.0)
    if not np.isfinite(worst):
        return float("inf")
    return float(worst)


# ---------------------------------------------------------------------------
# serialization

_FAMILIES = {}


def _register(cls):
    _FAMILIES[cls.family] = cls
    return cls


for _cls in (VariableExponent, MildDoublePhase, DoublePhase, VariableExponentDoublePhase,
             MultiPhase, OrliczDoublePhase, Orthotropic, XIndependent, Custom):
    _register(_cls)


def from_dict(d: dict) -> NFunction:
    """Inverse of ``NFunction.to_dict``."""
    try:
        family = d["family"]
        dim = int(d["dim"])
        params = d.get("params", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed N-function document: {exc}") from exc
    if family not in _FAMILIES:
        raise ParameterError(f"unknown family {family!r}")
    lower, upper = _box_fields(d.get("box"), dim)
    common: dict[str, Any] = {"dim": dim, "lower": lower, "upper": upper}
    gd = params.get("grad_dim")
    if family != "Orthotropic":
        common["gdim"] = None if gd in (None, dim) else int(gd)
    coef = coefficient_from_dict
    try:
        if family == "VariableExponent":
            return VariableExponent(coef(params["p"]), **common)
        if family == "MildDoublePhase":
            return MildDoublePhase(float(params["p"]), coef(params["a"]), **common)
        if family == "DoublePhase":
            alpha = params.get("alpha")
            return DoublePhase(float(params["p"]), float(params["q"]), coef(params["a"]),
                               None if alpha is None else float(alpha), **common)
        if family == "VariableExponentDoublePhase":
            alpha = params.get("alpha")
            return VariableExponentDoublePhase(coef(params["p"]), coef(params["q"]),
                                               coef(params["a"]),
                                               None if alpha is None else float(alpha), **common)
        if family == "MultiPhase":
            alphas = params.get("alphas")
            return MultiPhase(float(params["p"]), tuple(float(q) for q in params["qs"]),
                              tuple(coef(a) for a in params["coefs"]),
                              None if alphas is None else tuple(float(a) for a in alphas),
                              **common)
        if family == "OrliczDoublePhase":
            return OrliczDoublePhase(Young.from_dict(params["phi"]), Young.from_dict(params["psi"]),
                                     coef(params["a"]), params.get("omega"), **common)
        if family == "Orthotropic":
            comps = tuple(from_dict(c) for c in params["components"])
            return Orthotropic(comps, **common)
        if family == "XIndependent":
            kind = params["kind"]
            if kind == "young":
                return XIndependent("young", Young.from_dict(params["young"]), **common)
            return XIndependent(kind, None, tuple(float(p) for p in params["exponents"]), **common)
        if family == "Custom":
            ref = params["callable"]
            mod, _, attr = ref.partition(":")
            func = getattr(importlib.import_module(mod), attr)
            return Custom(func, Young.from_dict(params["m1"]), Young.from_dict(params["m2"]),
                          ref=ref, **common)
    except KeyError as exc:
        raise ParameterError(f"{family}: missing parameter {exc}") from exc
    raise ParameterError(f"unknown family {family!r}")  # pragma: no cover


def power_nfunction(p: float, dim: int = 1, **box) -> XIndependent:
    """Shorthand for the x-independent |xi|**p."""
    return XIndependent("young", Young("power", p), dim=dim, **box)


def double_phase(p, q, a, alpha=None, dim=1, **kw) -> DoublePhase:
    """Shorthand accepting a number or a coefficient dict for ``a``."""
    return DoublePhase(p, q, coefficient_from_dict(a), alpha, dim=dim, **kw)


__all__ = [
    "NFunction", "VariableExponent", "MildDoublePhase", "DoublePhase",
    "VariableExponentDoublePhase", "MultiPhase", "OrliczDoublePhase", "Orthotropic",
    "XIndependent", "Custom", "evaluate", "conjugate", "delta2_estimate", "Delta2Estimate",
    "validate", "from_dict", "kappa_envelope", "power_nfunction", "double_phase", "Constant",
    "SCHEMA_VERSION",
]
