"""Spatial coefficient fields a(x), p(x) and 1-D Young functions.

Coefficients are small immutable expression objects (constant, affine,
power of a distance, logarithmic modulus, smooth bump) or grid tables with
multilinear interpolation.  Every coefficient knows its own range over a box
and an upper bound for its modulus of continuity, which is what the balance
module needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.interpolate import RegularGridInterpolator

E = np.e


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x


def _distance(x: np.ndarray, center: tuple, axis: int | None) -> np.ndarray:
    if axis is not None:
        return np.abs(x[..., axis] - center[axis] if len(center) > axis else x[..., axis])
    c = np.asarray(center, dtype=float)
    if c.size == 0:
        c = np.zeros(x.shape[-1])
    return np.linalg.norm(x - c, axis=-1)


def _distance_range(lower, upper, center, axis):
    """(min, max) of the distance to ``center`` over the box."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    n = lower.size
    c = np.zeros(n) if len(center) == 0 else np.asarray(center, float)
    if axis is not None:
        lo, hi, ca = lower[axis], upper[axis], c[axis]
        dmin = 0.0 if lo <= ca <= hi else min(abs(lo - ca), abs(hi - ca))
        return dmin, max(abs(lo - ca), abs(hi - ca))
    nearest = np.clip(c, lower, upper)
    far = np.where(np.abs(lower - c) > np.abs(upper - c), lower, upper)
    return float(np.linalg.norm(nearest - c)), float(np.linalg.norm(far - c))


class Coefficient:
    """Base class; subclasses are frozen dataclasses."""

    kind = "abstract"

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def bounds(self, lower, upper) -> tuple[float, float]:
        raise NotImplementedError

    def modulus(self, t) -> np.ndarray:
        raise NotImplementedError

    @property
    def holder_exponent(self) -> float:
        return 1.0

    @property
    def log_holder(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Coefficient):
    value: float
    kind = "constant"

    def __call__(self, x):
        x = _as_points(x)
        return np.full(x.shape[:-1], float(self.value))

    def bounds(self, lower, upper):
        return float(self.value), float(self.value)

    def modulus(self, t):
        return np.zeros_like(np.asarray(t, float))

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Affine(Coefficient):
    c0: float
    c: tuple
    kind = "affine"

    def __call__(self, x):
        x = _as_points(x)
        c = np.asarray(self.c, float)
        return self.c0 + x[..., : c.size] @ c

    def bounds(self, lower, upper):
        c = np.asarray(self.c, float)
        lo = np.asarray(lower, float)[: c.size]
        hi = np.asarray(upper, float)[: c.size]
        vmin = self.c0 + np.sum(np.minimum(c * lo, c * hi))
        vmax = self.c0 + np.sum(np.maximum(c * lo, c * hi))
        return float(vmin), float(vmax)

    def modulus(self, t):
        return np.linalg.norm(self.c) * np.asarray(t, float)

    def to_dict(self):
        return {"kind": "affine", "c0": self.c0, "c": list(self.c)}


@dataclass(frozen=True)
class Power(Coefficient):
    """c0 + c * d(x)**alpha, d the distance to ``center`` (or along ``axis``)."""

    c: float
    alpha: float
    c0: float = 0.0
    center: tuple = ()
    axis: int | None = None
    kind = "power"

    def __call__(self, x):
        x = _as_points(x)
        return self.c0 + self.c * _distance(x, self.center, self.axis) ** self.alpha

    def bounds(self, lower, upper):
        dmin, dmax = _distance_range(lower, upper, self.center, self.axis)
        v = sorted([self.c0 + self.c * dmin**self.alpha, self.c0 + self.c * dmax**self.alpha])
        return float(v[0]), float(v[1])

    def modulus(self, t, diam: float = 2.0):
        t = np.asarray(t, float)
        if self.alpha <= 1:
            return abs(self.c) * t**self.alpha
        return abs(self.c) * self.alpha * diam ** (self.alpha - 1) * t

    @property
    def holder_exponent(self):
        return min(self.alpha, 1.0)

    def to_dict(self):
        return {"kind": "power", "c": self.c, "alpha": self.alpha, "c0": self.c0,
                "center": list(self.center), "axis": self.axis}


def log_modulus(t, beta: float) -> np.ndarray:
    """omega(t) = log(e + 1/t)**(-beta), with omega(0) = 0."""
    t = np.asarray(t, float)
    with np.errstate(divide="ignore"):
        out = np.log(E + 1.0 / t) ** (-beta)
    return np.where(t > 0, out, 0.0)


@dataclass(frozen=True)
class LogModulus(Coefficient):
    """c0 + c * log(e + 1/d(x))**(-beta).  Log-Hoelder exactly when beta >= 1."""

    c: float
    beta: float
    c0: float = 0.0
    center: tuple = ()
    axis: int | None = None
    kind = "logmod"

    def __call__(self, x):
        x = _as_points(x)
        return self.c0 + self.c * log_modulus(_distance(x, self.center, self.axis), self.beta)

    def bounds(self, lower, upper):
        dmin, dmax = _distance_range(lower, upper, self.center, self.axis)
        v = sorted([self.c0 + self.c * float(log_modulus(dmin, self.beta)),
                    self.c0 + self.c * float(log_modulus(dmax, self.beta))])
        return v[0], v[1]

    def modulus(self, t):
        return abs(self.c) * log_modulus(t, self.beta)

    @property
    def holder_exponent(self):
        return 0.0

    @property
    def log_holder(self):
        return self.beta >= 1.0

    def to_dict(self):
        return {"kind": "logmod", "c": self.c, "beta": self.beta, "c0": self.c0,
                "center": list(self.center), "axis": self.axis}


def bump_profile(s) -> np.ndarray:
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero outside; peak value 1 at s = 0."""
    s = np.asarray(s, float)
    inside = np.abs(s) < 1
    out = np.zeros_like(s)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


# max |d/ds bump_profile|, attained near s = 0.6
_BUMP_LIP = float(np.max(np.abs(np.gradient(bump_profile(np.linspace(0, 1, 20001)),
                                            1.0 / 20000))))


@dataclass(frozen=True)
class Bump(Coefficient):
    c: float
    radius: float
    center: tuple = ()
    c0: float = 0.0
    kind = "bump"

    def __call__(self, x):
        x = _as_points(x)
        return self.c0 + self.c * bump_profile(_distance(x, self.center, None) / self.radius)

    def bounds(self, lower, upper):
        dmin, dmax = _distance_range(lower, upper, self.center, None)
        top = self.c0 + self.c * float(bump_profile(dmin / self.radius))
        bottom = self.c0 + self.c * float(bump_profile(dmax / self.radius))
        return min(top, bottom), max(top, bottom)

    def modulus(self, t):
        return abs(self.c) * _BUMP_LIP / self.radius * np.asarray(t, float)

    def to_dict(self):
        return {"kind": "bump", "c": self.c, "radius": self.radius,
                "center": list(self.center), "c0": self.c0}


@dataclass(frozen=True, eq=False)
class Table(Coefficient):
    """Grid-sampled coefficient with multilinear interpolation."""

    lower: tuple
    upper: tuple
    values: np.ndarray = field(repr=False)
    kind = "table"

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        axes = tuple(np.linspace(lo, hi, m) for lo, hi, m in zip(self.lower, self.upper, vals.shape))
        interp = RegularGridInterpolator(axes, vals, method="linear", bounds_error=False,
                                         fill_value=None)
        object.__setattr__(self, "_interp", interp)

    def __call__(self, x):
        x = _as_points(x)
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        pts = np.clip(x[..., : lo.size], lo, hi)
        return self._interp(pts.reshape(-1, lo.size)).reshape(x.shape[:-1])

    def bounds(self, lower, upper):
        return float(self.values.min()), float(self.values.max())

    def modulus(self, t):
        lip = 0.0
        for ax in range(self.values.ndim):
            h = (self.upper[ax] - self.lower[ax]) / (self.values.shape[ax] - 1)
            lip = max(lip, float(np.max(np.abs(np.diff(self.values, axis=ax)))) / h)
        return lip * np.sqrt(self.values.ndim) * np.asarray(t, float)

    def __eq__(self, other):
        return (isinstance(other, Table) and tuple(self.lower) == tuple(other.lower)
                and tuple(self.upper) == tuple(other.upper)
                and self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values)))

    def __hash__(self):
        return hash((self.lower, self.upper, self.values.tobytes()))

    def to_dict(self):
        return {"kind": "table", "lower": list(self.lower), "upper": list(self.upper),
                "shape": list(self.values.shape), "values": self.values.ravel().tolist()}


def coefficient_from_dict(d: Any) -> Coefficient:
    if isinstance(d, Coefficient):
        return d
    if isinstance(d, (int, float)):
        return Constant(float(d))
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "affine":
        return Affine(float(d["c0"]), tuple(float(v) for v in d["c"]))
    if kind == "power":
        return Power(float(d["c"]), float(d["alpha"]), float(d.get("c0", 0.0)),
                     tuple(float(v) for v in d.get("center", ())), d.get("axis"))
    if kind == "logmod":
        return LogModulus(float(d["c"]), float(d["beta"]), float(d.get("c0", 0.0)),
                          tuple(float(v) for v in d.get("center", ())), d.get("axis"))
    if kind == "bump":
        return Bump(float(d["c"]), float(d["radius"]),
                    tuple(float(v) for v in d.get("center", ())), float(d.get("c0", 0.0)))
    if kind == "table":
        vals = np.asarray(d["values"], float).reshape(d["shape"])
        return Table(tuple(float(v) for v in d["lower"]), tuple(float(v) for v in d["upper"]), vals)
    raise ValueError(f"unknown coefficient kind {kind!r}")


# ---------------------------------------------------------------------------
# 1-D Young functions phi(t) used by Orlicz-type families


@dataclass(frozen=True)
class Young:
    """phi(t) on t >= 0: ``power`` t^p, ``power_log`` t^p log(e+t)^beta, ``exp`` e^t-1-t."""

    kind: str
    p: float = 2.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("power", "power_log", "exp"):
            raise ValueError(f"unknown Young function kind {self.kind!r}")
        if self.kind != "exp" and self.p < 1:
            raise ValueError("Young exponent must be >= 1")

    def __call__(self, t):
        t = np.abs(np.asarray(t, float))
        if self.kind == "power":
            return t**self.p
        if self.kind == "power_log":
            return t**self.p * np.log(E + t) ** self.beta
        return np.expm1(t) - t

    def derivative(self, t):
        t = np.abs(np.asarray(t, float))
        if self.kind == "power":
            return self.p * t ** (self.p - 1)
        if self.kind == "power_log":
            lg = np.log(E + t)
            return (self.p * t ** (self.p - 1) * lg**self.beta
                    + self.beta * t**self.p * lg ** (self.beta - 1) / (E + t))
        return np.expm1(t)

    def conjugate(self, s):
        """Closed-form conjugate for pure powers, None otherwise."""
        if self.kind != "power" or self.p <= 1:
            return None
        s = np.abs(np.asarray(s, float))
        return (self.p - 1) * (s / self.p) ** (self.p / (self.p - 1))

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "beta": self.beta}

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, Young):
            return d
        return cls(d["kind"], float(d.get("p", 2.0)), float(d.get("beta", 0.0)))
