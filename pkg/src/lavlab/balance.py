"""Inf/sup envelopes over balls and numeric/closed-form balance checks.

For a ball B, M_B^-(xi) and M_B^+(xi) are the min and max of M(y, xi) over a
tensor sample of B intersected with the bounding box.  ``check_balance``
samples balls on a lattice at every radius of an r-grid, fits the smallest
constant C(r) with

    M_B^+(xi) <= M_B^-(C xi) + 1    for all admissible xi,

and decides the condition from the growth of the relative excess

    E(r) = sup (M_B^+(xi) - 1 - M_B^-(xi))^+ / M_B^-(xi)

as r -> 0: bounded excess means a bounded constant, power growth means the
condition fails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .coefficients import Coefficient, Constant, log_modulus
from .errors import DomainError, ParameterError, UnsupportedFamilyError
from .nfunc import (Custom, DoublePhase, MildDoublePhase, MultiPhase, NFunction,
                    OrliczDoublePhase, Orthotropic, VariableExponent,
                    VariableExponentDoublePhase, XIndependent, _box_lattice, _directions)

DEFAULT_R_GRID = tuple(0.25 * 2.0**-k for k in range(12))
SLOPE_HOLDS = 0.01
SLOPE_FAILS = 0.03
EXCESS_FLOOR = 1e-12
M_LEVEL_CAP = 1e100   # |xi| samples stop where m2 exceeds this (overflow guard)
C_MAX = 1e6
CENTER_CAP = {1: 64, 2: 8}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not (0 < self.radius <= 1):
            raise ParameterError("ball radius must lie in (0, 1]")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))


def default_theta(gamma: float) -> Callable:
    """theta(r) = r^(gamma-1) log(e + 1/r)."""
    return lambda r: r ** (gamma - 1.0) * math.log(math.e + 1.0 / r)


@dataclass(frozen=True)
class BalanceCondition:
    """Which condition to test.

    ``blocks`` partitions the gradient coordinates (gen variants); ``theta``
    replaces r^(gamma-1) in the gen_plus variant; ``c_diamond`` is the fixed
    admissibility constant.
    """

    variant: str = "iso"
    gamma: float = 0.0
    blocks: tuple | None = None
    theta: Callable | None = field(default=None, compare=False)
    c_diamond: float = 1.0

    def __post_init__(self):
        if self.variant not in ("iso", "ort", "gen", "gen_plus"):
            raise ParameterError(f"unknown balance variant {self.variant!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ParameterError("gamma must lie in [0, 1]")
        if not self.c_diamond >= 1.0:
            raise ParameterError("c_diamond must be >= 1")
        if self.blocks is not None:
            object.__setattr__(self, "blocks", tuple(tuple(int(i) for i in b) for b in self.blocks))

    def scale(self, r: float) -> float:
        """Upper end of the admissible |xi| range (before c_diamond)."""
        if self.variant == "gen_plus":
            th = self.theta if self.theta is not None else default_theta(self.gamma)
            return float(th(r))
        return r ** (self.gamma - 1.0)


@dataclass
class BalanceReport:
    verdict: str
    c_diamond: float
    C_diamond: float
    table: list
    divergence_slope: float
    c_slope: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "c_diamond": self.c_diamond,
                "C_diamond": _finite_or_str(self.C_diamond),
                "divergence_slope": self.divergence_slope, "c_slope": self.c_slope,
                "table": [{"r": r, "C": _finite_or_str(C), "excess": E} for r, C, E in self.table],
                "meta": self.meta}


def _finite_or_str(v):
    return v if np.isfinite(v) else "inf"


# ---------------------------------------------------------------------------
# envelopes


def ball_samples(M: NFunction, B: Ball, samples: int = 17) -> np.ndarray:
    """Tensor sample of the closed ball intersected with the box, shape (m, dim)."""
    if samples < 2:
        raise ParameterError("need at least 2 samples per axis")
    c = np.asarray(B.center, float)
    if c.size != M.dim:
        raise DomainError("ball center dimension does not match M")
    lo = np.maximum(c - B.radius, M.lower)
    hi = np.minimum(c + B.radius, M.upper)
    if np.any(lo > hi):
        raise DomainError("ball does not meet the domain")
    axes = [np.linspace(a, b, samples) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, M.dim)
    keep = np.linalg.norm(pts - c, axis=-1) <= B.radius * (1 + 1e-12)
    pts = pts[keep]
    if len(pts) == 0:
        raise DomainError("ball does not meet the domain")
    return np.vstack([pts, M.ball_hints(c, B.radius)])


def _envelope(M, B, xi, samples, reduce):
    Y = ball_samples(M, B, samples)
    xi = np.asarray(xi, float)
    if xi.ndim == 0:
        xi = xi.reshape(1)
    vals = M(Y.reshape((-1,) + (1,) * (xi.ndim - 1) + (M.dim,)), xi[None])
    out = reduce(vals, axis=0)
    return float(out) if np.ndim(out) == 0 else out


def m_minus(M: NFunction, B: Ball, xi, samples: int = 17):
    """min of M(y, xi) over the sampled ball; ``xi`` may carry batch axes."""
    return _envelope(M, B, xi, samples, np.min)


def m_plus(M: NFunction, B: Ball, xi, samples: int = 17):
    """max of M(y, xi) over the sampled ball."""
    return _envelope(M, B, xi, samples, np.max)


# ---------------------------------------------------------------------------
# components (the functions the condition is applied to)


class _Part(NamedTuple):
    f: Callable      # f(y, v) with v of shape (..., k)
    k: int
    m2: Callable


def _component_parts(M) -> list | None:
    if isinstance(M, Orthotropic):
        return [_Part(lambda y, v, c=c: c.profile(y, np.abs(v[..., 0])), 1, c.m2)
                for c in M.components]
    if isinstance(M, XIndependent) and M.kind == "aniso_power":
        return [_Part(lambda y, v, p=p: np.broadcast_to(
                    np.abs(v[..., 0]) ** p, np.broadcast_shapes(y.shape[:-1], v.shape[:-1])),
                      1, lambda t, p=p: np.abs(np.asarray(t, float)) ** p)
                for p in M.exponents]
    return None


def _parts(M, cond: BalanceCondition) -> list:
    whole = [_Part(M, M.grad_dim, M.m2)]
    if cond.variant == "iso":
        return whole
    comps = _component_parts(M)
    if cond.variant == "ort":
        if comps is not None:
            return comps
        if M.grad_dim == 1:
            return whole
        raise UnsupportedFamilyError("the orthotropic condition needs a coordinate-split M")
    blocks = cond.blocks
    if blocks is None:
        blocks = tuple((i,) for i in range(M.grad_dim)) if comps is not None else (
            tuple(range(M.grad_dim)),)
    flat = sorted(i for b in blocks for i in b)
    if flat != list(range(M.grad_dim)):
        raise ParameterError("blocks must partition the gradient coordinates")
    if len(blocks) == 1:
        return whole
    if comps is not None and all(len(b) == 1 for b in blocks):
        return [comps[b[0]] for b in blocks]
    raise UnsupportedFamilyError("block structure does not match the N-function")


def _m2_inverse_one(m2) -> float:
    lo, hi = 0.0, 1.0
    while float(m2(hi)) < 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise ParameterError("m2 never reaches 1")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(m2(mid)) < 1.0:
            lo = mid
        else:
            hi = mid
    return hi


def _representable_top(m2, top: float) -> float:
    """Largest t <= top with m2(t) <= M_LEVEL_CAP."""
    with np.errstate(over="ignore"):
        if float(m2(top)) <= M_LEVEL_CAP:
            return top
        lo, hi = 0.0, top
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(m2(mid)) <= M_LEVEL_CAP:
                lo = mid
            else:
                hi = mid
    return lo


# ---------------------------------------------------------------------------
# sampling


def ball_centers(M: NFunction, r: float, cap: int | None = None) -> np.ndarray:
    """Lattice of spacing r/2 from the lower corner, capped per axis, plus coefficient centers."""
    cap = cap if cap is not None else CENTER_CAP.get(M.dim, 6)
    axes = []
    for lo, hi in zip(M.lower, M.upper):
        ax = np.arange(lo, hi + 1e-12, r / 2)
        if len(ax) > cap:
            ax = np.linspace(lo, hi, cap)
        axes.append(ax)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, M.dim)
    extra = [c for c in M.coefficient_centers()
             if np.all(c >= np.asarray(M.lower) - 1e-12) and np.all(c <= np.asarray(M.upper) + 1e-12)]
    if extra:
        pts = np.vstack([pts] + [np.asarray(e)[None] for e in extra])
        pts = np.unique(np.round(pts, 14), axis=0)
    return pts


def _ball_sample_stack(M, centers, r, samples):
    """(nb, ny, dim) with masked slots filled by the ball center."""
    lower = np.asarray(M.lower)
    upper = np.asarray(M.upper)
    out = []
    for c in centers:
        lo = np.maximum(c - r, lower)
        hi = np.minimum(c + r, upper)
        axes = [np.linspace(a, b, samples) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, M.dim)
        keep = np.linalg.norm(pts - c, axis=-1) <= r * (1 + 1e-12)
        pts = np.where(keep[:, None], pts, c)
        out.append(np.vstack([pts, M.ball_hints(c, r)]))
    return np.stack(out)


def _half_directions(k: int) -> np.ndarray:
    if k == 1:
        return np.array([[1.0]])
    d = _directions(k, 16)
    first = np.array([v[np.nonzero(np.abs(v) > 1e-12)[0][0]] for v in d])
    return d[first > 0]


def _radii(t0: float, top: float, budget: int) -> np.ndarray:
    small = np.geomspace(t0, 1.0, max(4, budget // 4)) if t0 < 1.0 else np.array([])
    if top > 1.0:
        big = np.geomspace(1.0, top, budget)
        rad = np.concatenate([small, big])
    else:
        rad = np.geomspace(min(t0, top), top, max(4, budget // 4))
    return np.unique(rad[rad <= top * (1 + 1e-12)])


def _env_stack(f, Y, V):
    """min and max over y of f(Y[b, y], V[b, s]) -> (nb, ns) each."""
    with np.errstate(over="ignore"):
        vals = f(Y[:, :, None, :], V[:, None, :, :])
    return vals.min(axis=1), vals.max(axis=1)


def _bisect_C(ok, shape, c_max, iters=48):
    """Smallest C in [1, c_max] with ok(C) True, elementwise; inf if ok(c_max) is False."""
    one = np.ones(shape)
    good0 = ok(one)
    top = np.full(shape, c_max)
    good_top = ok(top)
    lo = np.zeros(shape)
    hi = np.full(shape, math.log(c_max))
    active = ~good0 & good_top
    for _ in range(iters):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        res = ok(np.exp(mid))
        hi = np.where(active & res, mid, hi)
        lo = np.where(active & ~res, mid, lo)
    C = np.where(good0, 1.0, np.exp(hi))
    C = np.where(good_top | good0, C, np.inf)
    return C


class _RadiusResult(NamedTuple):
    C: float
    excess: float
    exhausted: bool


def _check_part_at_r(part: _Part, M, cond, r, budget, y_samples, c_max, centers_cap):
    centers = ball_centers(M, r, centers_cap)
    Y = _ball_sample_stack(M, centers, r, y_samples)
    nb = len(centers)
    t0 = _m2_inverse_one(part.m2)
    top = _representable_top(part.m2, cond.c_diamond * cond.scale(r))
    dirs = _half_directions(part.k)
    if cond.variant in ("iso", "ort"):
        rad = _radii(t0, top, budget)
        V = (rad[:, None, None] * dirs[None, :, :]).reshape(-1, part.k)
        V = np.broadcast_to(V, (nb,) + V.shape)
        lo_v, hi_v = _env_stack(part.f, Y, V)
        need = hi_v - 1.0

        def ok(C):
            mn, _ = _env_stack(part.f, Y, V * C[..., None])
            return mn >= need
    else:
        # sublevel admissibility: M_B^-(C xi) <= sup_{|e|=1} M_B^-(top e)
        mins, _ = _env_stack(part.f, Y, np.broadcast_to(top * dirs, (nb,) + dirs.shape))
        S = mins.max(axis=1)                       # (nb,)
        rho = _ray_level(part.f, Y, dirs, S, top)  # (nb, nd)
        u = _radii(min(t0 / rho.max(), 1.0), 1.0, budget)
        V = (u[None, None, :, None] * rho[:, :, None, None] * dirs[None, :, None, :])
        V = V.reshape(nb, -1, part.k)
        lo_v, _ = _env_stack(part.f, Y, V)

        def ok(C):
            _, mx = _env_stack(part.f, Y, V / C[..., None])
            return mx - 1.0 <= lo_v

        _, hi_v = _env_stack(part.f, Y, V)
        need = hi_v - 1.0
    Cbs = _bisect_C(ok, lo_v.shape, c_max)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(lo_v > 0, np.maximum(need - lo_v, 0.0) / lo_v, 0.0)
    C = float(np.max(Cbs))
    return _RadiusResult(C, float(np.max(rel)), not np.isfinite(C))


def _ray_level(f, Y, dirs, S, top):
    """rho[b, e] with M_B^-(rho e) = S[b], found by bisection on [0, top]."""
    nb, nd = len(Y), len(dirs)
    lo = np.zeros((nb, nd))
    hi = np.full((nb, nd), top)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        V = mid[:, :, None] * dirs[None, :, :]
        mn, _ = _env_stack(f, Y, V)
        below = mn < S[:, None]
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


def _slope(r, y):
    x = np.log(1.0 / np.asarray(r))
    y = np.asarray(y)
    if len(x) < 2:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def _tail(n: int) -> slice:
    k = max(3, n // 2)
    return slice(max(0, n - k), n)


def _run(M, cond, r_grid, budget, y_samples, c_max, centers_cap):
    parts = _parts(M, cond)
    rows = []
    for r in r_grid:
        res = [_check_part_at_r(p, M, cond, r, budget, y_samples, c_max, centers_cap)
               for p in parts]
        C = max(x.C for x in res)
        E = max(x.excess for x in res)
        rows.append((float(r), C, E, all(x.exhausted for x in res)))
    return rows


def _verdict(rows, slope_holds, slope_fails):
    r = np.array([x[0] for x in rows])
    C = np.array([x[1] for x in rows])
    E = np.array([x[2] for x in rows])
    tail = _tail(len(r))
    slope = _slope(r[tail], np.log(np.maximum(E[tail], EXCESS_FLOOR)))
    finite = np.isfinite(C)
    c_slope = _slope(r[tail][finite[tail]], np.log(C[tail][finite[tail]])) if finite[tail].sum() >= 2 else float("nan")
    if all(x[3] for x in rows):
        return "fails", slope, c_slope
    if not finite.all():
        return "fails", slope, c_slope
    if slope <= slope_holds:
        return "holds", slope, c_slope
    if slope >= slope_fails:
        return "fails", slope, c_slope
    return "inconclusive", slope, c_slope


def check_balance(M: NFunction, cond: BalanceCondition, r_grid: Sequence | None = None,
                  xi_budget: int = 24, C_search: Sequence | None = None, y_samples: int | None = None,
                  centers_cap: int | None = None, slope_holds: float = SLOPE_HOLDS,
                  slope_fails: float = SLOPE_FAILS, stability_check: bool = True) -> BalanceReport:
    """Numeric balance check over an r-grid.

    ``C_search`` is a log-grid whose first and last entries bracket the
    constant (default 1 .. 1e6); the constant is refined by bisection in log C.
    The verdict uses the slope of log E(r) against log(1/r) over the smaller
    half of the r-grid.  With ``stability_check`` the run is repeated with
    half the xi budget and a change of verdict is reported as inconclusive.
    """
    r_grid = tuple(float(r) for r in (r_grid if r_grid is not None else DEFAULT_R_GRID))
    if any(not (0 < r <= 1) for r in r_grid):
        raise ParameterError("radii must lie in (0, 1]")
    if any(b >= a for a, b in zip(r_grid, r_grid[1:])):
        raise ParameterError("r_grid must be strictly decreasing")
    c_max = float(C_search[-1]) if C_search is not None else C_MAX
    ys = y_samples if y_samples is not None else (17 if M.dim == 1 else 7)
    rows = _run(M, cond, r_grid, xi_budget, ys, c_max, centers_cap)
    verdict, slope, c_slope = _verdict(rows, slope_holds, slope_fails)
    unstable = False
    if stability_check:
        coarse = _run(M, cond, r_grid, max(4, xi_budget // 2), ys, c_max, centers_cap)
        v2, _, _ = _verdict(coarse, slope_holds, slope_fails)
        if v2 != verdict:
            unstable = True
            verdict = "inconclusive"
    C_diamond = max(x[1] for x in rows)
    meta = {"variant": cond.variant, "gamma": cond.gamma, "xi_budget": xi_budget,
            "y_samples": ys, "C_search_max": c_max, "slope_holds": slope_holds,
            "slope_fails": slope_fails, "slope_fit": "log excess vs log(1/r), smaller half of r-grid",
            "sampling_unstable": unstable,
            "exhausted_radii": [x[0] for x in rows if not np.isfinite(x[1])]}
    table = [(x[0], x[1], x[2]) for x in rows]
    return BalanceReport(verdict, cond.c_diamond, C_diamond, table, slope, c_slope, meta)


def hasto_envelope_check(M: NFunction, gamma: float, r_grid: Sequence | None = None,
                         C: float = 1.0, c: float = 1.0, variant: str = "iso",
                         xi_budget: int = 24, y_samples: int | None = None,
                         centers_cap: int | None = None, envelope: str = "inf") -> list:
    """Per radius, max over sampled balls and |xi| <= c r^(gamma-1) of
    (M_B^+(xi) - M_B^-(C xi) - 1)^+.

    ``envelope="convex"`` replaces M_B^- by its convex minorant along rays
    (lower convex hull in |xi|), available for one-dimensional gradient parts.
    """
    cond = BalanceCondition("iso" if variant in ("iso", "gen", "gen_plus") else "ort", gamma,
                            c_diamond=max(1.0, c))
    r_grid = tuple(r_grid if r_grid is not None else DEFAULT_R_GRID)
    ys = y_samples if y_samples is not None else (17 if M.dim == 1 else 7)
    out = []
    for r in r_grid:
        worst = 0.0
        for part in _parts(M, cond):
            centers = ball_centers(M, r, centers_cap)
            Y = _ball_sample_stack(M, centers, r, ys)
            t0 = _m2_inverse_one(part.m2)
            top = _representable_top(part.m2, c * r ** (gamma - 1.0))
            rad = _radii(t0, top, xi_budget)
            dirs = _half_directions(part.k)
            V = np.broadcast_to((rad[:, None, None] * dirs[None]).reshape(-1, part.k),
                                (len(centers), len(rad) * len(dirs), part.k))
            _, mx = _env_stack(part.f, Y, V)
            if envelope == "inf":
                mn, _ = _env_stack(part.f, Y, C * V)
            elif envelope == "convex":
                if part.k != 1:
                    raise UnsupportedFamilyError("convex envelope implemented for scalar parts")
                mn = _convex_minorant_on_rays(part.f, Y, C * rad, C * top)
            else:
                raise ParameterError(f"unknown envelope {envelope!r}")
            worst = max(worst, float(np.max(np.maximum(mx - mn - 1.0, 0.0))))
        out.append(worst)
    return out


def _convex_minorant_on_rays(f, Y, t_eval, t_top, n=2049):
    """Lower convex hull of t -> min_y f(y, t) on [0, t_top], evaluated at t_eval."""
    t = np.unique(np.concatenate([np.linspace(0.0, t_top, n), t_eval]))
    V = np.broadcast_to(t[:, None], (len(Y), len(t), 1))
    mn, _ = _env_stack(f, Y, V)
    out = np.empty((len(Y), len(t_eval)))
    for b in range(len(Y)):
        hull = _lower_hull(t, mn[b])
        out[b] = np.interp(t_eval, t[hull], mn[b][hull])
    return out


def _lower_hull(x, y):
    idx = []
    for i in range(len(x)):
        while len(idx) >= 2:
            a, b = idx[-2], idx[-1]
            if (y[b] - y[a]) * (x[i] - x[a]) >= (y[i] - y[a]) * (x[b] - x[a]):
                idx.pop()
            else:
                break
        idx.append(i)
    return np.array(idx)


# ---------------------------------------------------------------------------
# closed-form bounds


class ClosedFormBound(NamedTuple):
    admissible: bool
    bound_expr: dict
    margin: float
    constant: float | None


def holder_constant(a: Coefficient, alpha: float, diam: float) -> float:
    """Upper bound of [a]_alpha from the coefficient's modulus of continuity."""
    if isinstance(a, Constant):
        return 0.0
    t = np.geomspace(1e-12, diam, 4001)
    return float(np.max(a.modulus(t) / t**alpha))


def _range_exponent(gamma: float) -> float:
    return math.inf if gamma >= 1 else 1.0 / (1.0 - gamma)


def _component_bound(M, gamma, diam):
    """(admissible, tag, margin, constant) for a single power-type family."""
    k = _range_exponent(gamma)
    if isinstance(M, VariableExponent):
        ok = M.p.log_holder
        return ok, "variable_exponent: |xi|^(p(x)-p(y)) <= r^((gamma-1)|p(x)-p(y)|), p log-Hoelder", (
            1.0 if ok else -1.0), None
    if isinstance(M, MildDoublePhase):
        ok = M.a.log_holder
        return ok, "mild_double_phase: 1 + |a(x)-a(y)| log(e + c r^(gamma-1)), a log-Hoelder", (
            1.0 if ok else -1.0), None
    if isinstance(M, DoublePhase):
        margin = M.p + M.alpha * k - M.q if math.isfinite(k) else math.inf
        ok = margin >= -1e-12
        const = (1.0 + 2.0**M.alpha * holder_constant(M.a, M.alpha, diam)) ** (1.0 / M.p) if ok else None
        return ok, "double_phase: 1 + r^(-alpha)|a(x)-a(y)|, q <= p + alpha/(1-gamma)", margin, const
    if isinstance(M, VariableExponentDoublePhase):
        pts = _box_lattice(M.lower, M.upper, 65 if M.dim == 1 else 33)
        gap = float(np.max(M.q(pts) - M.p(pts)))
        margin = M.alpha * k - gap if math.isfinite(k) else math.inf
        logh = M.p.log_holder and M.q.log_holder
        if not logh:
            margin = min(margin, -1.0)
        ok = margin >= -1e-12
        return ok, ("variable_exponent_double_phase: p, q log-Hoelder and "
                    "q(x) <= p(x) + alpha/(1-gamma)"), margin, None
    if isinstance(M, MultiPhase):
        margins = [M.p + al * k - q if math.isfinite(k) else math.inf
                   for q, al in zip(M.qs, M.alphas)]
        margin = min(margins)
        ok = margin >= -1e-12
        const = None
        if ok:
            s = sum(2.0**al * holder_constant(a, al, diam) for a, al in zip(M.coefs, M.alphas))
            const = (1.0 + s) ** (1.0 / M.p)
        return ok, "multi_phase: q_i <= p + alpha_i/(1-gamma) for every phase", margin, const
    if isinstance(M, OrliczDoublePhase):
        t = np.geomspace(1e-10, 1.0, 801)
        s = t ** (gamma - 1.0)
        allow = M.phi(s) / M.psi(s)
        rel = (allow - M.omega_a(t)) / allow
        margin = float(np.min(rel))
        ok = margin >= -1e-12
        return ok, "orlicz_double_phase: omega_a(t) <= phi(t^(gamma-1))/psi(t^(gamma-1))", margin, None
    raise UnsupportedFamilyError(f"no closed form for family {M.family}")


def closed_form_bound(M: NFunction, cond: BalanceCondition) -> ClosedFormBound:
    """Evaluate the family's ratio-bound predicate.

    ``margin`` is the worst slack: the exponent gap for power families, the
    relative slack on the t-grid for Orlicz pairs, and +1/-1 for the purely
    qualitative log-Hoelder predicates.  ``constant`` is an explicit C for
    which the condition holds (c_diamond = 1), when one is known.
    """
    if isinstance(M, Custom):
        raise UnsupportedFamilyError("custom N-functions need the numeric checker")
    diam = float(np.linalg.norm(np.subtract(M.upper, M.lower)))
    g = cond.gamma
    if isinstance(M, XIndependent):
        return ClosedFormBound(True, {"tag": "x_independent", "expr": "M_B^+ = M_B^-"},
                               math.inf, 1.0)
    if isinstance(M, Orthotropic):
        res = [_component_bound(c, g, diam) for c in M.components]
        ok = all(r[0] for r in res)
        consts = [r[3] for r in res]
        const = max(consts) if ok and all(c is not None for c in consts) else None
        expr = {"tag": "orthotropic", "components": [r[1] for r in res]}
        return ClosedFormBound(ok, expr, min(r[2] for r in res), const)
    ok, tag, margin, const = _component_bound(M, g, diam)
    return ClosedFormBound(ok, {"tag": tag.split(":")[0], "expr": tag}, margin, const)


__all__ = ["Ball", "BalanceCondition", "BalanceReport", "ClosedFormBound", "m_minus", "m_plus",
           "check_balance", "closed_form_bound", "hasto_envelope_check", "ball_samples",
           "ball_centers", "holder_constant", "default_theta", "DEFAULT_R_GRID"]
