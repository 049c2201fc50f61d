"""Tensor grids, nodal fields, finite differences, Hoelder seminorms and
star-shaped domains with partitions of unity."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import Table
from .errors import DomainError, InvalidInputError, ParameterError, UnsupportedFamilyError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid with ``counts[i]`` nodes on ``[lower[i], upper[i]]``."""

    counts: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if not (len(counts) == len(lower) == len(upper)) or not counts:
            raise InvalidInputError("counts, lower and upper must have the same length")
        if any(c < 2 for c in counts) or any(hi <= lo for lo, hi in zip(lower, upper)):
            raise InvalidInputError("grid needs >= 2 nodes and a nonempty interval per axis")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, n: int, dim: int = 1, lower=0.0, upper=1.0) -> "Grid":
        """``n`` cells per axis (n + 1 nodes) on the cube [lower, upper]^dim."""
        return cls((n + 1,) * dim, (lower,) * dim, (upper,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / (c - 1) for lo, hi, c in zip(self.lower, self.upper, self.counts))

    @property
    def hmax(self) -> float:
        return max(self.h)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def axes(self) -> list:
        return [np.linspace(lo, hi, c) for lo, hi, c in zip(self.lower, self.upper, self.counts)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``counts + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def cell_centers(self) -> np.ndarray:
        axes = [0.5 * (a[1:] + a[:-1]) for a in self.axes()]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.counts, bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(tuple((c - 1) * factor + 1 for c in self.counts), self.lower, self.upper)

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d) -> "Grid":
        return cls(tuple(d["counts"]), tuple(d["lower"]), tuple(d["upper"]))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    zero_extended: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.counts:
            raise InvalidInputError(f"values shape {v.shape} does not match grid {self.grid.counts}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, zero_extended=False) -> "ScalarField":
        return cls(grid, f(grid.points()), zero_extended)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.zero_extended)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    """Node values of shape ``counts + (k,)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape[:-1] != self.grid.counts or v.ndim != self.grid.dim + 1:
            raise InvalidInputError(f"values shape {v.shape} does not match grid {self.grid.counts}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ncomp(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def constant(cls, grid: Grid, vec) -> "VectorField":
        vec = np.atleast_1d(np.asarray(vec, float))
        return cls(grid, np.broadcast_to(vec, grid.counts + vec.shape))

    def with_values(self, values) -> "VectorField":
        return VectorField(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__


def _vals(obj):
    return obj.values if isinstance(obj, (ScalarField, VectorField)) else obj


# ---------------------------------------------------------------------------
# differences


def gradient(u: ScalarField) -> VectorField:
    """Nodal gradient: central differences inside, one-sided at the boundary.

    Boundary stencils are third order when an axis has at least 4 nodes and
    second order otherwise; all stencils are exact on affine functions.
    """
    g = u.grid
    if any(c < 3 for c in g.counts):
        raise InvalidInputError("gradient needs at least 3 nodes per axis")
    parts = np.gradient(u.values, *g.h, edge_order=2)
    if g.dim == 1:
        parts = [parts]
    v = u.values
    for ax, h in enumerate(g.h):
        if g.counts[ax] < 4:
            continue
        f = [np.take(v, i, axis=ax) for i in range(4)]
        b = [np.take(v, -1 - i, axis=ax) for i in range(4)]
        idx0 = [slice(None)] * g.dim
        idx0[ax] = 0
        parts[ax][tuple(idx0)] = (-11 * f[0] + 18 * f[1] - 9 * f[2] + 2 * f[3]) / (6 * h)
        idx0[ax] = -1
        parts[ax][tuple(idx0)] = (11 * b[0] - 18 * b[1] + 9 * b[2] - 2 * b[3]) / (6 * h)
    return VectorField(g, np.stack(parts, axis=-1))


def cell_average(values: np.ndarray, ndim: int) -> np.ndarray:
    """Average of the 2^ndim corner values of every cell (leading ``ndim`` axes)."""
    out = values
    for ax in range(ndim):
        out = 0.5 * (np.take(out, np.arange(out.shape[ax] - 1), axis=ax)
                     + np.take(out, np.arange(1, out.shape[ax]), axis=ax))
    return out


def cell_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Compact per-cell gradient, shape ``(counts - 1) + (dim,)``.

    The derivative along an axis is the edge difference averaged over the
    remaining cell corners; exact for multilinear functions.
    """
    parts = []
    for ax, h in enumerate(grid.h):
        d = np.diff(values, axis=ax) / h
        for other in range(grid.dim):
            if other != ax:
                d = 0.5 * (np.take(d, np.arange(d.shape[other] - 1), axis=other)
                           + np.take(d, np.arange(1, d.shape[other]), axis=other))
        parts.append(d)
    return np.stack(parts, axis=-1)


def cell_gradient_adjoint(g: np.ndarray, grid: Grid) -> np.ndarray:
    """Adjoint of ``cell_gradient``: maps per-cell covectors to nodal values."""
    out = np.zeros(grid.counts)
    for ax, h in enumerate(grid.h):
        d = g[..., ax]
        for other in reversed(range(grid.dim)):
            if other != ax:
                d = _average_adjoint(d, other)
        out += _diff_adjoint(d, ax) / h
    return out


def _average_adjoint(d, axis):
    shape = list(d.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    lo = [slice(None)] * d.ndim
    hi = [slice(None)] * d.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    out[tuple(lo)] += 0.5 * d
    out[tuple(hi)] += 0.5 * d
    return out


def _diff_adjoint(d, axis):
    shape = list(d.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    lo = [slice(None)] * d.ndim
    hi = [slice(None)] * d.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    out[tuple(lo)] -= d
    out[tuple(hi)] += d
    return out


def cell_average_adjoint(c: np.ndarray, ndim: int) -> np.ndarray:
    out = c
    for ax in reversed(range(ndim)):
        out = _average_adjoint(out, ax)
    return out


def integrate_nodal(values: np.ndarray, grid: Grid) -> float:
    """Midpoint rule with cell values taken as corner averages."""
    return float(np.sum(cell_average(values, grid.dim)) * grid.cell_volume)


# ---------------------------------------------------------------------------
# Hoelder seminorm

HOLDER_MAX_NODES = 10_000
HOLDER_WINDOW = 4


def holder_seminorm(u: ScalarField, gamma: float, max_nodes: int = HOLDER_MAX_NODES,
                    window: int = HOLDER_WINDOW) -> float:
    """Discrete [u]_{0,gamma}: a lower bound of the true seminorm.

    All node pairs are used when the grid has at most ``max_nodes`` nodes.
    Otherwise every ``s``-th node in row-major order (``s = ceil(N/max_nodes)``)
    is paired with every other one, and additionally every node is paired with
    all nodes in a ``window``-wide lattice neighbourhood.
    """
    if not (0 < gamma <= 1):
        raise ParameterError("gamma must lie in (0, 1]")
    g = u.grid
    pts = g.points().reshape(-1, g.dim)
    vals = u.values.ravel()
    N = vals.size
    stride = max(1, -(-N // max_nodes))
    sub = np.arange(0, N, stride)
    best = _pairwise_sup(pts[sub], vals[sub], gamma)
    if stride > 1:
        best = max(best, _local_sup(u, gamma, window))
    return best


def _pairwise_sup(pts, vals, gamma, chunk=512):
    best = 0.0
    for s in range(0, len(vals), chunk):
        d = np.linalg.norm(pts[s:s + chunk, None, :] - pts[None, :, :], axis=-1)
        dv = np.abs(vals[s:s + chunk, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, dv / d**gamma, 0.0)
        best = max(best, float(q.max()))
    return best


def _local_sup(u: ScalarField, gamma, window):
    g = u.grid
    v = u.values
    best = 0.0
    offsets = np.stack(np.meshgrid(*[np.arange(0, window + 1)] + [np.arange(-window, window + 1)]
                                   * (g.dim - 1), indexing="ij"), axis=-1).reshape(-1, g.dim)
    for off in offsets:
        if not np.any(off):
            continue
        sl_a, sl_b = [], []
        for k, o in enumerate(off):
            n = g.counts[k]
            if abs(o) >= n:
                break
            sl_a.append(slice(max(0, -o), n - max(0, o)))
            sl_b.append(slice(max(0, o), n - max(0, -o)))
        else:
            dist = float(np.linalg.norm(np.asarray(off) * np.asarray(g.h)))
            dv = np.abs(v[tuple(sl_a)] - v[tuple(sl_b)])
            best = max(best, float(dv.max()) / dist**gamma)
    return best


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class StarDomain:
    """Domain star-shaped with respect to the ball B(star_center, star_radius).

    ``shape`` is one of interval, rectangle, ball, polygon.  ``params`` holds
    ``lower``/``upper`` (interval, rectangle), ``center``/``radius`` (ball) or
    ``vertices`` (polygon, counter-clockwise).
    """

    shape: str
    params: dict = field(hash=False, compare=True)
    star_center: tuple = ()
    star_radius: float = 0.0

    def __post_init__(self):
        if self.shape not in ("interval", "rectangle", "ball", "polygon"):
            raise UnsupportedFamilyError(f"unknown domain shape {self.shape!r}")
        if not self.star_radius > 0:
            raise ParameterError("star radius must be positive")
        object.__setattr__(self, "star_center", tuple(float(c) for c in self.star_center))
        if self.shape == "polygon":
            V = np.asarray(self.params["vertices"], float)
            if _signed_area(V) < 0:
                raise ParameterError("polygon vertices must be counter-clockwise")
            # star-shaped w.r.t. the ball iff the ball lies in every edge half-plane
            slack = _edge_slack(V, np.asarray(self.star_center))
            if np.any(slack < self.star_radius - 1e-12):
                raise ParameterError("ball is not in the kernel of the polygon")
        else:
            c = np.asarray(self.star_center)
            lo, hi = self.bounding_box()
            if self.shape == "ball":
                gap = self.params["radius"] - np.linalg.norm(c - np.asarray(self.params["center"]))
            else:
                gap = min(np.min(c - lo), np.min(hi - c))
            if gap < self.star_radius - 1e-12:
                raise ParameterError("star ball must lie inside the domain")

    # constructors
    @classmethod
    def interval(cls, a=0.0, b=1.0) -> "StarDomain":
        return cls("interval", {"lower": [a], "upper": [b]}, ((a + b) / 2,), (b - a) / 2)

    @classmethod
    def rectangle(cls, lower=(0.0, 0.0), upper=(1.0, 1.0)) -> "StarDomain":
        lower = [float(v) for v in lower]
        upper = [float(v) for v in upper]
        c = tuple((l + u) / 2 for l, u in zip(lower, upper))
        R = min(u - l for l, u in zip(lower, upper)) / 2
        shape = "interval" if len(lower) == 1 else "rectangle"
        return cls(shape, {"lower": lower, "upper": upper}, c, R)

    @classmethod
    def ball(cls, center=(0.0, 0.0), radius=1.0) -> "StarDomain":
        return cls("ball", {"center": [float(v) for v in center], "radius": float(radius)},
                   tuple(center), float(radius))

    @classmethod
    def polygon(cls, vertices, star_center, star_radius) -> "StarDomain":
        return cls("polygon", {"vertices": [list(map(float, v)) for v in vertices]},
                   tuple(star_center), float(star_radius))

    @classmethod
    def lshape(cls) -> "StarDomain":
        """[0,2]x[0,1] union [0,1]x[0,2]."""
        V = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
        return cls.polygon(V, (0.5, 0.5), 0.5)

    @property
    def dim(self) -> int:
        return len(self.star_center)

    def bounding_box(self):
        if self.shape in ("interval", "rectangle"):
            return np.asarray(self.params["lower"], float), np.asarray(self.params["upper"], float)
        if self.shape == "ball":
            c = np.asarray(self.params["center"], float)
            return c - self.params["radius"], c + self.params["radius"]
        V = np.asarray(self.params["vertices"], float)
        return V.min(axis=0), V.max(axis=0)

    @property
    def diam(self) -> float:
        if self.shape == "ball":
            return 2.0 * self.params["radius"]
        if self.shape == "polygon":
            V = np.asarray(self.params["vertices"], float)
            return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=-1)))
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def contains(self, pts, tol: float = 1e-12) -> np.ndarray:
        """Closed membership test for points of shape ``(..., dim)``."""
        pts = np.asarray(pts, float)
        if self.shape in ("interval", "rectangle"):
            lo, hi = self.bounding_box()
            return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=-1)
        if self.shape == "ball":
            c = np.asarray(self.params["center"], float)
            return np.linalg.norm(pts - c, axis=-1) <= self.params["radius"] + tol
        return _polygon_contains(np.asarray(self.params["vertices"], float), pts, tol)

    def grid(self, n: int) -> Grid:
        """Grid on the bounding box with ``n`` cells along the longest side."""
        lo, hi = self.bounding_box()
        L = float(np.max(hi - lo))
        counts = tuple(int(round(n * (b - a) / L)) + 1 for a, b in zip(lo, hi))
        return Grid(counts, tuple(lo), tuple(hi))

    def to_dict(self) -> dict:
        return {"shape": self.shape, "params": self.params, "star_center": list(self.star_center),
                "star_radius": self.star_radius}

    @classmethod
    def from_dict(cls, d) -> "StarDomain":
        if d.get("shape") == "lshape":
            return cls.lshape()
        return cls(d["shape"], d["params"], tuple(d["star_center"]), float(d["star_radius"]))


def _signed_area(V):
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _edge_slack(V, c):
    """Signed distance from c to each edge line, positive on the inner side."""
    A = V
    B = np.roll(V, -1, axis=0)
    e = B - A
    n = np.stack([-e[:, 1], e[:, 0]], axis=-1) / np.linalg.norm(e, axis=-1, keepdims=True)
    return np.sum((c - A) * n, axis=-1)


def _polygon_contains(V, pts, tol):
    x = pts[..., 0]
    y = pts[..., 1]
    inside = np.zeros(x.shape, bool)
    on_edge = np.zeros(x.shape, bool)
    n = len(V)
    for i in range(n):
        (x1, y1), (x2, y2) = V[i], V[(i + 1) % n]
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xcross)
        # closed set: points within tol of an edge count as inside
        ex, ey = x2 - x1, y2 - y1
        L2 = ex * ex + ey * ey
        s = np.clip(((x - x1) * ex + (y - y1) * ey) / L2, 0, 1)
        on_edge |= np.hypot(x - x1 - s * ex, y - y1 - s * ey) <= max(tol, 1e-12)
    return inside | on_edge


# ---------------------------------------------------------------------------
# decompositions


def smooth_step(t) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, float)

    def f(s):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    a = f(t)
    b = f(1.0 - t)
    return a / (a + b)


@dataclass(frozen=True)
class Piece:
    domain: StarDomain
    theta: Callable = field(compare=False)


@dataclass(frozen=True)
class DomainDecomposition:
    domain: StarDomain
    pieces: tuple

    @property
    def K(self) -> int:
        return len(self.pieces)

    @property
    def R(self) -> float:
        return min(p.domain.star_radius for p in self.pieces)

    def weights(self, grid: Grid) -> list:
        pts = grid.points()
        return [np.asarray(p.theta(pts), float) for p in self.pieces]

    def check(self, grid: Grid, tol: float = 1e-10) -> None:
        """Raise unless 0 <= theta_i <= 1, sum = 1 on the domain, theta_i = 0 off its piece."""
        pts = grid.points()
        inside = self.domain.contains(pts)
        total = np.zeros(grid.counts)
        for p, w in zip(self.pieces, self.weights(grid)):
            if np.any(w < -tol) or np.any(w > 1 + tol):
                raise ParameterError("partition weights must lie in [0, 1]")
            if np.any(np.abs(w[~p.domain.contains(pts) & inside]) > tol):
                raise ParameterError("partition weight is not supported in its piece")
            total += w
        if np.any(np.abs(total[inside] - 1.0) > tol):
            raise ParameterError("partition of unity does not sum to 1")

    def to_dict(self, grid: Grid) -> dict:
        return {"schema_version": SCHEMA_VERSION, "domain": self.domain.to_dict(),
                "grid": grid.to_dict(),
                "pieces": [{"domain": p.domain.to_dict(), "theta": w.ravel().tolist()}
                           for p, w in zip(self.pieces, self.weights(grid))]}

    @classmethod
    def from_dict(cls, d) -> "DomainDecomposition":
        grid = Grid.from_dict(d["grid"])
        pieces = []
        for p in d["pieces"]:
            tab = Table(grid.lower, grid.upper, np.asarray(p["theta"], float).reshape(grid.counts))
            pieces.append(Piece(StarDomain.from_dict(p["domain"]), tab))
        dec = cls(StarDomain.from_dict(d["domain"]), tuple(pieces))
        dec.check(grid, tol=1e-8)
        return dec


def _ones(pts):
    return np.ones(np.asarray(pts).shape[:-1])


def decompose(domain: StarDomain, overlap: float = 0.25, check_grid: Grid | None = None
              ) -> DomainDecomposition:
    """Built-in star-shaped decompositions.

    Convex shapes give the single piece with theta = 1.  The L-shaped demo
    polygon splits into two overlapping pieces, each star-shaped with respect
    to B((0.5, 0.5), 0.5), glued by smooth-step quotients over a strip of
    width ``overlap``.
    """
    if not (0 < overlap < 0.5):
        raise ParameterError("overlap must lie in (0, 0.5)")
    if domain.shape in ("interval", "rectangle", "ball"):
        dec = DomainDecomposition(domain, (Piece(domain, _ones),))
    elif domain.shape == "polygon" and _is_lshape(domain):
        eps = overlap
        p1 = StarDomain.polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 1 + eps), (0, 1 + eps)],
                                (0.5, 0.5), 0.5)
        p2 = StarDomain.polygon([(0, 0), (1 + eps, 0), (1 + eps, 1), (1, 1), (1, 2), (0, 2)],
                                (0.5, 0.5), 0.5)

        def raw(pts):
            pts = np.asarray(pts, float)
            w1 = smooth_step((1 + eps - pts[..., 1]) / eps)
            w2 = smooth_step((1 + eps - pts[..., 0]) / eps)
            return w1, w2

        def theta1(pts):
            w1, w2 = raw(pts)
            s = w1 + w2
            return np.where(s > 0, w1 / np.where(s > 0, s, 1.0), 0.0)

        def theta2(pts):
            w1, w2 = raw(pts)
            s = w1 + w2
            return np.where(s > 0, w2 / np.where(s > 0, s, 1.0), 0.0)

        dec = DomainDecomposition(domain, (Piece(p1, theta1), Piece(p2, theta2)))
    else:
        raise UnsupportedFamilyError(
            f"no built-in decomposition for shape {domain.shape!r}; supply one as a "
            "decomposition JSON file (pieces with star balls and theta tables)")
    dec.check(check_grid if check_grid is not None else domain.grid(64))
    return dec


def _is_lshape(domain: StarDomain) -> bool:
    V = np.asarray(domain.params["vertices"], float)
    ref = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], float)
    return V.shape == ref.shape and bool(np.allclose(V, ref))


def domain_mask(grid: Grid, domain: StarDomain) -> np.ndarray:
    return domain.contains(grid.points())


# ---------------------------------------------------------------------------
# field I/O


def save_field(path, f: ScalarField | VectorField) -> None:
    """CSV (``.csv``) with a ``# grid {...}`` header, or JSON otherwise."""
    from .io import atomic_write_text

    vals = f.values
    k = 1 if isinstance(f, ScalarField) else vals.shape[-1]
    meta = {"schema_version": SCHEMA_VERSION, "grid": f.grid.to_dict(), "components": k}
    if isinstance(f, ScalarField):
        meta["zero_extended"] = f.zero_extended
    else:
        meta["vector"] = True
    if str(path).endswith(".csv"):
        rows = vals.reshape(-1, k)
        lines = ["# grid " + json.dumps(meta, sort_keys=True)]
        lines += [",".join(repr(float(v)) for v in row) for row in rows]
        atomic_write_text(path, "\n".join(lines) + "\n")
    else:
        meta["values"] = vals.reshape(-1).tolist()
        atomic_write_text(path, json.dumps(meta, sort_keys=True))


def load_field(path) -> ScalarField | VectorField:
    text = open(path, encoding="utf-8").read()
    if str(path).endswith(".csv"):
        head, _, body = text.partition("\n")
        if not head.startswith("# grid "):
            raise InvalidInputError("field CSV must start with a '# grid {...}' header")
        meta = json.loads(head[len("# grid "):])
        data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    else:
        meta = json.loads(text)
        data = np.asarray(meta["values"], float)
    grid = Grid.from_dict(meta["grid"])
    k = int(meta.get("components", 1))
    if k == 1 and not meta.get("vector", False):
        return ScalarField(grid, data.reshape(grid.counts), bool(meta.get("zero_extended", False)))
    return VectorField(grid, data.reshape(grid.counts + (k,)))


__all__ = ["Grid", "ScalarField", "VectorField", "gradient", "cell_gradient",
           "cell_gradient_adjoint", "cell_average", "cell_average_adjoint", "integrate_nodal",
           "holder_seminorm", "StarDomain", "DomainDecomposition", "Piece", "decompose",
           "smooth_step", "domain_mask", "save_field", "load_field"]
