"""Modulars, Luxemburg norms and convergence traces for gradient fields."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import InvalidInputError, NumericalError, ParameterError
from .geometry import VectorField, cell_average
from .nfunc import NFunction

# verdict conventions, echoed into every trace's metadata
CONVERGED_FINAL = 1e-2
MONOTONE_WINDOW = 3
AUTO_TARGET = CONVERGED_FINAL
AUTO_MAX_POWER = 20
ALL_LAMBDAS = (4.0, 2.0, 1.0, 0.5, 0.25)


@dataclass(frozen=True)
class ConvergenceTrace:
    """(delta, value) records for one diagnostic kind, deltas strictly decreasing."""

    entries: tuple
    kind: str
    lam: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("modular", "L1", "measure", "energy"):
            raise ParameterError(f"unknown trace kind {self.kind!r}")
        ents = tuple((float(d), float(v)) for d, v in self.entries)
        deltas = [d for d, _ in ents]
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise InvalidInputError("trace deltas must be strictly decreasing")
        if self.kind != "energy" and any(v < 0 for _, v in ents):
            raise InvalidInputError("trace values must be nonnegative")
        object.__setattr__(self, "entries", ents)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([d for d, _ in self.entries])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries])

    @property
    def final(self) -> float:
        return self.entries[-1][1]

    def rows(self) -> list:
        lam = "" if self.lam is None else self.lam
        return [(d, v, lam, self.kind) for d, v in self.entries]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam,
                "entries": [{"delta": d, "value": v} for d, v in self.entries],
                "meta": self.meta}


TRACE_COLUMNS = ["delta", "value", "lambda", "kind"]


def _cell_fields(M: NFunction, xi: VectorField):
    g = xi.grid
    if xi.ncomp != M.grad_dim:
        raise InvalidInputError(f"field has {xi.ncomp} components, M expects {M.grad_dim}")
    centers = g.cell_centers()
    return centers, cell_average(xi.values, g.dim), g.cell_volume


def modular(M: NFunction, xi: VectorField, lam: float = 1.0) -> float:
    """Midpoint quadrature of M(x, xi(x)/lam); cell values are corner averages."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    x, v, vol = _cell_fields(M, xi)
    vals = M(x, v / lam)
    total = float(np.sum(vals)) * vol
    if not np.isfinite(total):
        raise NumericalError("modular is not finite")
    return total


def luxemburg_norm(M: NFunction, xi: VectorField, tol: float = 1e-10,
                   max_expansions: int = 60) -> float:
    """inf{lam > 0 : modular(xi/lam) <= 1}, returned from above to relative ``tol``."""
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if not np.any(xi.values):
        return 0.0
    x, v, vol = _cell_fields(M, xi)

    def rho(lam):
        with np.errstate(over="ignore"):
            return float(np.sum(M(x, v / lam))) * vol

    hi = 1.0
    for _ in range(max_expansions):
        if rho(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise NumericalError("no upper bracket for the Luxemburg norm")
    lo = hi / 2.0
    for _ in range(max_expansions):
        if rho(lo) > 1.0:
            break
        hi = lo
        lo /= 2.0
    else:
        raise NumericalError("no lower bracket for the Luxemburg norm")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if rho(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def _pairs(approximants) -> list:
    items = list(approximants.items()) if isinstance(approximants, Mapping) else list(approximants)
    if not items:
        raise InvalidInputError("approximant list is empty")
    return sorted(items, key=lambda kv: -kv[0])


def verdict_of(trace: ConvergenceTrace, final_tol: float = CONVERGED_FINAL,
               window: int = MONOTONE_WINDOW) -> str:
    tail = trace.values[-window:]
    mono = bool(np.all(np.diff(tail) <= 0))
    return "converging" if mono and trace.final <= final_tol else "stalled"


class ModularResult(NamedTuple):
    trace: ConvergenceTrace
    verdict: str


def modular_convergence(M: NFunction, target: VectorField, approximants, lam="auto",
                        auto_target: float = AUTO_TARGET) -> ModularResult:
    """Trace of modular((xi_delta - xi)/lam) along decreasing delta.

    ``lam="auto"`` picks the smallest 2**k (k >= 0) whose final entry is at
    most ``auto_target``.
    """
    pairs = _pairs(approximants)
    diffs = [(d, f - target) for d, f in pairs]
    if lam == "auto":
        chosen = None
        for k in range(AUTO_MAX_POWER + 1):
            if modular(M, diffs[-1][1], 2.0**k) <= auto_target:
                chosen = 2.0**k
                break
        lam_val = chosen if chosen is not None else 2.0**AUTO_MAX_POWER
    else:
        lam_val = float(lam)
    entries = [(d, modular(M, f, lam_val)) for d, f in diffs]
    meta = {"final_tol": CONVERGED_FINAL, "monotone_window": MONOTONE_WINDOW,
            "lambda_mode": "auto" if lam == "auto" else "fixed", "auto_target": auto_target}
    trace = ConvergenceTrace(tuple(entries), "modular", lam_val, meta)
    return ModularResult(trace, verdict_of(trace))


def modular_convergence_all_lambda(M: NFunction, target: VectorField, approximants,
                                   lambdas: Iterable[float] = ALL_LAMBDAS) -> dict:
    """One trace per lambda; a field with finite modular at every lambda is reported as such."""
    out = {}
    for lam in lambdas:
        try:
            out[float(lam)] = modular_convergence(M, target, approximants, lam)
        except NumericalError:
            out[float(lam)] = None
    return out


def luxemburg_trace(M: NFunction, target: VectorField, approximants) -> ConvergenceTrace:
    """Luxemburg distances ||xi_delta - xi|| as a trace (kind L1 is not used here)."""
    pairs = _pairs(approximants)
    entries = [(d, luxemburg_norm(M, f - target)) for d, f in pairs]
    return ConvergenceTrace(tuple(entries), "modular", None, {"quantity": "luxemburg"})


class Distance(NamedTuple):
    l1: float
    measure_excess: float


def l1_and_measure_distance(xi: VectorField, eta: VectorField, threshold: float) -> Distance:
    """L1 distance by midpoint quadrature and the fraction of nodes with |xi - eta| > threshold."""
    if not threshold > 0:
        raise ParameterError("threshold must be positive")
    if xi.grid != eta.grid:
        raise InvalidInputError("fields live on different grids")
    g = xi.grid
    pointwise = np.linalg.norm(np.asarray(xi.values) - np.asarray(eta.values), axis=-1)
    l1 = float(np.sum(cell_average(pointwise, g.dim))) * g.cell_volume
    excess = float(np.mean(pointwise > threshold))
    return Distance(l1, excess)


__all__ = ["ConvergenceTrace", "TRACE_COLUMNS", "modular", "luxemburg_norm",
           "modular_convergence", "modular_convergence_all_lambda", "luxemburg_trace",
           "l1_and_measure_distance", "Distance", "ModularResult", "verdict_of",
           "CONVERGED_FINAL", "AUTO_TARGET"]
