"""Shared fixtures: one instance of every built-in N-function family."""
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lavlab.coefficients import Affine, Bump, LogModulus, Power, Table, Young
from lavlab.errors import ResolutionWarning
from lavlab.nfunc import (Custom, DoublePhase, MildDoublePhase, MultiPhase, OrliczDoublePhase,
                          Orthotropic, VariableExponent, VariableExponentDoublePhase, XIndependent)

settings.register_profile("lavlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lavlab")


def all_families():
    """(name, M) pairs covering every family and both spatial dimensions."""
    tab = Table((0.0,), (1.0,), np.array([0.0, 0.3, 0.2, 0.9]))
    return [
        ("varexp", VariableExponent(Affine(2.0, (1.0,)))),
        ("varexp2d", VariableExponent(Affine(1.5, (0.5, 0.25)), dim=2)),
        ("mild", MildDoublePhase(2.0, Power(1.0, 0.5))),
        ("dp", DoublePhase(2.0, 3.0, Affine(0.0, (1.0,)))),
        ("dp_table", DoublePhase(2.0, 2.5, tab, alpha=1.0)),
        ("dp2d", DoublePhase(2.0, 2.4, Power(1.0, 0.5, axis=0), dim=2)),
        ("vedp", VariableExponentDoublePhase(Affine(2.0, (0.1,)), Affine(2.4, (0.1,)),
                                             Power(1.0, 0.5), alpha=0.5)),
        ("multi", MultiPhase(2.0, (2.3, 2.5), (Power(1.0, 0.4), Bump(0.5, 0.3, (0.5,))))),
        ("orlicz", OrliczDoublePhase(Young("power_log", 2.0, -1.0), Young("power_log", 2.0, 1.0),
                                     LogModulus(0.5, 2.0), {"kind": "log", "beta": 2.0, "c": 0.5})),
        ("ortho", Orthotropic((DoublePhase(1.5, 1.7, Power(1.0, 0.3, axis=0), dim=2, gdim=1),
                               VariableExponent(Affine(2.0, (0.0, 1.0)), dim=2, gdim=1)), dim=2)),
        ("xi_young", XIndependent("young", Young("power", 2.0), dim=2)),
        ("xi_exp", XIndependent("young", Young("exp"))),
        ("xi_aniso", XIndependent("aniso_power", exponents=(2.0, 3.0), dim=2)),
        ("custom", Custom(__import__("_callbacks").square_log, Young("power", 2.0),
                          Young("power_log", 2.0, 1.0), ref="_callbacks:square_log")),
    ]


FAMILY_IDS = [name for name, _ in all_families()]


@pytest.fixture(params=all_families(), ids=FAMILY_IDS)
def family(request):
    return request.param[1]


@pytest.fixture(autouse=True)
def _quiet_resolution_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=ResolutionWarning)
        yield


# one summary line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
