import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lavlab.balance import (Ball, BalanceCondition, ball_samples, check_balance,
                            closed_form_bound, hasto_envelope_check, m_minus, m_plus)
from lavlab.coefficients import Affine, LogModulus, Power, Young
from lavlab.errors import DomainError, ParameterError, UnsupportedFamilyError
from lavlab.nfunc import (Custom, DoublePhase, MultiPhase, NFunction, OrliczDoublePhase,
                          Orthotropic, VariableExponent, VariableExponentDoublePhase,
                          XIndependent, power_nfunction)

from conftest import all_families

DP_GOOD = DoublePhase(2.0, 2.4, Power(1.0, 0.5))
DP_BAD = DoublePhase(2.0, 3.0, Power(1.0, 0.5))
ISO0 = BalanceCondition("iso", 0.0)


@dataclass(frozen=True)
class Scaled(NFunction):
    """k * M, used only to test scaling behaviour of the checker."""

    base: NFunction = None
    k: float = 1.0
    family = "Scaled"

    def __post_init__(self):
        object.__setattr__(self, "dim", self.base.dim)
        object.__setattr__(self, "lower", self.base.lower)
        object.__setattr__(self, "upper", self.base.upper)

    @property
    def grad_dim(self):
        return self.base.grad_dim

    def __call__(self, x, xi):
        return self.k * self.base(x, xi)

    def m1(self, t):
        return self.k * self.base.m1(t)

    def m2(self, t):
        return self.k * self.base.m2(t)

    def coefficient_centers(self):
        return self.base.coefficient_centers()


# -- envelopes ---------------------------------------------------------------------------

def test_envelopes_of_x_independent():
    M = power_nfunction(2.0)
    B = Ball((0.3,), 0.2)
    assert m_minus(M, B, [1.5]) == pytest.approx(2.25) and m_plus(M, B, [1.5]) == pytest.approx(2.25)


def test_envelopes_of_double_phase():
    M = DoublePhase(2.0, 3.0, Affine(0.0, (1.0,)))
    B = Ball((0.5,), 0.1)
    assert m_minus(M, B, [2.0]) == pytest.approx(7.2, abs=1e-12)
    assert m_plus(M, B, [2.0]) == pytest.approx(8.8, abs=1e-12)


def test_envelope_of_variable_exponent_matches_grid_oracle():
    M = VariableExponent(Affine(2.0, (1.0,)))
    ys = np.linspace(0.0, 0.2, 10_001)
    oracle = float(np.min(3.0 ** (2.0 + ys)))
    assert m_minus(M, Ball((0.1,), 0.1), [3.0]) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(9.0)


def test_envelope_of_multi_phase_matches_grid_oracle():
    M = MultiPhase(2.0, (2.5,), (Power(1.0, 0.5),))
    ys = np.linspace(0.0, 0.1, 10_001)
    oracle = float(np.max(1.0 + np.sqrt(ys)))
    assert m_plus(M, Ball((0.05,), 0.05), [1.0]) == pytest.approx(oracle, abs=1e-12)


def test_ball_outside_domain():
    with pytest.raises(DomainError):
        ball_samples(power_nfunction(2.0), Ball((3.0,), 0.5))
    with pytest.raises(ParameterError):
        Ball((0.5,), 1.5)


def test_envelopes_sandwich_samples(family):
    rng = np.random.default_rng(0)
    lo, hi = np.asarray(family.lower), np.asarray(family.upper)
    c = lo + (hi - lo) * rng.random(family.dim)
    B = Ball(tuple(c), 0.1)
    xi = 2.0 * rng.standard_normal(family.grad_dim)
    Y = ball_samples(family, B)
    vals = family(Y, np.broadcast_to(xi, (len(Y), family.grad_dim)))
    assert np.all(m_minus(family, B, xi) <= vals + 1e-12)
    assert np.all(vals <= m_plus(family, B, xi) + 1e-12)


@given(st.floats(0.2, 0.8), st.floats(0.01, 0.2), st.floats(1.0, 3.0), st.floats(0.1, 3.0))
def test_envelopes_are_monotone_in_the_ball(c, r, grow, t):
    M = DoublePhase(2.0, 2.6, Power(1.0, 0.5, 0.0, (0.5,)))
    small, big = Ball((c,), r), Ball((c,), min(1.0, r * grow))
    assert m_minus(M, big, [t]) <= m_minus(M, small, [t]) + 1e-12
    assert m_plus(M, big, [t]) >= m_plus(M, small, [t]) - 1e-12


# -- numeric checker ---------------------------------------------------------------------

def test_condition_validation():
    with pytest.raises(ParameterError):
        BalanceCondition("sideways")
    with pytest.raises(ParameterError):
        BalanceCondition("iso", 1.5)
    with pytest.raises(ParameterError):
        BalanceCondition("iso", 0.0, c_diamond=0.5)


def test_x_independent_holds_with_unit_constant():
    rep = check_balance(power_nfunction(2.0, dim=2), ISO0)
    assert rep.verdict == "holds"
    assert all(C == 1.0 for _, C, _ in rep.table)


def test_double_phase_within_range_holds():
    assert check_balance(DP_GOOD, ISO0).verdict == "holds"


def test_double_phase_outside_range_fails_with_expected_slope():
    rep = check_balance(DP_BAD, ISO0)
    assert rep.verdict == "fails"
    assert rep.divergence_slope == pytest.approx(0.5, abs=0.05)


def test_double_phase_at_the_critical_gamma_holds():
    assert check_balance(DP_BAD, BalanceCondition("iso", 0.5)).verdict == "holds"


@pytest.mark.parametrize("variant", ["gen", "gen_plus"])
def test_gen_variants_separate_good_and_bad(variant):
    good = check_balance(DP_GOOD, BalanceCondition(variant, 0.0))
    bad = check_balance(DoublePhase(2.0, 3.2, Power(1.0, 0.5)), BalanceCondition(variant, 0.0))
    assert good.verdict == "holds" and bad.verdict == "fails"


def test_ort_on_unsplit_vector_function_is_unsupported():
    M = DoublePhase(2.0, 2.4, Power(1.0, 0.5, axis=0), dim=2)
    with pytest.raises(UnsupportedFamilyError):
        check_balance(M, BalanceCondition("ort", 0.0))


def test_report_serializes_infinite_constants():
    rep = check_balance(DP_GOOD, ISO0, r_grid=[0.1, 0.05, 0.025])
    d = rep.to_dict()
    assert set(d) >= {"verdict", "C_diamond", "divergence_slope", "table", "meta"}
    assert len(d["table"]) == 3


@pytest.mark.parametrize("gap,alpha", [(0.2, 0.5), (0.45, 0.3), (0.8, 0.5), (1.2, 0.6)])
def test_verdicts_respect_gamma_monotonicity(gap, alpha):
    M = DoublePhase(2.0, 2.0 + gap, Power(1.0, alpha), alpha=alpha)
    seen_hold = False
    for g in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = check_balance(M, BalanceCondition("iso", g)).verdict
        if seen_hold:
            assert v == "holds", (g, v)
        seen_hold = seen_hold or v == "holds"
    assert seen_hold


@pytest.mark.parametrize("gap,gamma", [(0.3, 0.0), (0.7, 0.0), (0.6, 0.5), (1.3, 0.5)])
def test_scaling_by_a_constant_keeps_the_verdict(gap, gamma):
    M = DoublePhase(2.0, 2.0 + gap, Power(1.0, 0.5))
    cond = BalanceCondition("iso", gamma)
    verdicts = {check_balance(Scaled(base=M, k=k), cond).verdict for k in (1.0, 2.0, 10.0)}
    assert len(verdicts) == 1 and verdicts != {"inconclusive"}


# -- closed forms and agreement ---------------------------------------------------------------

def test_closed_form_examples():
    multi = MultiPhase(2.0, (2.3, 2.5), (Power(1.0, 0.4), Power(1.0, 0.5)))
    assert closed_form_bound(multi, ISO0).admissible
    ortho = Orthotropic((DoublePhase(1.5, 1.9, Power(1.0, 0.3, axis=0), dim=2, gdim=1),
                         DoublePhase(2.0, 2.2, Power(1.0, 0.3, axis=0), dim=2, gdim=1)), dim=2)
    assert not closed_form_bound(ortho, BalanceCondition("ort", 0.0)).admissible
    orl = OrliczDoublePhase(Young("power_log", 2.0, -1.0), Young("power_log", 2.0, 1.0),
                            LogModulus(1.0, 2.0))
    assert closed_form_bound(orl, ISO0).admissible
    cf = closed_form_bound(XIndependent("young", Young("power", 2.0)), ISO0)
    assert cf.admissible and cf.constant == 1.0


def test_closed_form_margin_is_the_exponent_gap():
    cf = closed_form_bound(DoublePhase(2.0, 3.0, Power(1.0, 0.5)), BalanceCondition("iso", 0.25))
    assert cf.margin == pytest.approx(2.0 + 0.5 / 0.75 - 3.0)
    assert not cf.admissible


def test_closed_form_rejects_custom():
    M = Custom(__import__("_callbacks").square_log, Young("power", 2.0),
               Young("power_log", 2.0, 1.0), ref="_callbacks:square_log")
    with pytest.raises(UnsupportedFamilyError):
        closed_form_bound(M, ISO0)


def _agreement_cases():
    out = [(name, M) for name, M in all_families() if name != "custom"]
    out += [
        ("dp_bad", DP_BAD),
        ("vedp_bad", VariableExponentDoublePhase(Affine(2.0, (0.1,)), Affine(2.9, (0.1,)),
                                                 Power(1.0, 0.5), alpha=0.5)),
        ("multi_bad", MultiPhase(2.0, (2.3, 2.9), (Power(1.0, 0.4), Power(1.0, 0.5)))),
        ("varexp_bad", VariableExponent(LogModulus(1.0, 0.5, 2.0))),
    ]
    return out


@pytest.mark.parametrize("name,M", _agreement_cases(), ids=[n for n, _ in _agreement_cases()])
def test_checker_agrees_with_closed_form(name, M):
    cond = BalanceCondition("ort" if isinstance(M, Orthotropic) else "iso", 0.0)
    cf = closed_form_bound(M, cond)
    rep = check_balance(M, cond)
    if abs(cf.margin) < 0.05:
        assert rep.verdict in ("holds" if cf.admissible else "fails", "inconclusive")
    else:
        assert rep.verdict == ("holds" if cf.admissible else "fails")


# -- envelope check -----------------------------------------------------------------------------

def test_envelope_defect_zero_for_x_independent():
    assert max(hasto_envelope_check(power_nfunction(2.0), 0.0)) == 0.0


@pytest.mark.parametrize("envelope", ["inf", "convex"])
def test_envelope_defect_zero_with_fitted_constant(envelope):
    rep = check_balance(DP_GOOD, ISO0)
    d = hasto_envelope_check(DP_GOOD, 0.0, C=rep.C_diamond, envelope=envelope)
    assert max(d) == 0.0


def test_envelope_defect_grows_when_the_condition_fails():
    r_grid = [0.25 * 2.0**-k for k in range(10)]
    d = hasto_envelope_check(DP_BAD, 0.0, r_grid)
    assert d[-1] > 0 and all(b >= a for a, b in zip(d, d[1:])) and d[-1] > 4 * d[3]


def test_envelope_rejects_unknown_mode():
    with pytest.raises(ParameterError):
        hasto_envelope_check(DP_GOOD, 0.0, [0.1], envelope="concave")
    assert math.isfinite(hasto_envelope_check(DP_GOOD, 0.0, [0.1])[0])
