import warnings

import numpy as np
import pytest

from lavlab.coefficients import Affine, Bump, Power
from lavlab.errors import NumericalError, ParameterError, UnsupportedFamilyError
from lavlab.geometry import Grid, ScalarField, StarDomain
from lavlab.energy import (BoundaryData, Integrand, custom_integrand, double_phase_with_b,
                           energy, energy_gradient, gap_probe, integrand_from_dict,
                           make_problem, minimize, multi_phase_aniso, plain_M, sandwich_verify)
from lavlab.nfunc import DoublePhase, power_nfunction

from _callbacks import shifted_square_integrand


def coord(grid):
    return ScalarField.from_function(grid, lambda p: p[..., 0])


def bumped(grid, height=0.3):
    b = Bump(1.0, 0.35, (0.5, 0.5))
    return ScalarField.from_function(grid, lambda p: p[..., 0] + height * b(p))


def builtin_integrands():
    M2 = DoublePhase(2.0, 2.4, Power(1.0, 0.5, axis=0), dim=2)
    return [
        ("plain", plain_M(power_nfunction(2.0, dim=2))),
        ("plain_dp", plain_M(M2)),
        ("dp_one", double_phase_with_b(2.0, 2.4, Power(1.0, 0.5, axis=0))),
        ("dp_sin2", double_phase_with_b(2.0, 2.4, Power(1.0, 0.5, axis=0), b="sin2")),
        ("dp_xdecay", double_phase_with_b(2.0, 2.4, Power(1.0, 0.5, axis=0), b="xdecay")),
        ("multi", multi_phase_aniso((2.0, 2.0), (2.3, 2.4),
                                    (Power(1.0, 0.4, axis=0), Power(1.0, 0.5, axis=1)))),
        ("custom", custom_integrand(shifted_square_integrand, power_nfunction(2.0, dim=2),
                                    0.75, 1.0, 1.25, ref="_callbacks:shifted_square_integrand")),
    ]


INTEGRANDS = builtin_integrands()
IDS = [n for n, _ in INTEGRANDS]


# -- evaluation ---------------------------------------------------------------------------

def test_energy_examples():
    g = Grid.uniform(16, 2)
    assert energy(plain_M(power_nfunction(2.0, dim=2)), coord(g)) == pytest.approx(1.0, abs=1e-12)
    F = double_phase_with_b(2.0, 3.0, Affine(0.0, (1.0, 0.0)))
    assert energy(F, coord(g)) == pytest.approx(1.5, abs=1e-12)
    const = ScalarField(g, np.full(g.counts, 0.7))
    assert energy(F, const) == 0.0


def test_energy_names_the_bad_cell():
    g = Grid.uniform(4, 2)
    F = custom_integrand(lambda x, z, xi: np.where(x[..., 0] > 0.8, np.inf, 1.0),
                         power_nfunction(2.0, dim=2), 1.0, 1.0, 1.0)
    with pytest.raises(NumericalError, match="cell"):
        energy(F, coord(g))


def test_integrand_validation():
    M = power_nfunction(2.0)
    with pytest.raises(ParameterError):
        Integrand("quartic", M)
    with pytest.raises(ParameterError):
        Integrand("plain_M", M, b="cos")
    with pytest.raises(ParameterError):
        Integrand("plain_M", M, nu=0.0)
    with pytest.raises(UnsupportedFamilyError):
        Integrand("custom", M, func=lambda x, z, xi: xi[..., 0] ** 2).to_dict()


@pytest.mark.parametrize("name,F", INTEGRANDS, ids=IDS)
def test_integrand_round_trip(name, F):
    back = integrand_from_dict(F.to_dict())
    rng = np.random.default_rng(0)
    x, z, xi = rng.random((20, 2)), rng.standard_normal(20), rng.standard_normal((20, 2))
    np.testing.assert_array_equal(back(x, z, xi), F(x, z, xi))


# -- sandwich -----------------------------------------------------------------------------------

@pytest.mark.parametrize("name,F", INTEGRANDS, ids=IDS)
def test_sandwich_holds_for_builtins(name, F):
    assert sandwich_verify(F) == 0.0


def test_halved_upper_constant_is_caught():
    F = double_phase_with_b(2.0, 2.4, Power(1.0, 0.5, axis=0), b="sin2")
    broken = Integrand(F.kind, F.M, F.b, F.nu, F.beta, 0.5 * F.L)
    assert sandwich_verify(broken) > 0.0


@pytest.mark.parametrize("name,F", INTEGRANDS, ids=IDS)
def test_energy_respects_the_sandwich(name, F):
    g = Grid.uniform(24, 2)
    rng = np.random.default_rng(1)
    ref = plain_M(F.M)
    for _ in range(5):
        u = ScalarField(g, 2.0 * rng.standard_normal(g.counts))
        e = energy(F, u)
        assert F.nu * energy(ref, u * F.beta) <= e * (1 + 1e-12)
        assert e <= F.L * (energy(ref, u) + 1.0) * (1 + 1e-12)


# -- gradient and minimization -------------------------------------------------------------------

@pytest.mark.parametrize("name,F", INTEGRANDS, ids=IDS)
def test_gradient_matches_central_differences(name, F):
    g = Grid.uniform(16, 2)
    rng = np.random.default_rng(2)
    u = ScalarField(g, rng.standard_normal(g.counts))
    grad = energy_gradient(F, u)
    h = 1e-5
    for _ in range(10):
        d = rng.standard_normal(g.counts)
        fd = (energy(F, u + ScalarField(g, h * d)) - energy(F, u - ScalarField(g, h * d))) / (2 * h)
        an = float(np.sum(grad * d))
        assert abs(an - fd) <= 1e-5 * max(1.0, abs(fd))


def test_affine_data_minimizes_dirichlet_energy():
    g = Grid.uniform(24, 2)
    u0 = coord(g)
    start = ScalarField(g, np.where(g.boundary_mask(), u0.values, 0.0))
    res = minimize(plain_M(power_nfunction(2.0, dim=2)), BoundaryData(u0), u_init=start)
    assert res.energy == pytest.approx(1.0, abs=1e-3)
    np.testing.assert_allclose(res.u_min.values, u0.values, atol=1e-4)


def test_one_dimensional_quartic_has_linear_minimizer():
    g = Grid.uniform(64)
    u0 = ScalarField.from_function(g, lambda p: p[..., 0] ** 3)
    res = minimize(plain_M(power_nfunction(4.0)), BoundaryData(u0))
    assert res.energy == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(res.u_min.values, g.points()[..., 0], atol=1e-5)


@pytest.mark.parametrize("name,F", INTEGRANDS, ids=IDS)
def test_minimize_history_is_monotone(name, F):
    g = Grid.uniform(16, 2)
    u0 = bumped(g)
    res = minimize(F, BoundaryData(u0), iters=200)
    h = np.asarray(res.history)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))
    assert res.energy <= energy(F, u0) + 1e-12


def test_boundary_values_are_clamped():
    g = Grid.uniform(16, 2)
    u0 = bumped(g)
    res = minimize(INTEGRANDS[2][1], BoundaryData(u0))
    b = g.boundary_mask()
    np.testing.assert_array_equal(res.u_min.values[b], u0.values[b])


def test_minimize_on_an_l_shape_keeps_outside_nodes():
    L = StarDomain.lshape()
    g = L.grid(16)
    u0 = ScalarField.from_function(g, lambda p: p[..., 0] + p[..., 1])
    res = minimize(plain_M(power_nfunction(2.0, dim=2)), BoundaryData(u0, domain=L))
    prob = make_problem(g, L)
    np.testing.assert_array_equal(res.u_min.values[~prob.free], u0.values[~prob.free])
    assert res.energy == pytest.approx(2.0 * 3.0, rel=1e-6)


def test_boundary_data_records_holder_seminorm():
    g = Grid.uniform(16, 2)
    bc = BoundaryData(coord(g), "holder", 0.5)
    assert bc.holder > 0
    with pytest.raises(ParameterError):
        BoundaryData(coord(g), "holder")
    with pytest.raises(ParameterError):
        BoundaryData(coord(g), "smooth")


@pytest.mark.slow
def test_double_phase_energy_against_fine_grid():
    F = double_phase_with_b(2.0, 2.4, Power(1.0, 0.4, axis=0))

    def run(n):
        g = Grid.uniform(n, 2)
        return minimize(F, BoundaryData(bumped(g)), iters=2000).energy

    assert run(64) == pytest.approx(run(256), rel=0.02)


@pytest.mark.parametrize("name", ["plain", "dp_one", "multi"])
def test_discrete_minimum_is_mesh_stable(name):
    F = dict(INTEGRANDS)[name]

    def run(n):
        g = Grid.uniform(n, 2)
        return minimize(F, BoundaryData(bumped(g)), iters=2000).energy

    assert run(32) == pytest.approx(run(64), rel=0.03)


# -- custom integrands ------------------------------------------------------------------------

def test_non_convex_custom_integrand_warns():
    with pytest.warns(RuntimeWarning, match="convex"):
        custom_integrand(lambda x, z, xi: np.sin(3 * xi[..., 0]) ** 2 + 0 * z,
                         power_nfunction(2.0, dim=2), 1e-3, 1.0, 10.0)


def test_custom_partials_fall_back_to_differences():
    F = custom_integrand(shifted_square_integrand, power_nfunction(2.0, dim=2), 0.75, 1.0, 1.25)
    x, z, xi = np.array([[0.3, 0.4]]), np.array([0.7]), np.array([[1.0, -2.0]])
    dz, dxi = F.partials(x, z, xi)
    assert dz[0] == pytest.approx(-0.25 * np.sin(0.7) * 5.0, rel=1e-5)
    np.testing.assert_allclose(dxi[0], 2 * (1 + 0.25 * np.cos(0.7)) * xi[0], rtol=1e-5)


# -- gap probe ----------------------------------------------------------------------------------

def test_gap_probe_on_affine_data():
    g = Grid.uniform(32, 2)
    rep = gap_probe(plain_M(power_nfunction(2.0, dim=2)), BoundaryData(coord(g)), 0.0,
                    run_balance=False)
    assert rep.relative_gap <= 0.01 and rep.verdict == "no_gap_witnessed"
    assert rep.relative_gap >= -1e-8


def test_gap_probe_on_double_phase():
    g = Grid.uniform(48, 2)
    F = double_phase_with_b(2.0, 2.4, Power(1.0, 0.5, axis=0), alpha=0.5)
    rep = gap_probe(F, BoundaryData(bumped(g), "holder", 0.5), 0.0)
    assert rep.balance.verdict == "holds" and "condition_violated" not in rep.flags
    assert rep.verdict == "no_gap_witnessed"
    e = rep.smooth_sequence_energies.values
    assert abs(e[-1] - e[-2]) <= 0.05 * e[-1]
    assert set(rep.to_dict()) >= {"discrete_min_energy", "relative_gap", "verdict", "balance"}


def test_gap_probe_on_anisotropic_multi_phase():
    g = Grid.uniform(48, 2)
    F = multi_phase_aniso((2.0, 2.0), (2.3, 2.4), (Power(1.0, 0.4, axis=0), Power(1.0, 0.5, axis=1)))
    rep = gap_probe(F, BoundaryData(bumped(g)), 0.0)
    assert rep.balance.verdict == "holds"
    assert rep.verdict == "no_gap_witnessed"


def test_gap_probe_flags_a_violated_condition():
    g = Grid.uniform(24, 2)
    F = double_phase_with_b(2.0, 3.2, Power(1.0, 0.3, axis=0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = gap_probe(F, BoundaryData(bumped(g)), 0.0)
    assert "condition_violated" in rep.flags
    assert rep.meta["no_gap_tol"] == 0.05
