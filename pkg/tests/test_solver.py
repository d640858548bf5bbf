import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reactms import CoefficientCache, KernelSpec, PowerFactor, mass_action_ratio
from reactms.coefficients import AngularPower
from reactms.errors import DomainError, NumericalError, StiffnessError
from reactms.mixture import partition_q, partition_qstar
from reactms.solver import (
    Grid1D,
    MixtureState,
    advance_1d,
    chemistry_timescale,
    chemical_step,
    diffuse_1d,
    energy_density,
    equilibrium_residual,
    ms_matrix,
    production_rate,
    relax_0d,
    solve_fluxes,
    stable_dt,
    temperature_from_energy,
    uniform_state,
)
from reactms.coefficients import ms_rhs

from conftest import make_reaction

D = np.array([[np.inf, 0.8, 1.3, 0.6], [0.8, np.inf, 0.9, 1.7], [1.3, 0.9, np.inf, 0.5], [0.6, 1.7, 0.5, np.inf]])
MASSES = np.array([1.0, 3.0, 2.0, 2.0])


@pytest.fixture
def cache(reaction, kernel):
    return CoefficientCache(reaction, kernel)


def on_manifold(reaction, n123, T):
    n = np.array([*n123, 0.0])
    n[3] = n[0] * n[1] / (n[2] * mass_action_ratio(reaction, T))
    return n


def entropy(reaction, n, T):
    """Ideal-mixture entropy including the internal-energy contribution."""
    kT = reaction.constants.k_B * T
    total = 0.0
    for s, ni in zip(reaction.species, n):
        if ni > 0:
            q = partition_q(s, T, reaction.constants)
            qs = partition_qstar(s, T, reaction.constants)
            total += ni * (math.log(q * (s.mass * kT) ** 1.5 / ni) + 2.5 + qs / (q * kT))
    return total


# -- flux inversion -------------------------------------------------------------


def test_binary_fick_limit():
    n = np.array([0.3, 1.1, 0.0, 0.0])
    g = np.array([0.25, -0.25, 0.0, 0.0])
    sol = solve_fluxes(g, n, D, "zero_molar_flux")
    J1 = -D[0, 1] * g[0] / (n[0] + n[1])
    assert sol.J == pytest.approx([J1, -J1, 0.0, 0.0], abs=1e-12 * abs(J1))
    assert sol.residual <= 1e-12


def test_binary_fick_limit_zero_mass_flux():
    n = np.array([0.3, 1.1, 0.0, 0.0])
    g = np.array([0.25, -0.25, 0.0, 0.0])
    sol = solve_fluxes(g, n, D, "zero_mass_flux", MASSES)
    m1, m2 = MASSES[:2]
    # m1 J1 + m2 J2 = 0 and g1 = -(n2 J1 - n1 J2) / D12
    J1 = -g[0] * D[0, 1] / (n[1] + n[0] * m1 / m2)
    assert sol.J[0] == pytest.approx(J1, rel=1e-12)
    assert sol.J[1] == pytest.approx(-m1 * J1 / m2, rel=1e-12)


def test_fluxes_satisfy_relations_and_closure():
    rng = np.random.default_rng(4)
    g = rng.normal(size=(50, 4))
    g -= g.mean(axis=1, keepdims=True)
    n = rng.uniform(0.1, 2.0, size=(50, 4))
    for closure, w in (("zero_molar_flux", np.ones(4)), ("zero_mass_flux", MASSES)):
        sol = solve_fluxes(g, n, D, closure, MASSES)
        assert sol.residual <= 1e-10
        assert np.max(np.abs(sol.J @ w)) <= 1e-14 * np.max(np.abs(sol.J))
        assert sol.projection_norm <= 1e-15
        back = np.stack([ms_rhs(n[f], D, sol.J[f]) for f in range(50)])
        assert np.allclose(back, g, rtol=0, atol=1e-12)


def test_null_direction_shift_leaves_residual_unchanged():
    n = np.array([0.4, 0.9, 1.3, 0.2])
    g = np.array([0.3, -0.1, 0.05, -0.25])
    J = solve_fluxes(g, n, D, "zero_molar_flux").J
    base = ms_rhs(n, D, J) - g
    for c in (0.5, -3.0, 100.0):
        shifted = ms_rhs(n, D, J + c * n) - g
        assert np.allclose(shifted, base, atol=1e-13 * (1 + abs(c)))


def test_non_isobaric_gradient_is_projected():
    sol = solve_fluxes([1.0, 0.0, 0.0, 0.0], [1, 1, 1, 1], D, "zero_molar_flux")
    assert sol.projection_norm == pytest.approx(0.5)
    assert sol.residual <= 1e-12


def test_vacuum_species_get_zero_flux():
    n = np.array([[0.5, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    g = np.array([[0.1, 0.0, -0.1, 0.0], [0.0, 0.0, 0.0, 0.0]])
    J = solve_fluxes(g, n, D, "zero_molar_flux").J
    assert J[0, 1] == 0 and J[0, 3] == 0
    assert np.all(J[1] == 0)


def test_flux_errors():
    with pytest.raises(DomainError):
        solve_fluxes([0, 0, 0, 0], [1, 1, 1, 1], D, "zero_mass_flux")
    with pytest.raises(DomainError):
        solve_fluxes([0, 0, 0, 0], [1, 1, 1, 1], D, "barycentric", MASSES)
    with pytest.raises(DomainError):
        solve_fluxes([0, 0, 0, 0], [1, -1, 1, 1], D, "zero_molar_flux")


def test_ms_matrix_matches_rhs():
    n = np.array([0.4, 0.9, 1.3, 0.2])
    J = np.array([0.1, -0.3, 0.2, 0.05])
    assert ms_matrix(n, D) @ J == pytest.approx(ms_rhs(n, D, J), abs=1e-15)


# -- energy and temperature -------------------------------------------------------


def test_polytropic_energy_law(reaction):
    n = np.array([0.5, 1.0, 0.7, 0.3])
    for T in (0.5, 1.0, 2.0, 10.0):
        expected = sum(ni * (2.5 + a) * T for ni, a in zip(n, (1, 0, 0, 1)))
        assert energy_density(reaction, n, np.array(T)) == pytest.approx(expected, rel=1e-13)


def test_temperature_inversion_roundtrip(reaction):
    n = np.array([[0.5, 1.0, 0.7, 0.3], [1.0, 0.0, 0.0, 0.1]])
    T = np.array([0.7, 3.0])
    assert temperature_from_energy(reaction, n, energy_density(reaction, n, T)) == pytest.approx(T, rel=1e-14)


def test_temperature_inversion_tabulated():
    from reactms import SpeciesParams, TabulatedWeight, ReactionSpec

    grid = np.linspace(0.0, 60.0, 601)
    tab = SpeciesParams(2.0, 0.0, TabulatedWeight(grid, np.sqrt(grid) + 0.5))
    r = ReactionSpec((tab, SpeciesParams(1.0), SpeciesParams(1.5), SpeciesParams(1.5)))
    n = np.array([0.4, 0.6, 0.2, 0.2])
    e = energy_density(r, n, np.array(1.7))
    assert temperature_from_energy(r, n, e)[0] == pytest.approx(1.7, rel=1e-12)


def test_temperature_errors(reaction):
    with pytest.raises(DomainError):
        temperature_from_energy(reaction, [0, 0, 0, 0], [1.0])
    with pytest.raises(DomainError):
        temperature_from_energy(reaction, [1, 1, 1, 1], [0.0])


# -- chemistry --------------------------------------------------------------------


def test_equilibrium_is_a_fixed_point(reaction, cache):
    n = on_manifold(reaction, (0.7, 1.9, 1.1), 1.2)
    res = chemical_step(reaction, cache, n, 1.2, 0.5)
    assert np.allclose(res.n, n, rtol=1e-13, atol=0)
    assert abs(res.extent[0]) <= 1e-14


def test_chemical_step_conserves_partial_sums(reaction, cache):
    n = np.array([[1.0, 0.8, 0.1, 0.2], [0.2, 0.1, 1.3, 0.9]])
    T = np.array([1.0, 2.0])
    res = chemical_step(reaction, cache, n, T, 0.01)
    for a, b in ((0, 2), (0, 3), (1, 2)):
        assert np.allclose(res.n[:, a] + res.n[:, b], n[:, a] + n[:, b], rtol=2e-16, atol=0)
    e0 = energy_density(reaction, n, T)
    assert res.e == pytest.approx(e0 - reaction.heat * res.extent, rel=1e-15)
    assert np.sign(res.extent[0]) == np.sign(res.production[0])


def test_zero_heat_with_matched_capacity_keeps_temperature(kernel):
    r = make_reaction(alphas=(1, 0, 0, 1))
    cache = CoefficientCache(r, kernel)
    res = chemical_step(r, cache, [1.0, 0.8, 0.1, 0.2], 1.3, 0.05)
    assert res.T[0] == pytest.approx(1.3, rel=1e-14)


def test_huge_step_is_halved(reaction, cache):
    n = np.array([1.0, 0.8, 1e-3, 1e-3])
    res = chemical_step(reaction, cache, n, 1.0, 50.0)
    assert res.substeps > 1
    assert np.all(res.n >= 0)


def test_stiffness_error_when_halving_underflows(reaction, kernel):
    fast = KernelSpec(gamma=2.0, phi_react=PowerFactor(1e15))
    cache = CoefficientCache(reaction, fast)
    with pytest.raises(StiffnessError):
        chemical_step(reaction, cache, [1.0, 0.8, 1e-300, 1e-300], 1.0, 1.0)


def test_implicit_step_reaches_equilibrium_with_huge_dt(reaction, kernel):
    fast = KernelSpec(gamma=2.0, phi_react=PowerFactor(1e15))
    cache = CoefficientCache(reaction, fast)
    res = chemical_step(reaction, cache, [1.0, 0.8, 0.2, 0.3], 1.0, 1.0, implicit=True)
    assert equilibrium_residual(reaction, res.n, res.T)[0] < 1e-10
    assert res.e[0] == pytest.approx(energy_density(reaction, res.n, res.T)[0], rel=1e-14)


def test_production_rate_vanishes_on_manifold(reaction, cache):
    n = on_manifold(reaction, (0.4, 1.1, 0.9), 2.3)
    assert abs(production_rate(reaction, cache, n, 2.3)[0]) <= 1e-15


def test_chemical_step_validates_dt(reaction, cache):
    with pytest.raises(DomainError):
        chemical_step(reaction, cache, [1, 1, 1, 1], 1.0, 0.0)


# -- 0D relaxation -------------------------------------------------------------------


@pytest.mark.parametrize("implicit", [False, True])
def test_relaxation_converges_and_conserves(reaction, cache, implicit):
    n0 = np.array([1.0, 0.8, 0.1, 0.2])
    tau = chemistry_timescale(reaction, cache, n0, 1.0)
    traj = relax_0d(reaction, cache, n0, 1.0, 40 * tau, implicit=implicit, output_every=10)
    last = traj.states[-1]
    assert equilibrium_residual(reaction, last.n, last.T)[0] < 1e-8
    first_totals = traj.states[0].partial_totals()
    assert np.allclose(last.partial_totals(), first_totals, rtol=2e-16, atol=0)
    assert traj.max_energy_defect <= 1e-13


def test_entropy_grows_along_relaxation(reaction, cache):
    rng = np.random.default_rng(21)
    for _ in range(20):
        n0 = rng.uniform(0.05, 2.0, 4)
        T0 = rng.uniform(0.5, 3.0)
        traj = relax_0d(reaction, cache, n0, T0, 5.0)
        S = [entropy(reaction, s.n[0], s.T[0]) for s in traj.states]
        assert np.all(np.diff(S) >= -1e-12 * np.abs(S[1:]))


def test_fixed_dt_relaxation(reaction, cache):
    traj = relax_0d(reaction, cache, [1.0, 0.8, 0.1, 0.2], 1.0, 1.0, dt=0.1)
    assert traj.steps == 10
    assert traj.times[-1] == pytest.approx(1.0)


# -- 1D transport ------------------------------------------------------------------


def test_uniform_equilibrium_is_stationary(reaction, cache):
    n = on_manifold(reaction, (0.7, 1.9, 1.1), 1.2)
    state = uniform_state(n, 1.2, 8)
    grid = Grid1D(8, 0.1)
    dt = 0.5 * stable_dt(reaction, cache, state, grid)
    rep = advance_1d(reaction, cache, state, dt, grid)
    assert np.allclose(rep.state.n, state.n, rtol=1e-13, atol=0)
    assert np.allclose(rep.state.T, state.T, rtol=1e-14, atol=0)
    assert np.all(rep.state.J == 0)


def test_uniform_state_matches_0d_chemistry(reaction, cache):
    n0 = np.array([1.0, 0.8, 0.1, 0.2])
    state = uniform_state(n0, 1.0, 5)
    grid = Grid1D(5, 0.2)
    dt = 0.5 * stable_dt(reaction, cache, state, grid)
    rep = advance_1d(reaction, cache, state, dt, grid)
    zero_d = chemical_step(reaction, cache, n0, 1.0, dt)
    assert np.allclose(rep.state.n, zero_d.n, rtol=1e-15, atol=0)


def test_step_above_stability_limit_is_rejected(reaction, cache):
    state = uniform_state([1.0, 0.8, 0.1, 0.2], 1.0, 4)
    grid = Grid1D(4, 0.1)
    with pytest.raises(NumericalError):
        advance_1d(reaction, cache, state, 2 * stable_dt(reaction, cache, state, grid), grid)


def test_single_cell_has_no_transport(reaction, cache):
    state = uniform_state([1.0, 0.8, 0.1, 0.2], 1.0, 1)
    assert stable_dt(reaction, cache, state, Grid1D(1, 1.0)) == math.inf


def test_diffusion_conserves_domain_totals(reaction, cache):
    cells = 16
    x = (np.arange(cells) + 0.5) / cells
    bump = 0.3 * np.exp(-((x - 0.4) ** 2) / 0.01)
    n = np.column_stack([1 + bump, 1 - bump, np.full(cells, 0.6), np.full(cells, 0.8)])
    state = MixtureState(n, np.full(cells, 1.0))
    grid = Grid1D(cells, 1.0 / cells)
    traj = diffuse_1d(reaction, cache, state, grid, 0.05, closure="zero_molar_flux", output_every=1000)
    first, last = traj.states[0], traj.states[-1]
    assert np.allclose(last.partial_totals(), first.partial_totals(), rtol=1e-13, atol=0)
    assert np.ptp(last.n[:, 0]) < np.ptp(first.n[:, 0])
    assert traj.max_flux_residual <= 1e-10
    e_tot = lambda s: np.sum(energy_density(reaction, s.n, s.T)) + reaction.heat * s.n[:, 2].sum()  # noqa: E731
    assert e_tot(last) == pytest.approx(e_tot(first), rel=1e-13)


def test_grid_and_state_validation():
    with pytest.raises(DomainError):
        Grid1D(0, 1.0)
    with pytest.raises(DomainError):
        Grid1D(4, 1.0, boundary="periodic")
    with pytest.raises(DomainError):
        MixtureState(np.ones((3, 4)), np.ones(2))
    with pytest.raises(DomainError):
        MixtureState(np.ones((3, 4)), np.array([1.0, -1.0, 1.0]))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.05, 3.0), min_size=4, max_size=4),
    st.floats(0.3, 5.0),
    st.floats(1e-4, 0.5),
)
def test_explicit_step_keeps_totals_and_energy(ns, T, dt):
    reaction = make_reaction(binding=(0.0, 0.0, 0.6, 0.0), alphas=(1, 0, 0, 1))
    cache = CoefficientCache(reaction, KernelSpec(gamma=2.0, b_react=AngularPower(1.0, 0.5)))
    n = np.array(ns)
    res = chemical_step(reaction, cache, n, T, dt)
    assert np.all(res.n >= 0)
    for a, b in ((0, 2), (0, 3), (1, 2)):
        assert res.n[0, a] + res.n[0, b] == pytest.approx(n[a] + n[b], rel=1e-13)
    assert res.e[0] == pytest.approx(energy_density(reaction, n, np.array(T)) - reaction.heat * res.extent[0], rel=1e-13)
