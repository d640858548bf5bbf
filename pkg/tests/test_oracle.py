import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

from reactms import KernelSpec, PowerFactor, SpeciesParams, TabulatedWeight, compute_A, mass_action_ratio
from reactms.coefficients import AngularPower
from reactms.errors import DomainError, EstimateDegenerateError
from reactms.oracle import (
    Elastic,
    MaxwellianState,
    McConfig,
    McEstimate,
    Reactive,
    mc_chemical_rate_symmetry,
    mc_collision_invariants,
    mc_elastic_moment,
    mc_reactive_moment,
    reversibility_gap,
    sample_maxwellian_state,
)

from conftest import make_reaction

N = 200_000
STATE = MaxwellianState([1.2, 0.8, 0.5, 0.9], 1.3)


def reversible_setup():
    reaction = make_reaction(masses=(1, 3, 3, 1), binding=(0.5, 0.2, 0.4, 0.3), alphas=(2, 0, 1, 0))
    kern = KernelSpec(
        gamma=2.0,
        default_phi=PowerFactor(1.0, p_R=1.0),
        default_b=AngularPower(1.0, 1.0),
        phi_react=PowerFactor(1.0, 0.5, 0.5),
        b_react=AngularPower(1.0, 0.5),
    )
    return reaction, kern


def test_maxwellian_sampling_moments(rng):
    sp = SpeciesParams(2.0, 0.0, 2)
    u = np.array([0.3, -0.1, 0.0])
    v, I = sample_maxwellian_state(sp, 1.0, 1.7, rng, 400_000, u)
    assert np.allclose(v.mean(axis=0), u, atol=5 * math.sqrt(1.7 / 2.0 / 400_000))
    assert np.allclose(v.var(axis=0), 1.7 / 2.0, rtol=0.01)
    assert I.mean() == pytest.approx(3 * 1.7, rel=0.01)


def test_tabulated_sampling_mean(rng):
    grid = np.linspace(0.0, 30.0, 301)
    sp = SpeciesParams(1.0, 0.0, TabulatedWeight(grid, 1.0 + grid**2))
    _, I = sample_maxwellian_state(sp, 1.0, 1.0, rng, 200_000)
    num = integrate.quad(lambda x: x * (1 + x * x) * math.exp(-x), 0, 30)[0]
    den = integrate.quad(lambda x: (1 + x * x) * math.exp(-x), 0, 30)[0]
    assert I.mean() == pytest.approx(num / den, rel=0.01)


def test_sampling_rejects_empty_species(rng):
    with pytest.raises(DomainError):
        sample_maxwellian_state(SpeciesParams(1.0), 0.0, 1.0, rng, 10)


def test_reactive_moment_matches_closed_form(reaction, kernel):
    A = compute_A(reaction, kernel, STATE.n, STATE.T)
    for i in (2, 3):
        est = mc_reactive_moment(reaction, kernel, STATE, cfg=McConfig(N, seed=5, channel=Reactive(i)))
        assert abs(est.z_score(A)) < 4


def test_same_seed_is_bit_identical_across_threads(reaction, kernel):
    cfg = McConfig(100_000, seed=9, block_size=8192)
    a = mc_reactive_moment(reaction, kernel, STATE, cfg=cfg)
    b = mc_reactive_moment(reaction, kernel, STATE, cfg=replace(cfg, threads=4))
    c = mc_reactive_moment(reaction, kernel, STATE, cfg=replace(cfg, seed=10))
    assert a == b
    assert a.value != c.value


def test_standard_error_scales_as_inverse_root(reaction, kernel):
    small = mc_reactive_moment(reaction, kernel, STATE, cfg=McConfig(50_000, seed=2))
    large = mc_reactive_moment(reaction, kernel, STATE, cfg=McConfig(200_000, seed=2))
    assert large.standard_error == pytest.approx(small.standard_error / 2, rel=0.1)


def test_low_power_flag(reaction, kernel):
    assert mc_reactive_moment(reaction, kernel, STATE, cfg=McConfig(500)).low_power
    assert not mc_reactive_moment(reaction, kernel, STATE, cfg=McConfig(20_000)).low_power


def test_moment_vanishes_on_mass_action_manifold(reaction, kernel):
    T = 1.3
    n = np.array([1.2, 0.8, 0.5, 0.0])
    n[3] = n[0] * n[1] / (n[2] * mass_action_ratio(reaction, T))
    est = mc_reactive_moment(reaction, kernel, MaxwellianState(n, T), cfg=McConfig(N, seed=3))
    assert abs(est.z_score()) < 4


def test_elastic_number_moment_is_zero(reaction, kernel):
    for pair in [(0, 0), (0, 1), (2, 3)]:
        est = mc_elastic_moment(pair, kernel, STATE, cfg=McConfig(50_000, seed=4), reaction=reaction)
        assert abs(est.value) < 1e-10
        assert abs(est.z_score()) < 4


def drifted(u1, u2):
    u = np.zeros((4, 3))
    u[0, 0], u[1, 0] = u1, u2
    return MaxwellianState(STATE.n, STATE.T, u)


def speed_free(kern):
    # B without the |V| power is micro-reversible; gamma = 0 lies outside the
    # coefficient domain, so it is set directly for the oracle only.
    object.__setattr__(kern, "gamma", 0.0)
    return kern


def test_elastic_momentum_exchange_balances_in_pair_frame(reaction, kernel):
    m = reaction.masses
    state = drifted(0.4, -0.4 * m[0] / m[1])
    cfg = McConfig(N, seed=6, target_moment="momentum")
    forward = mc_elastic_moment((0, 1), kernel, state, cfg=cfg, reaction=reaction)
    backward = mc_elastic_moment((1, 0), kernel, state, cfg=cfg, reaction=reaction)
    # Species 1 drifts in +x and is slowed by species 2.
    assert forward.value[0] < 0 and abs(forward.z_score()[0]) > 10
    assert abs((forward + backward).z_score()[0]) < 4


def test_micro_reversible_kernel_balances_in_any_frame(reaction):
    kern = speed_free(KernelSpec())
    state = drifted(0.4, -0.4)
    for moment in ("mass", "momentum", "energy"):
        cfg = McConfig(N, seed=6, target_moment=moment)
        a = mc_elastic_moment((0, 1), kern, state, cfg=cfg, reaction=reaction)
        b = mc_elastic_moment((1, 0), kern, state, cfg=cfg, reaction=reaction)
        assert np.all(np.abs((a + b).z_score()) < 4), moment
    assert abs(mc_elastic_moment((0, 1), kern, state, cfg=McConfig(N, seed=7), reaction=reaction).z_score()) < 4


def test_speed_power_kernel_breaks_number_balance_under_drift(reaction, kernel):
    """The post-collision relative speed differs from the incoming one, so a
    |V|**gamma kernel with gamma >= 1 is not micro-reversible; unequal drifts
    expose it, a common drift does not."""
    cfg = McConfig(N, seed=6)
    shifted = mc_elastic_moment((0, 1), kernel, drifted(0.4, -0.4), cfg=cfg, reaction=reaction)
    common = mc_elastic_moment((0, 1), kernel, drifted(0.4, 0.4), cfg=cfg, reaction=reaction)
    assert abs(shifted.z_score()) > 10
    assert abs(common.value) < 1e-10


def test_rate_symmetry_on_reversible_state():
    reaction, kern = reversible_setup()
    rates = mc_chemical_rate_symmetry(reaction, kern, STATE, McConfig(N, seed=7))
    A = compute_A(reaction, kern, STATE.n, STATE.T)
    for est, sign in zip(rates, (-1, -1, 1, 1)):
        assert abs(est.z_score(sign * A)) < 4


def test_unequal_masses_give_the_predicted_ratio(kernel):
    reaction = make_reaction(masses=(1, 3, 2, 2))
    gap = reversibility_gap(reaction, kernel.gamma)
    assert gap == pytest.approx((3 / 4) ** -1)
    A = compute_A(reaction, kernel, STATE.n, STATE.T)
    est = mc_reactive_moment(reaction, kernel, STATE, cfg=McConfig(N, seed=8, channel=Reactive(0)))
    assert abs(est.z_score(-A * gap)) < 4
    assert abs(est.z_score(-A)) > 10


def test_gap_undefined_with_reaction_heat(reaction):
    assert reversibility_gap(reaction, 2.0) is None
    assert reversibility_gap(make_reaction(masses=(1, 3, 3, 1)), 1.0) == 1.0


def test_strict_backward_drops_subthreshold_samples(kernel):
    reaction = make_reaction(binding=(0.6, 0.0, 0.0, 0.0), alphas=(1, 0, 0, 1))
    A = compute_A(reaction, kernel, STATE.n, STATE.T)
    cfg = McConfig(N, seed=1, channel=Reactive(2))
    continued = mc_reactive_moment(reaction, kernel, STATE, cfg=cfg)
    strict = mc_reactive_moment(reaction, kernel, STATE, cfg=replace(cfg, strict_backward=True))
    assert continued.effective_samples == N
    assert strict.effective_samples < N
    assert abs(continued.z_score(A)) < 4
    assert strict.z_score(A) < -10


def test_continuation_needs_common_drift(kernel):
    reaction = make_reaction(binding=(0.6, 0.0, 0.0, 0.0))
    u = np.zeros((4, 3))
    u[2, 0] = 0.1
    with pytest.raises(DomainError):
        mc_reactive_moment(reaction, kernel, MaxwellianState(STATE.n, 1.0, u), cfg=McConfig(1000, channel=Reactive(2)))


def test_no_admissible_samples_is_reported(kernel):
    reaction = make_reaction(binding=(0.0, 0.0, 500.0, 0.0))
    with pytest.raises(EstimateDegenerateError):
        mc_reactive_moment(reaction, kernel, MaxwellianState(STATE.n, 0.1), cfg=McConfig(2000, channel=Reactive(0)))


def test_config_validation():
    with pytest.raises(DomainError):
        McConfig(0)
    with pytest.raises(DomainError):
        McConfig(target_moment="charge")
    with pytest.raises(DomainError):
        MaxwellianState([1, 1, 1], 1.0)
    with pytest.raises(DomainError):
        mc_reactive_moment(make_reaction(), KernelSpec(), STATE, cfg=McConfig(channel=Elastic(0, 1)))


def test_estimate_arithmetic():
    a = McEstimate(1.0, 0.3, 10, 10)
    b = McEstimate(2.0, 0.4, 20, 20)
    s = a + b
    assert s.value == 3.0 and s.standard_error == pytest.approx(0.5)
    assert a.scaled(-2.0).standard_error == pytest.approx(0.6)
    assert McEstimate(0.0, 0.0, 1).z_score() == 0.0
    assert McEstimate(1.0, 0.0, 1).z_score() == math.inf


def test_invariants_vanish_on_reversible_state():
    reaction, kern = reversible_setup()
    out = mc_collision_invariants(reaction, kern, MaxwellianState(STATE.n, STATE.T), McConfig(100_000, seed=12))
    assert len(out) == 7
    for name, est in out.items():
        assert abs(est.z_score()) < 4, name
