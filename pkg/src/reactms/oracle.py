"""Monte Carlo estimates of collision-operator moments at Maxwellian states.

The oracle integrates the raw collision operators, not the reduced
closed-form coefficients, so it checks :mod:`reactms.coefficients`
independently.  For species ``i`` in a channel with partner ``j`` it estimates

    integral of psi(v, I) Q(v, I) phi_i(I) dI dv

by sampling the pre-collision pair from the loss-side measure: velocities from
the two Maxwellians, both internal energies from ``Exp(kT)`` (the operators
carry ``dI_j`` without a weight, and the ``phi_i`` of the moment cancels the
``1/phi_i`` of the operator), ``R`` and ``r`` uniform, and the outgoing
direction uniform on the hemisphere around the pre-collision relative
velocity.  The gain term is evaluated at the transformed state of the same
sample (common random numbers).

Samples are drawn in fixed-size blocks.  Each block owns a Philox stream keyed
by ``(seed, channel, block index)``, and block statistics are merged by a
fixed pairwise tree.  Results are therefore identical for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import KernelSpec
from .errors import DomainError, EstimateDegenerateError
from .kinematics import (
    CollisionInput,
    elastic_bispecies,
    elastic_monospecies,
    reactive_backward,
    reactive_forward,
)
from .mixture import ReactionSpec, SpeciesParams, partition_q, partner

BLOCK_SIZE = 1 << 15
LOW_POWER_SAMPLES = 10_000
# Allowance for floating-point cancellation in gain minus loss, relative to
# the mean absolute loss contribution of a channel.
ROUNDOFF_RTOL = 1e-11


@dataclass(frozen=True)
class Elastic:
    """Non-reactive channel: species ``i`` colliding with species ``j`` (0-based)."""

    i: int
    j: int

    @property
    def code(self) -> int:
        return 10 + 4 * self.i + self.j


@dataclass(frozen=True)
class Reactive:
    """Reactive channel seen from species ``i`` (0-based)."""

    i: int

    @property
    def code(self) -> int:
        return self.i


@dataclass(frozen=True)
class MaxwellianState:
    """Maxwellian mixture with a common temperature and per-species drifts."""

    n: np.ndarray
    T: float
    u: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))

    def __post_init__(self) -> None:
        n = np.asarray(self.n, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if n.shape != (4,) or np.any(n < 0) or not np.all(np.isfinite(n)):
            raise DomainError("densities must be four non-negative numbers")
        if u.shape != (4, 3):
            raise DomainError("drifts must have shape (4, 3)")
        if not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"temperature must be positive, got {self.T}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "u", u)


@dataclass(frozen=True)
class McConfig:
    sample_count: int = 1_000_000
    seed: int = 0
    target_moment: str = "mass"
    channel: Elastic | Reactive = field(default_factory=lambda: Reactive(2))
    threads: int = 1
    block_size: int = BLOCK_SIZE
    strict_backward: bool = False

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise DomainError("sample_count must be at least 1")
        if self.target_moment not in ("mass", "momentum", "energy"):
            raise DomainError(f"unknown target moment {self.target_moment!r}")
        if self.threads < 1 or self.block_size < 1:
            raise DomainError("threads and block_size must be positive")


@dataclass(frozen=True)
class McEstimate:
    value: np.ndarray | float
    standard_error: np.ndarray | float
    effective_samples: int
    sample_count: int = 0
    roundoff: float = 0.0

    @property
    def low_power(self) -> bool:
        return self.sample_count < LOW_POWER_SAMPLES

    def z_score(self, reference=0.0):
        """Standardized distance from ``reference``; the roundoff floor keeps it finite."""
        scale = np.sqrt(np.asarray(self.standard_error) ** 2 + self.roundoff**2)
        diff = np.asarray(self.value) - reference
        return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), np.where(diff == 0, 0.0, np.inf))

    def __add__(self, other: "McEstimate") -> "McEstimate":
        return McEstimate(
            np.asarray(self.value) + np.asarray(other.value),
            np.sqrt(np.asarray(self.standard_error) ** 2 + np.asarray(other.standard_error) ** 2),
            self.effective_samples + other.effective_samples,
            min(self.sample_count, other.sample_count),
            math.hypot(self.roundoff, other.roundoff),
        )

    def scaled(self, c: float) -> "McEstimate":
        return McEstimate(
            c * np.asarray(self.value),
            abs(c) * np.asarray(self.standard_error),
            self.effective_samples,
            self.sample_count,
            abs(c) * self.roundoff,
        )


def reversibility_gap(reaction: ReactionSpec, gamma: float, rtol: float = 1e-12) -> float | None:
    """Ratio of the forward-channel number moment to the backward one.

    The reactive kernel ``|V|**gamma Phi b`` is evaluated at different
    relative speeds before and after a collision.  With zero reaction heat
    the speeds differ by the fixed factor ``sqrt(m1 m2 / (m3 m4))``, so the
    forward moment is the backward one times ``(m1 m2 / (m3 m4))**(-gamma/2)``.
    With nonzero heat there is no constant factor and ``None`` is returned.
    """
    energies = [abs(s.binding_energy) for s in reaction.species]
    if abs(reaction.heat) > rtol * max(sum(energies), 1.0):
        return None
    m = reaction.masses
    return float((m[0] * m[1] / (m[2] * m[3])) ** (-gamma / 2.0))


def _block_rng(seed: int, code: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & (2**64 - 1), code, block])))


def sample_maxwellian_state(
    species: SpeciesParams, n: float, T: float, rng: np.random.Generator, size: int, u=None, k_B: float = 1.0
):
    """Draw ``size`` particles ``(v, I)`` from the species Maxwellian.

    ``I`` follows the density proportional to ``phi(I) exp(-I/kT)``: a gamma
    law for polytropic weights, inverse-CDF sampling on the grid otherwise.
    """
    if not (n > 0 and T > 0):
        raise DomainError("sampling needs n > 0 and T > 0")
    kT = k_B * T
    u = np.zeros(3) if u is None else np.asarray(u, dtype=float)
    v = u + math.sqrt(kT / species.mass) * rng.standard_normal((size, 3))
    if species.polytropic:
        I = rng.gamma(species.weight + 1.0, kT, size)
    else:
        table = species.weight
        grid = np.linspace(table.energies[0], table.energies[-1], 4097)
        dens = table(grid) * np.exp(-grid / kT)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        if cdf[-1] <= 0:
            raise DomainError("tabulated weight has no mass to sample from")
        I = np.interp(rng.random(size) * cdf[-1], cdf, grid)
    return v, I


def _hemisphere(axis: np.ndarray, rng: np.random.Generator, size: int):
    """Uniform directions with non-negative projection on ``axis``; returns (sigma, mu)."""
    mu = rng.random(size)
    phi = 2.0 * math.pi * rng.random(size)
    helper = np.where(np.abs(axis[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(axis, e1)
    st = np.sqrt(1.0 - mu * mu)
    sigma = mu[:, None] * axis + (st * np.cos(phi))[:, None] * e1 + (st * np.sin(phi))[:, None] * e2
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    return sigma, mu


def builtin_psi(kind: str, species: SpeciesParams) -> Callable:
    m, Eb = species.mass, species.binding_energy
    if kind == "mass":
        return lambda v, I: np.ones(len(I))
    if kind == "momentum":
        return lambda v, I: m * v
    if kind == "energy":
        return lambda v, I: 0.5 * m * np.sum(v * v, axis=1) + I + Eb
    raise DomainError(f"unknown target moment {kind!r}")


def invariant_psi(species: SpeciesParams) -> Callable:
    """Stacked test functions: number, three momentum components, total energy."""
    m, Eb = species.mass, species.binding_energy

    def psi(v, I):
        return np.column_stack([np.ones(len(I)), m * v, 0.5 * m * np.sum(v * v, axis=1) + I + Eb])

    return psi


class _Channel:
    """Per-channel constants and the sampling/weighting of one block."""

    def __init__(self, reaction: ReactionSpec, kernel: KernelSpec, state: MaxwellianState, channel, strict_backward):
        self.reaction = reaction
        self.kernel = kernel
        self.state = state
        self.channel = channel
        self.strict_backward = strict_backward
        sp = reaction.species
        T = state.T
        self.kT = reaction.kT(T)
        q = np.array([partition_q(s, T, reaction.constants) for s in sp])
        m = reaction.masses
        n = state.n
        if isinstance(channel, Elastic):
            i, j = channel.i, channel.j
            if not (0 <= i <= 3 and 0 <= j <= 3):
                raise DomainError(f"invalid elastic channel {channel}")
            self.i, self.j = i, j
            self.out = (i, j)
            self.phi = kernel.elastic_phi(i, j)
            self.b = kernel.elastic_b(i, j)
            mass_weight = 1.0
            gain_mass = 1.0
        elif isinstance(channel, Reactive):
            i = channel.i
            if not 0 <= i <= 3:
                raise DomainError(f"invalid reactive channel {channel}")
            j = partner(i)
            self.i, self.j = i, j
            self.out = (2, 3) if i < 2 else (0, 1)
            self.phi = kernel.phi_react
            self.b = kernel.b_react
            k, l = self.out
            mass_weight = (m[i] * m[j]) ** -2
            gain_mass = (m[i] * m[j] / (m[k] * m[l])) ** 3
        else:
            raise DomainError(f"unknown channel {channel!r}")
        k, l = self.out
        self.loss_coef = n[i] * n[j] / (q[i] * q[j])
        self.gain_coef = gain_mass * (m[k] * m[l] / (m[i] * m[j])) ** 1.5 * n[k] * n[l] / (q[k] * q[l])
        self.measure = 2.0 * math.pi * self.kT**2 * mass_weight
        self.common_drift = bool(np.all(state.u == state.u[0]))

    def block(self, rng: np.random.Generator, size: int, psi: Callable):
        sp = self.reaction.species
        m = self.reaction.masses
        i, j = self.i, self.j
        k, l = self.out
        kT, u = self.kT, self.state.u
        v, _ = sample_maxwellian_state(sp[i], 1.0, self.state.T, rng, size, u[i], self.reaction.constants.k_B)
        vj, _ = sample_maxwellian_state(sp[j], 1.0, self.state.T, rng, size, u[j], self.reaction.constants.k_B)
        I = rng.exponential(kT, size)
        Ij = rng.exponential(kT, size)
        R = rng.random(size)
        r = rng.random(size)
        # Collision ordering: the transforms take species in canonical order,
        # which for the second member of a reactive pair swaps self and partner.
        swap = isinstance(self.channel, Reactive) and i in (1, 3)
        va, vb, Ia, Ib = (vj, v, Ij, I) if swap else (v, vj, I, Ij)
        rel = va - vb
        speed = np.linalg.norm(rel, axis=1)
        axis = np.where(speed[:, None] > 0, rel / np.where(speed > 0, speed, 1.0)[:, None], np.array([0.0, 0.0, 1.0]))
        sigma, mu = _hemisphere(axis, rng, size)
        inp = CollisionInput(va, vb, Ia, Ib, R, r, sigma)
        if isinstance(self.channel, Elastic):
            out = elastic_monospecies(inp, m[i]) if i == j else elastic_bispecies(inp, m[i], m[j])
            # elastic_* return (self, partner) already in channel order.
            vk, vl, Ik, Il = out.v_i, out.v_j, out.I_i, out.I_j
            admissible = out.admissible
            hit = np.ones(size, dtype=bool)
        else:
            forward = i < 2
            out = reactive_forward(inp, self.reaction) if forward else reactive_backward(inp, self.reaction)
            vk, vl, Ik, Il = out.v_i, out.v_j, out.I_i, out.I_j
            admissible = out.admissible
            hit = admissible if (forward or self.strict_backward) else np.ones(size, dtype=bool)
        pre = (
            0.5 * m[i] * np.sum((v - u[i]) ** 2, axis=1)
            + 0.5 * m[j] * np.sum((vj - u[j]) ** 2, axis=1)
            + I
            + Ij
        )
        with np.errstate(invalid="ignore"):
            post = (
                0.5 * m[k] * np.sum((vk - u[k]) ** 2, axis=1)
                + 0.5 * m[l] * np.sum((vl - u[l]) ** 2, axis=1)
                + Ik
                + Il
            )
        continued = hit & ~admissible
        if np.any(continued):
            if not self.common_drift:
                raise DomainError("backward samples without a real post-collision state need a common drift")
            # Energy balance of the pair: outgoing kinetic plus internal energy
            # exceeds the incoming one by the reaction heat.
            post = np.where(continued, pre + self.reaction.heat, post)
        delta = np.where(hit, post - pre, 0.0)
        gain = self.gain_coef * np.exp(-delta / kT)
        kernel = (
            speed ** (self.kernel.gamma - 1.0)
            * np.asarray(self.phi(I, Ij, R, r), dtype=float)
            * np.asarray(self.b(mu), dtype=float)
            * 2.0
            * mu
            * (1.0 - R)
            * self.measure
        )
        kernel = np.where(hit, kernel, 0.0)
        values = np.asarray(psi(v, I), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        w = (kernel * (gain - self.loss_coef))[:, None] * values
        loss_scale = np.abs(kernel * self.loss_coef)[:, None] * np.abs(values)
        return w, loss_scale, int(np.count_nonzero(hit))


def _combine(a, b):
    """Merge (count, mean, M2, scale_sum, hits) block statistics (Chan et al.)."""
    na, ma, sa, la, ha = a
    nb, mb, sb, lb, hb = b
    n = na + nb
    d = mb - ma
    return n, ma + d * (nb / n), sa + sb + d * d * (na * nb / n), la + lb, ha + hb


def _pairwise(stats: Sequence):
    if len(stats) == 1:
        return stats[0]
    mid = len(stats) // 2
    return _combine(_pairwise(stats[:mid]), _pairwise(stats[mid:]))


def _estimate(channel_obj: _Channel, psi: Callable, cfg: McConfig) -> McEstimate:
    N, bs = cfg.sample_count, cfg.block_size
    sizes = [bs] * (N // bs) + ([N % bs] if N % bs else [])
    code = channel_obj.channel.code

    def run(index):
        w, scale, hits = channel_obj.block(_block_rng(cfg.seed, code, index), sizes[index], psi)
        mean = w.mean(axis=0)
        return len(w), mean, np.sum((w - mean) ** 2, axis=0), scale.sum(axis=0), hits

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            stats = list(pool.map(run, range(len(sizes))))
    else:
        stats = [run(b) for b in range(len(sizes))]
    n, mean, m2, scale_sum, hits = _pairwise(stats)
    if hits == 0:
        raise EstimateDegenerateError(f"no admissible samples in channel {channel_obj.channel}")
    se = np.sqrt(m2 / (n - 1) / n) if n > 1 else np.full_like(mean, np.inf)
    roundoff = float(ROUNDOFF_RTOL * np.max(scale_sum) / n)
    squeeze = mean.size == 1
    return McEstimate(
        float(mean[0]) if squeeze else mean,
        float(se[0]) if squeeze else se,
        int(hits),
        int(N),
        roundoff,
    )


def _resolve_psi(psi, cfg: McConfig, species: SpeciesParams):
    return builtin_psi(cfg.target_moment, species) if psi is None else psi


def mc_reactive_moment(
    reaction: ReactionSpec, kernel: KernelSpec, state: MaxwellianState, psi=None, cfg: McConfig = McConfig()
) -> McEstimate:
    """Estimate the ``psi`` moment of the reactive operator of species ``cfg.channel.i``.

    ``psi(v, I)`` receives arrays of shape ``(N, 3)`` and ``(N,)`` and returns
    ``(N,)`` or ``(N, k)``.  When omitted, ``cfg.target_moment`` selects it.
    """
    if not isinstance(cfg.channel, Reactive):
        raise DomainError("mc_reactive_moment needs a reactive channel")
    ch = _Channel(reaction, kernel, state, cfg.channel, cfg.strict_backward)
    return _estimate(ch, _resolve_psi(psi, cfg, reaction.species[cfg.channel.i]), cfg)


def mc_elastic_moment(
    pair, kernel: KernelSpec, state: MaxwellianState, psi=None, cfg: McConfig = McConfig(), *, reaction: ReactionSpec
) -> McEstimate:
    """Estimate the ``psi`` moment of species ``pair[0]`` under collisions with ``pair[1]``."""
    channel = Elastic(*pair)
    ch = _Channel(reaction, kernel, state, channel, cfg.strict_backward)
    return _estimate(ch, _resolve_psi(psi, cfg, reaction.species[channel.i]), cfg)


def mc_chemical_rate_symmetry(
    reaction: ReactionSpec, kernel: KernelSpec, state: MaxwellianState, cfg: McConfig = McConfig()
) -> list[McEstimate]:
    """Number moments of the four reactive operators, species 1..4."""
    out = []
    for i in range(4):
        ch = _Channel(reaction, kernel, state, Reactive(i), cfg.strict_backward)
        out.append(_estimate(ch, builtin_psi("mass", reaction.species[i]), cfg))
    return out


INVARIANT_FAMILIES = (
    ("number (1,0,1,0)", (1.0, 0.0, 1.0, 0.0)),
    ("number (1,0,0,1)", (1.0, 0.0, 0.0, 1.0)),
    ("number (0,1,1,0)", (0.0, 1.0, 1.0, 0.0)),
)


def mc_collision_invariants(
    reaction: ReactionSpec,
    kernel: KernelSpec,
    state: MaxwellianState,
    cfg: McConfig = McConfig(),
    include_elastic: bool = True,
) -> dict[str, McEstimate]:
    """Total production of every collision invariant, summed over species and channels.

    Each species contributes its reactive moment and, optionally, its moments
    under elastic collisions with all four species.  Independent streams per
    channel make the standard errors add in quadrature.
    """
    per_species = []
    for i in range(4):
        psi = invariant_psi(reaction.species[i])
        channels = [Reactive(i)] + ([Elastic(i, j) for j in range(4)] if include_elastic else [])
        total = None
        for c in channels:
            est = _estimate(_Channel(reaction, kernel, state, c, cfg.strict_backward), psi, cfg)
            total = est if total is None else total + est
        per_species.append(total)

    def column(est: McEstimate, idx) -> McEstimate:
        return McEstimate(
            float(np.asarray(est.value)[idx]),
            float(np.asarray(est.standard_error)[idx]),
            est.effective_samples,
            est.sample_count,
            est.roundoff,
        )

    report = {}
    for name, weights in INVARIANT_FAMILIES:
        acc = None
        for w, est in zip(weights, per_species):
            if w:
                term = column(est, 0).scaled(w)
                acc = term if acc is None else acc + term
        report[name] = acc
    for axis, label in enumerate("xyz"):
        acc = None
        for est in per_species:
            term = column(est, 1 + axis)
            acc = term if acc is None else acc + term
        report[f"momentum {label}"] = acc
    acc = None
    for est in per_species:
        term = column(est, 4)
        acc = term if acc is None else acc + term
    report["energy"] = acc
    return report
