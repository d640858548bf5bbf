"""Limit-system coefficients: the chemical production term and binary diffusivities.

Both coefficients share the same five-fold integral over the internal
energies of the pair, the two repartition parameters and the outgoing
direction.  It is evaluated by :func:`internal_energy_quadrature`; the
velocity-space Gaussian integrals are in closed form (:func:`gauss_moment`,
:func:`com_gaussian_integral`, :func:`relative_speed_moment`,
:func:`directional_speed_moment`).

Collision kernels factor as ``|v - v_j|**gamma * Phi(I, I_j, R, r) * b(cos theta)``.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping

import numpy as np
from scipy import integrate, special

from .errors import DomainError, IntegrationError, SingularCoefficientError
from .kinematics import reduced_mass
from .mixture import NONDIMENSIONAL, PhysicalConstants, ReactionSpec, partition_q, partition_qstar

AXIS_RTOL = 1e-9
TARGET_RTOL = 1e-8
PAIRS = tuple(combinations(range(4), 2))
CACHE_RTOL = 1e-3


# -- kernel factors --------------------------------------------------------


@dataclass(frozen=True)
class PowerFactor:
    """Kinetic factor ``scale * I**p_self * I_j**p_partner * (1 - R)**p_R``.

    Covers the three configurable families: constant, power in the internal
    energies and power in ``1 - R``.  It is separable, so its quadrature
    reduces to four one-dimensional integrals.
    """

    scale: float = 1.0
    p_self: float = 0.0
    p_partner: float = 0.0
    p_R: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"kinetic factor scale must be positive, got {self.scale}")
        for name in ("p_self", "p_partner", "p_R"):
            p = getattr(self, name)
            if not (math.isfinite(p) and p >= 0):
                raise DomainError(f"kinetic factor exponent {name} must be non-negative, got {p}")

    def __call__(self, I, I_j, R, r):
        I, I_j, R = (np.asarray(x, dtype=float) for x in (I, I_j, R))
        return self.scale * I**self.p_self * I_j**self.p_partner * (1.0 - R) ** self.p_R + 0.0 * np.asarray(r)

    def swapped(self) -> "PowerFactor":
        return PowerFactor(self.scale, self.p_partner, self.p_self, self.p_R)

    @property
    def symmetric(self) -> bool:
        return self.p_self == self.p_partner

    def axis_factors(self):
        """``(scale, f_I, f_Ij, f_R, f_r)`` with ``Phi = scale * f_I * f_Ij * f_R * f_r``."""
        return (
            self.scale,
            lambda x: x**self.p_self,
            lambda x: x**self.p_partner,
            lambda x: (1.0 - x) ** self.p_R,
            lambda x: 1.0,
        )


@dataclass(frozen=True)
class AngularPower:
    """Angular factor ``scale * mu**exponent`` with ``mu = cos(theta)`` in [0, 1]."""

    scale: float = 1.0
    exponent: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"angular factor scale must be positive, got {self.scale}")
        if not (math.isfinite(self.exponent) and self.exponent >= 0):
            raise DomainError(f"angular exponent must be non-negative, got {self.exponent}")

    def __call__(self, mu):
        return self.scale * np.asarray(mu, dtype=float) ** self.exponent


KineticFactor = Callable[..., np.ndarray]
AngularFactor = Callable[[np.ndarray], np.ndarray]


def _swap(phi: KineticFactor) -> KineticFactor:
    if isinstance(phi, PowerFactor):
        return phi.swapped()
    return lambda I, I_j, R, r: phi(I_j, I, R, r)


def _looks_symmetric(phi: KineticFactor) -> bool:
    if isinstance(phi, PowerFactor):
        return phi.symmetric
    grid = np.array([0.1, 0.7, 2.3])
    I, J, R, r = np.meshgrid(grid, grid[::-1], [0.2, 0.6], [0.3, 0.9], indexing="ij")
    a, b = phi(I, J, R, r), phi(J, I, R, r)
    return bool(np.allclose(a, b, rtol=1e-12, atol=0.0))


@dataclass(frozen=True)
class KernelSpec:
    """Collision kernels of the mixture.

    ``phi_elastic`` and ``b_elastic`` map 0-based unordered pairs ``(i, j)``
    with ``i <= j`` to kinetic and angular factors; missing pairs use the
    ``default_*`` entries.  The kinetic factor of an ordered pair ``(j, i)``
    with ``j > i`` is the stored one with its energy arguments swapped.
    """

    gamma: float = 1.0
    default_phi: KineticFactor = field(default_factory=PowerFactor)
    default_b: AngularFactor = field(default_factory=AngularPower)
    phi_elastic: Mapping[tuple[int, int], KineticFactor] = field(default_factory=dict)
    b_elastic: Mapping[tuple[int, int], AngularFactor] = field(default_factory=dict)
    phi_react: KineticFactor = field(default_factory=PowerFactor)
    b_react: AngularFactor = field(default_factory=AngularPower)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma) and self.gamma >= 1):
            raise DomainError(f"the kinetic exponent gamma must be >= 1, got {self.gamma}")
        for key in (*self.phi_elastic, *self.b_elastic):
            i, j = key
            if not (0 <= i <= j <= 3):
                raise DomainError(f"pair keys must satisfy 0 <= i <= j <= 3, got {key}")
        if not _looks_symmetric(self.phi_react):
            raise DomainError("the reactive kinetic factor must be symmetric under exchange of the pair energies")
        for i in range(4):
            if not _looks_symmetric(self.phi_elastic.get((i, i), self.default_phi)):
                raise DomainError(f"the same-species kinetic factor for species {i + 1} must be symmetric")

    def elastic_phi(self, i: int, j: int) -> KineticFactor:
        if i <= j:
            return self.phi_elastic.get((i, j), self.default_phi)
        return _swap(self.phi_elastic.get((j, i), self.default_phi))

    def elastic_b(self, i: int, j: int) -> AngularFactor:
        return self.b_elastic.get((min(i, j), max(i, j)), self.default_b)


# -- closed-form Gaussian identities --------------------------------------


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be positive and finite, got {value}")
    return value


def gauss_moment(n: int, alpha: float) -> float:
    """Half-line Gaussian moment: integral of ``x**n exp(-alpha x**2)`` over ``x >= 0``."""
    if n < 0:
        raise DomainError(f"moment order must be non-negative, got {n}")
    alpha = _positive("alpha", alpha)
    return 0.5 * special.gamma((n + 1) / 2.0) * alpha ** (-(n + 1) / 2.0)


def incomplete_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma function ``Gamma(a, x)``."""
    a = _positive("a", a)
    if not (math.isfinite(x) and x >= 0):
        raise DomainError(f"x must be non-negative, got {x}")
    return float(special.gammaincc(a, x) * special.gamma(a))


def com_gaussian_integral(M: float, T: float, constants: PhysicalConstants = NONDIMENSIONAL) -> float:
    """Integral of ``exp(-M |X|**2 / 2kT)`` over centre-of-mass velocities."""
    M = _positive("M", M)
    kT = constants.k_B * _positive("T", T)
    return (2.0 * math.pi * kT / M) ** 1.5


def _check_gamma(gamma):
    gamma = float(gamma)
    if not (math.isfinite(gamma) and gamma >= 1):
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    return gamma


def relative_speed_moment(gamma: float, mu: float, T: float, constants: PhysicalConstants = NONDIMENSIONAL) -> float:
    """Integral of ``|V|**(gamma-1) exp(-mu |V|**2 / 2kT)`` over relative velocities."""
    gamma = _check_gamma(gamma)
    mu = _positive("mu", mu)
    kT = constants.k_B * _positive("T", T)
    return 2.0 * math.pi * (2.0 * kT / mu) ** ((gamma + 2) / 2.0) * special.gamma((gamma + 2) / 2.0)


def directional_speed_moment(
    gamma: float, mu: float, T: float, a, constants: PhysicalConstants = NONDIMENSIONAL
) -> np.ndarray:
    """Integral of ``(a . V) V |V|**(gamma-1) exp(-mu |V|**2 / 2kT)``; parallel to ``a``."""
    gamma = _check_gamma(gamma)
    mu = _positive("mu", mu)
    kT = constants.k_B * _positive("T", T)
    a = np.asarray(a, dtype=float)
    scale = (2.0 * math.pi / 3.0) * special.gamma((gamma + 4) / 2.0) * (2.0 * kT / mu) ** ((gamma + 4) / 2.0)
    return scale * a


# -- angular and internal-energy quadrature -------------------------------

_LEG_NODES, _LEG_WEIGHTS = np.polynomial.legendre.leggauss(64)
_MU_NODES = 0.5 * (_LEG_NODES + 1.0)
_MU_WEIGHTS = 0.5 * _LEG_WEIGHTS


def _quad(f, a, b, what):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(f"{what}: {exc}") from None
    if not math.isfinite(value):
        raise IntegrationError(f"{what}: integral is not finite")
    if abs(err) > AXIS_RTOL * abs(value) and abs(err) > 1e-300:
        raise IntegrationError(f"{what}: quadrature error estimate {err:.3g} exceeds tolerance (value {value:.6g})")
    return value


def angular_moment(b: AngularFactor, weight: str = "plain_cos"):
    """Angular integrals of ``b(cos theta)``.

    ``plain_cos``: integral of ``b(mu) mu`` over the hemisphere of outgoing
    directions, ``2 pi * int_0^1 b(mu) mu dmu``.

    ``vector_sigma``: integral of ``sigma b(mu) mu`` over the full sphere with
    ``b`` extended as an odd function of ``mu``.  The quadrature pairs every
    node with its mirror image, so the result is zero to the last bit.
    """
    if weight == "plain_cos":
        return 2.0 * math.pi * _quad(lambda mu: float(b(mu)) * mu, 0.0, 1.0, "angular moment")
    if weight == "vector_sigma":
        mu, phi = np.meshgrid(_MU_NODES, np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False), indexing="ij")
        w = np.broadcast_to(_MU_WEIGHTS[:, None] * (2.0 * math.pi / 32), mu.shape)
        st = np.sqrt(1.0 - mu * mu)
        sigma = np.stack([st * np.cos(phi), st * np.sin(phi), mu], axis=-1)

        def odd(m):
            return np.sign(m) * np.asarray(b(np.abs(m)), dtype=float)

        # Every node on the upper hemisphere is paired with its antipode.
        upper = np.sum((w * odd(mu) * mu)[..., None] * sigma, axis=(0, 1))
        lower = np.sum((w * odd(-mu) * -mu)[..., None] * -sigma, axis=(0, 1))
        return upper + lower
    raise DomainError(f"unknown angular weight {weight!r}; expected 'plain_cos' or 'vector_sigma'")


def _half_line(f, kT, what):
    """Integral of ``f(I) exp(-I/kT)`` over ``I >= 0`` via ``I = -kT log t``."""

    def g(t):
        if t <= 0.0:
            return 0.0
        return float(f(-kT * math.log(t)))

    return kT * _quad(g, 0.0, 1.0, what)


_PROBE_REFERENCE = (0.9, 1.3, 0.35, 0.55)
_PROBE_POINTS = np.array(
    [[0.05, 2.7, 0.1, 0.8], [3.1, 0.2, 0.7, 0.15], [1.7, 4.4, 0.95, 0.4], [0.4, 0.6, 0.5, 0.99], [6.0, 1.1, 0.02, 0.6]]
)


def separate(phi: KineticFactor):
    """Split ``phi`` into per-axis factors when it is a product of them.

    Returns ``(scale, f_I, f_Ij, f_R, f_r)`` or ``None``.  A callable is taken
    as separable when the rank-one identity
    ``phi(x) phi(x0)**3 = prod_a phi(x0 with axis a set to x_a)`` holds at a
    set of probe points.
    """
    if isinstance(phi, PowerFactor):
        return phi.axis_factors()
    x0 = np.array(_PROBE_REFERENCE)
    ref = float(phi(*x0))
    if not (math.isfinite(ref) and ref > 0):
        return None

    def axis(a):
        def f(x):
            point = x0.copy()
            point[a] = x
            return float(phi(*point)) / ref

        return f

    factors = [axis(a) for a in range(4)]
    for point in _PROBE_POINTS:
        lhs = float(phi(*point))
        rhs = ref * math.prod(f(x) for f, x in zip(factors, point))
        if not math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-300):
            return None
    return (ref, *factors)


def _energy_block_separable(parts, kT: float) -> float:
    scale, f_I, f_Ij, f_R, f_r = parts
    a = _half_line(f_I, kT, "I axis")
    b = _half_line(f_Ij, kT, "I_j axis")
    c = _quad(lambda R: f_R(R) * (1.0 - R), 0.0, 1.0, "R axis")
    d = _quad(lambda r: f_r(r), 0.0, 1.0, "r axis")
    return scale * a * b * c * d


def _energy_block_tensor(phi: KineticFactor, kT: float) -> float:
    """Tensor Gauss-Laguerre x Gauss-Legendre rule, doubled until converged.

    Used only for coupled (non-separable) factors, which must be smooth.
    """
    previous = None
    for order in (16, 32, 64, 128):
        x, wx = special.roots_laguerre(order)
        s, ws = np.polynomial.legendre.leggauss(order)
        s, ws = 0.5 * (s + 1.0), 0.5 * ws
        total = 0.0
        for xi, wi in zip(x, wx):
            I = kT * xi
            Ij, R, r = np.meshgrid(kT * x, s, s, indexing="ij")
            w = wi * wx[:, None, None] * ws[None, :, None] * ws[None, None, :]
            total += np.sum(w * phi(I, Ij, R, r) * (1.0 - R))
        total *= kT * kT
        if not math.isfinite(total):
            raise IntegrationError("kinetic factor integral is not finite")
        if previous is not None and abs(total - previous) <= TARGET_RTOL * abs(total):
            return total
        previous = total
    raise IntegrationError("tensor quadrature of the kinetic factor did not converge; supply a smoother factor")


def internal_energy_quadrature(
    Phi: KineticFactor, b: AngularFactor, T: float, constants: PhysicalConstants = NONDIMENSIONAL
) -> float:
    """Five-fold integral of ``exp(-(I+I_j)/kT) Phi b(mu) mu (1-R)``.

    Integration runs over ``I, I_j >= 0``, ``R, r`` in [0, 1] and the
    hemisphere of outgoing directions.
    """
    kT = constants.k_B * _positive("T", T)
    angular = angular_moment(b, "plain_cos")
    parts = separate(Phi)
    if parts is not None:
        block = _energy_block_separable(parts, kT)
    else:
        block = _energy_block_tensor(Phi, kT)
    return angular * block


# -- production term and diffusivities -------------------------------------


def _partition_functions(reaction: ReactionSpec, T: float) -> np.ndarray:
    return np.array([partition_q(s, T, reaction.constants) for s in reaction.species])


def rate_constant(reaction: ReactionSpec, kernel: KernelSpec, T: float) -> float:
    """Kinetic factor multiplying the density bracket of the production term."""
    kT = reaction.kT(T)
    m = reaction.masses
    mu34 = reduced_mass(m[2], m[3])
    g = kernel.gamma
    quad = internal_energy_quadrature(kernel.phi_react, kernel.b_react, T, reaction.constants)
    return (
        4.0
        / (math.sqrt(math.pi) * (m[2] * m[3]) ** 2)
        * special.gamma((g + 2) / 2.0)
        * (2.0 * kT / mu34) ** ((g - 1) / 2.0)
        * quad
    )


def production_bracket(reaction: ReactionSpec, n, T: float) -> float:
    """Density bracket of the production term; zero exactly on the mass action manifold."""
    n = np.asarray(n, dtype=float)
    m = reaction.masses
    q = _partition_functions(reaction, T)
    forward = (m[2] * m[3] / (m[0] * m[1])) ** 1.5 * math.exp(-reaction.heat / reaction.kT(T)) / (q[0] * q[1])
    return forward * n[0] * n[1] - n[2] * n[3] / (q[2] * q[3])


def compute_A(reaction: ReactionSpec, kernel: KernelSpec, n, T: float) -> float:
    """Chemical production term; positive values consume species 1 and 2."""
    n = np.asarray(n, dtype=float)
    if n.shape != (4,) or np.any(n < 0):
        raise DomainError("densities must be four non-negative numbers")
    return production_bracket(reaction, n, T) * rate_constant(reaction, kernel, T)


def compute_Dij(pair, kernel: KernelSpec, T: float, reaction: ReactionSpec) -> float:
    """Binary diffusion coefficient of the ordered pair ``(i, j)`` (0-based)."""
    i, j = pair
    if i == j:
        raise DomainError("diffusion coefficients are defined for distinct species only")
    s_i, s_j = reaction.species[i], reaction.species[j]
    kT = reaction.kT(T)
    mu = reduced_mass(s_i.mass, s_j.mass)
    g = kernel.gamma
    quad = internal_energy_quadrature(kernel.elastic_phi(i, j), kernel.elastic_b(i, j), T, reaction.constants)
    qq = partition_q(s_i, T, reaction.constants) * partition_q(s_j, T, reaction.constants)
    inverse = (
        4.0
        / (3.0 * math.sqrt(math.pi))
        * mu ** ((3 - g) / 2.0)
        * (2.0 * kT) ** ((g - 1) / 2.0)
        * special.gamma((g + 4) / 2.0)
        * quad
        / qq
    )
    if not (math.isfinite(inverse) and inverse > 0):
        raise SingularCoefficientError(f"inverse diffusivity for pair {pair} is {inverse}; the kernel is degenerate")
    return 1.0 / inverse


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Coefficients at temperature ``T``.

    ``A = A_forward_prefactor * n1 n2 - A_backward_prefactor * n3 n4``.  The
    diagonal of ``D`` is ``inf`` so that Maxwell-Stefan sums may run over all
    ``j`` without special-casing ``j == i``.
    """

    T: float
    A_forward_prefactor: float
    A_backward_prefactor: float
    rate_constant: float
    D: np.ndarray
    q: np.ndarray
    qstar: np.ndarray

    def production(self, n) -> float:
        n = np.asarray(n, dtype=float)
        return self.A_forward_prefactor * n[0] * n[1] - self.A_backward_prefactor * n[2] * n[3]


def coefficient_set(reaction: ReactionSpec, kernel: KernelSpec, T: float) -> CoefficientSet:
    kT = reaction.kT(T)
    m = reaction.masses
    q = _partition_functions(reaction, T)
    qs = np.array([partition_qstar(s, T, reaction.constants) for s in reaction.species])
    k = rate_constant(reaction, kernel, T)
    forward = k * (m[2] * m[3] / (m[0] * m[1])) ** 1.5 * math.exp(-reaction.heat / kT) / (q[0] * q[1])
    backward = k / (q[2] * q[3])
    D = np.full((4, 4), np.inf)
    for i, j in PAIRS:
        D[i, j] = D[j, i] = compute_Dij((i, j), kernel, T, reaction)
    D.setflags(write=False)
    q.setflags(write=False)
    qs.setflags(write=False)
    return CoefficientSet(float(T), forward, backward, k, D, q, qs)


class CoefficientCache:
    """Temperature-keyed cache of :class:`CoefficientSet`.

    A request reuses a stored set whose temperature is within ``rtol`` of the
    requested one.  Reads are lock-free; inserts take a lock.
    """

    def __init__(self, reaction: ReactionSpec, kernel: KernelSpec, rtol: float = CACHE_RTOL):
        self.reaction = reaction
        self.kernel = kernel
        self.rtol = rtol
        self._entries: dict[int, CoefficientSet] = {}
        self._lock = threading.Lock()
        self.misses = 0

    def _key(self, T: float) -> int:
        return int(round(math.log(T) / self.rtol))

    def get(self, T: float) -> CoefficientSet:
        key = self._key(T)
        entry = self._entries.get(key)
        if entry is not None:
            return entry
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                Tk = math.exp(key * self.rtol)
                entry = coefficient_set(self.reaction, self.kernel, Tk)
                self._entries[key] = entry
                self.misses += 1
        return entry


def ms_rhs(n, D, J) -> np.ndarray:
    """Right-hand sides ``-sum_{j != i} (n_j J_i - n_i J_j) / D_ij`` for every species.

    ``J`` has shape ``(4,)`` or ``(4, d)``; the result has the same shape.
    """
    n = np.asarray(n, dtype=float)
    D = np.asarray(D, dtype=float)
    J = np.asarray(J, dtype=float)
    inv = np.where(np.eye(len(n), dtype=bool), 0.0, 1.0 / D)
    shape = J.shape
    Jm = J.reshape(len(n), -1)
    # (n_j J_i - n_i J_j) / D_ij summed over j
    out = -((inv @ n)[:, None] * Jm - n[:, None] * (inv @ Jm))
    return out.reshape(shape)
