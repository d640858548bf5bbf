"""Species, the single reversible reaction A1 + A2 <-> A3 + A4, and equilibrium.

Every species carries a weight on its continuous internal energy ``I``.  The
weight is either polytropic, ``phi(I) = I**alpha``, or tabulated on a grid.
Partition functions, Maxwellians and the mass action ratio are pure functions
of the species data and the temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError, IntegrationError

MAX_ALPHA = 20
MASS_TOLERANCE = 1e-12
STOICHIOMETRY = np.array([1.0, 1.0, -1.0, -1.0])

# Composite Gauss-Legendre rule applied on every segment of a tabulated weight.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class PhysicalConstants:
    """Boltzmann constant; the nondimensional default sets it to one."""

    k_B: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.k_B) and self.k_B > 0):
            raise DomainError(f"k_B must be positive and finite, got {self.k_B}")


NONDIMENSIONAL = PhysicalConstants()
SI = PhysicalConstants(1.380649e-23)


@dataclass(frozen=True, eq=False)
class TabulatedWeight:
    """Internal-energy weight given on a grid.

    Between nodes the weight is interpolated log-linearly (exponential
    segments); a segment touching a zero node falls back to linear
    interpolation.  Outside the grid the weight is zero.
    """

    energies: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        energies = np.asarray(self.energies, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if energies.ndim != 1 or energies.shape != values.shape or energies.size < 2:
            raise DomainError("tabulated weight needs two equal-length 1-D arrays with at least 2 nodes")
        if not np.all(np.isfinite(energies)) or not np.all(np.isfinite(values)):
            raise DomainError("tabulated weight contains non-finite entries")
        if energies[0] < 0 or np.any(np.diff(energies) <= 0):
            raise DomainError("tabulated energies must be non-negative and strictly increasing")
        if np.any(values < 0):
            raise DomainError("tabulated weight must be non-negative at every node")
        energies.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_csv(cls, path) -> "TabulatedWeight":
        """Two-column CSV ``I, phi``; one non-numeric header line is allowed."""
        with open(path) as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        if lines:
            try:
                [float(v) for v in lines[0].split(",")]
            except ValueError:
                lines = lines[1:]
        try:
            data = np.loadtxt(lines, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DomainError(f"{path}: malformed weight table: {exc}") from None
        if data.size == 0:
            raise DomainError(f"{path}: weight table is empty")
        if data.shape[1] != 2:
            raise DomainError(f"{path}: expected two columns (I, phi), found {data.shape[1]}")
        return cls(data[:, 0], data[:, 1])

    def __call__(self, I) -> np.ndarray:
        I = np.asarray(I, dtype=float)
        e, w = self.energies, self.values
        k = np.clip(np.searchsorted(e, I, side="right") - 1, 0, e.size - 2)
        lo, hi = w[k], w[k + 1]
        t = (I - e[k]) / (e[k + 1] - e[k])
        positive = (lo > 0) & (hi > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            loglin = lo * np.exp(t * np.log(np.where(positive, hi / np.where(lo > 0, lo, 1.0), 1.0)))
        out = np.where(positive, loglin, lo + t * (hi - lo))
        inside = (I >= e[0]) & (I <= e[-1])
        return np.where(inside, out, 0.0)

    def moments(self, kT: float, orders=(0, 1)) -> tuple[float, ...]:
        """Integrals of ``I**k * phi(I) * exp(-I/kT)`` over the grid, one per order."""
        a, b = self.energies[:-1], self.energies[1:]
        half = 0.5 * (b - a)
        nodes = (a + b)[:, None] * 0.5 + half[:, None] * _GL_NODES[None, :]
        base = self(nodes) * np.exp(-nodes / kT) * half[:, None] * _GL_WEIGHTS[None, :]
        results = tuple(float(np.sum(base * nodes**k)) for k in orders)
        if not all(math.isfinite(x) for x in results):
            raise IntegrationError("tabulated weight integral is not finite")
        return results


@dataclass(frozen=True)
class SpeciesParams:
    """One constituent: mass, binding energy and internal-energy weight.

    ``weight`` is either a non-negative integer exponent (polytropic) or a
    :class:`TabulatedWeight`.
    """

    mass: float
    binding_energy: float = 0.0
    weight: int | TabulatedWeight = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise DomainError(f"species mass must be positive, got {self.mass}")
        if not math.isfinite(self.binding_energy):
            raise DomainError("binding energy must be finite")
        if not isinstance(self.weight, TabulatedWeight):
            alpha = self.weight
            if isinstance(alpha, float) and alpha.is_integer():
                alpha = int(alpha)
            if isinstance(alpha, bool) or not isinstance(alpha, (int, np.integer)) or alpha < 0:
                raise DomainError(f"polytropic exponent must be a non-negative integer, got {self.weight!r}")
            if alpha > MAX_ALPHA:
                raise DomainError(f"polytropic exponent is capped at {MAX_ALPHA}, got {alpha}")
            object.__setattr__(self, "weight", int(alpha))

    @property
    def polytropic(self) -> bool:
        return not isinstance(self.weight, TabulatedWeight)

    @property
    def alpha(self) -> int:
        if not self.polytropic:
            raise DomainError("species has a tabulated weight, not a polytropic exponent")
        return self.weight

    def phi(self, I) -> np.ndarray:
        I = np.asarray(I, dtype=float)
        if self.polytropic:
            return np.where(I >= 0, np.abs(I) ** self.weight, 0.0)
        return self.weight(I)


@dataclass(frozen=True)
class ReactionSpec:
    """Four species taking part in A1 + A2 <-> A3 + A4."""

    species: tuple[SpeciesParams, SpeciesParams, SpeciesParams, SpeciesParams]
    constants: PhysicalConstants = field(default=NONDIMENSIONAL)

    def __post_init__(self) -> None:
        species = tuple(self.species)
        if len(species) != 4:
            raise DomainError(f"a reaction needs exactly 4 species, got {len(species)}")
        object.__setattr__(self, "species", species)
        m = self.masses
        left, right = m[0] + m[1], m[2] + m[3]
        if abs(left - right) > MASS_TOLERANCE * max(left, right):
            raise DomainError(
                f"mass is not conserved by the reaction: m1 + m2 = {float(left)!r} but m3 + m4 = {float(right)!r} "
                "(require m1 + m2 = m3 + m4)"
            )

    @property
    def masses(self) -> np.ndarray:
        return np.array([s.mass for s in self.species], dtype=float)

    @property
    def total_mass(self) -> float:
        m = self.masses
        return 0.5 * (m[0] + m[1] + m[2] + m[3])

    @property
    def heat(self) -> float:
        """Reaction heat E3 + E4 - E1 - E2; positive means endothermic forward."""
        e = [s.binding_energy for s in self.species]
        return e[2] + e[3] - e[0] - e[1]

    @property
    def stoichiometry(self) -> np.ndarray:
        return STOICHIOMETRY.copy()

    def kT(self, T: float) -> float:
        return self.constants.k_B * _check_temperature(T)


def _check_temperature(T) -> float:
    try:
        T = float(T)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"temperature must be a real number, got {T!r}") from exc
    if not (math.isfinite(T) and T > 0):
        raise DomainError(f"temperature must be positive and finite, got {T}")
    return T


def partition_q(species: SpeciesParams, T: float, constants: PhysicalConstants = NONDIMENSIONAL) -> float:
    """Integral of ``phi(I) exp(-I/kT)`` over ``I >= 0``."""
    kT = constants.k_B * _check_temperature(T)
    if species.polytropic:
        a = species.weight
        return kT ** (a + 1) * special.gamma(a + 1)
    return species.weight.moments(kT, orders=(0,))[0]


def partition_qstar(species: SpeciesParams, T: float, constants: PhysicalConstants = NONDIMENSIONAL) -> float:
    """Integral of ``I phi(I) exp(-I/kT)`` over ``I >= 0``."""
    kT = constants.k_B * _check_temperature(T)
    if species.polytropic:
        a = species.weight
        return kT ** (a + 2) * special.gamma(a + 2)
    return species.weight.moments(kT, orders=(1,))[0]


def mean_internal_energy(species: SpeciesParams, T: float, constants: PhysicalConstants = NONDIMENSIONAL) -> float:
    """``q*/q``; equals ``(alpha + 1) kT`` for polytropic weights."""
    kT = constants.k_B * _check_temperature(T)
    if species.polytropic:
        return (species.weight + 1) * kT
    q, qs = species.weight.moments(kT, orders=(0, 1))
    return qs / q


def maxwellian(
    species: SpeciesParams,
    n: float,
    u,
    T: float,
    v,
    I,
    constants: PhysicalConstants = NONDIMENSIONAL,
) -> np.ndarray:
    """Maxwellian with density ``n``, drift ``u`` and temperature ``T``.

    Normalized so that integrating against ``phi(I) dI dv`` returns ``n``.
    ``v`` may carry leading batch dimensions; its last axis has length 3.
    """
    if n < 0:
        raise DomainError(f"number density must be non-negative, got {n}")
    kT = constants.k_B * _check_temperature(T)
    v = np.asarray(v, dtype=float)
    I = np.asarray(I, dtype=float)
    m = species.mass
    c2 = np.sum((v - np.asarray(u, dtype=float)) ** 2, axis=-1)
    norm = n / partition_q(species, T, constants) * (m / (2.0 * math.pi * kT)) ** 1.5
    return norm * np.exp(-m * c2 / (2.0 * kT) - I / kT)


def mass_action_ratio(reaction: ReactionSpec, T: float) -> float:
    """Equilibrium value of ``n1 n2 / (n3 n4)`` at temperature ``T``."""
    kT = reaction.kT(T)
    m = reaction.masses
    q = [partition_q(s, T, reaction.constants) for s in reaction.species]
    return (m[0] * m[1] / (m[2] * m[3])) ** 1.5 * (q[0] * q[1]) / (q[2] * q[3]) * math.exp(reaction.heat / kT)


def mass_action_prefactor(reaction: ReactionSpec) -> float:
    """Temperature-independent factor ``C`` in ``ratio = C exp(E/kT)``.

    Only defined for polytropic species with ``alpha1 + alpha2 = alpha3 + alpha4``.
    """
    if not all(s.polytropic for s in reaction.species):
        raise DomainError("the constant prefactor needs polytropic species")
    a = [s.weight for s in reaction.species]
    if a[0] + a[1] != a[2] + a[3]:
        raise DomainError("the prefactor is temperature dependent unless alpha1 + alpha2 = alpha3 + alpha4")
    m = reaction.masses
    fact = [math.factorial(x) for x in a]
    return (m[0] * m[1] / (m[2] * m[3])) ** 1.5 * fact[0] * fact[1] / (fact[2] * fact[3])


def partner(i: int) -> int:
    """Reaction partner index (0-based): 0<->1, 2<->3."""
    return (1, 0, 3, 2)[i]
