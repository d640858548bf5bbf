"""Borgnakke-Larsen collision transforms for elastic and reactive encounters.

All transforms take the outgoing relative-velocity direction ``sigma`` as the
angular variable.  Inputs may carry arbitrary leading batch dimensions: vectors
have a trailing axis of length 3 and scalars broadcast against the batch.

Reactive transforms read the reaction heat ``E`` and the masses from a
:class:`~reactms.mixture.ReactionSpec`.  The forward channel consumes species
(1, 2) and produces (3, 4); the backward channel does the reverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .mixture import ReactionSpec

UNIT_TOLERANCE = 1e-12


def reduced_mass(m_i, m_j):
    m_i = np.asarray(m_i, dtype=float)
    m_j = np.asarray(m_j, dtype=float)
    if np.any(m_i <= 0) or np.any(m_j <= 0):
        raise DomainError("masses must be positive")
    out = m_i * m_j / (m_i + m_j)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CollisionInput:
    """Pre-collision pair state plus the repartition and angular parameters."""

    v_i: np.ndarray
    v_j: np.ndarray
    I_i: np.ndarray
    I_j: np.ndarray
    R: np.ndarray
    r: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        for name in ("v_i", "v_j", "sigma"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape[-1:] != (3,):
                raise DomainError(f"{name} must have a trailing axis of length 3")
            object.__setattr__(self, name, arr)
        for name in ("I_i", "I_j", "R", "r"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(np.abs(np.linalg.norm(self.sigma, axis=-1) - 1.0) > UNIT_TOLERANCE):
            raise DomainError("sigma must be a unit vector")
        if np.any((self.R < 0) | (self.R > 1)) or np.any((self.r < 0) | (self.r > 1)):
            raise DomainError("repartition parameters R and r must lie in [0, 1]")
        if np.any(self.I_i < 0) or np.any(self.I_j < 0):
            raise DomainError("internal energies must be non-negative")


@dataclass(frozen=True)
class CollisionOutput:
    """Post-collision pair state.  Entries are NaN where ``admissible`` is False."""

    v_i: np.ndarray
    v_j: np.ndarray
    I_i: np.ndarray
    I_j: np.ndarray
    admissible: np.ndarray


def _relative_kinetic(v_i, v_j, mu):
    return 0.5 * mu * np.sum((v_i - v_j) ** 2, axis=-1)


def _split(v_i, v_j, m_i, m_j, m_out_i, m_out_j, kinetic_out, sigma, admissible):
    """Assemble outgoing velocities from the outgoing kinetic share.

    The centre of mass velocity is kept; the outgoing relative speed follows
    from ``kinetic_out = mu_out |v_i' - v_j'|**2 / 2``.
    """
    M = m_i + m_j
    centre = (m_i * v_i + m_j * v_j) / M
    mu_out = m_out_i * m_out_j / M
    speed = np.sqrt(np.where(admissible, 2.0 * np.maximum(kinetic_out, 0.0) / mu_out, np.nan))
    offset = speed[..., None] * sigma
    vi = centre + (m_out_j / M) * offset
    vj = centre - (m_out_i / M) * offset
    return vi, vj


def elastic_bispecies(inp: CollisionInput, m_i: float, m_j: float) -> CollisionOutput:
    """Inelastic-but-non-reactive encounter between species of masses ``m_i``, ``m_j``."""
    mu = reduced_mass(m_i, m_j)
    total = _relative_kinetic(inp.v_i, inp.v_j, mu) + inp.I_i + inp.I_j
    kinetic = inp.R * total
    internal = (1.0 - inp.R) * total
    ok = np.ones(np.shape(total), dtype=bool)
    vi, vj = _split(inp.v_i, inp.v_j, m_i, m_j, m_i, m_j, kinetic, inp.sigma, ok)
    return CollisionOutput(vi, vj, inp.r * internal, (1.0 - inp.r) * internal, ok)


def elastic_monospecies(inp: CollisionInput, m_i: float) -> CollisionOutput:
    """Same-species encounter; the total energy uses ``m_i/4 |v - v*|**2``."""
    total = 0.25 * m_i * np.sum((inp.v_i - inp.v_j) ** 2, axis=-1) + inp.I_i + inp.I_j
    centre = 0.5 * (inp.v_i + inp.v_j)
    offset = np.sqrt(inp.R * total / m_i)[..., None] * inp.sigma
    internal = (1.0 - inp.R) * total
    ok = np.ones(np.shape(total), dtype=bool)
    return CollisionOutput(centre + offset, centre - offset, inp.r * internal, (1.0 - inp.r) * internal, ok)


def reactive_forward(inp: CollisionInput, reaction: ReactionSpec) -> CollisionOutput:
    """Species (1, 2) in, species (3, 4) out.

    For an endothermic reaction (E > 0) the point must lie in the threshold
    set: both internal energies, the relative kinetic energy and each outgoing
    share of the available energy at least E/6.  For E <= 0 those thresholds
    are vacuous and only non-negativity of the outputs is required.
    """
    m1, m2, m3, m4 = reaction.masses
    E = reaction.heat
    mu12 = reduced_mass(m1, m2)
    kinetic_in = _relative_kinetic(inp.v_i, inp.v_j, mu12)
    total = kinetic_in + inp.I_i + inp.I_j - E / 2.0
    share = inp.R * total
    int3 = inp.r * (1.0 - inp.R) * total
    int4 = (1.0 - inp.r) * (1.0 - inp.R) * total
    threshold = max(E, 0.0) / 6.0
    ok = (
        (inp.I_i >= threshold)
        & (inp.I_j >= threshold)
        & (kinetic_in >= threshold)
        & (share >= threshold)
        & (int3 >= threshold)
        & (int4 >= threshold)
    )
    kinetic_out = share - E / 6.0
    I3 = int3 - E / 6.0
    I4 = int4 - E / 6.0
    ok &= (kinetic_out >= 0) & (I3 >= 0) & (I4 >= 0)
    v3, v4 = _split(inp.v_i, inp.v_j, m1, m2, m3, m4, kinetic_out, inp.sigma, ok)
    return CollisionOutput(v3, v4, np.where(ok, I3, np.nan), np.where(ok, I4, np.nan), ok)


def reactive_backward(inp: CollisionInput, reaction: ReactionSpec) -> CollisionOutput:
    """Species (3, 4) in, species (1, 2) out.

    The backward admissible sets impose no thresholds.  When E < 0 an extreme
    repartition can still give a negative outgoing energy; such points are
    flagged inadmissible rather than clamped.
    """
    m1, m2, m3, m4 = reaction.masses
    E = reaction.heat
    mu34 = reduced_mass(m3, m4)
    total = _relative_kinetic(inp.v_i, inp.v_j, mu34) + inp.I_i + inp.I_j + E / 2.0
    kinetic_out = inp.R * total + E / 6.0
    I1 = inp.r * (1.0 - inp.R) * total + E / 6.0
    I2 = (1.0 - inp.r) * (1.0 - inp.R) * total + E / 6.0
    ok = (kinetic_out >= 0) & (I1 >= 0) & (I2 >= 0)
    v1, v2 = _split(inp.v_i, inp.v_j, m3, m4, m1, m2, kinetic_out, inp.sigma, ok)
    return CollisionOutput(v1, v2, np.where(ok, I1, np.nan), np.where(ok, I2, np.nan), ok)


def omega_to_sigma(omega, y):
    """Map a reflection normal ``omega`` to the outgoing direction ``sigma``.

    ``sigma = y - 2 (omega . y) omega``; the Jacobian of the change of variables
    is ``4 |omega . y|``.
    """
    omega = np.asarray(omega, dtype=float)
    y = np.asarray(y, dtype=float)
    for name, vec in (("omega", omega), ("y", y)):
        if vec.shape[-1:] != (3,) or np.any(np.abs(np.linalg.norm(vec, axis=-1) - 1.0) > UNIT_TOLERANCE):
            raise DomainError(f"{name} must be a unit vector")
    dot = np.sum(omega * y, axis=-1)
    sigma = y - 2.0 * dot[..., None] * omega
    return sigma, 4.0 * np.abs(dot)


def sigma_from_omega(v_i, v_j, omega):
    """Outgoing direction for a collision written with a reflection normal.

    The reflected vector is the unit pre-collision relative velocity
    ``(v_i - v_j)/|v_i - v_j|``.  When the two velocities coincide that
    direction is undefined and ``omega`` itself serves as the reference.
    """
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    omega = np.asarray(omega, dtype=float)
    rel = v_i - v_j
    norm = np.linalg.norm(rel, axis=-1, keepdims=True)
    y = np.where(norm > 0, rel / np.where(norm > 0, norm, 1.0), omega)
    return omega_to_sigma(omega, y)[0]
