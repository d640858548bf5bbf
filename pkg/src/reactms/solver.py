"""0D and 1D integration of the Maxwell-Stefan reaction-diffusion limit system.

Unknowns per cell are the four number densities and the temperature.  The
mixture energy density ``e = sum n_i (3/2 kT + q_i*/q_i)`` carries the
temperature; it changes through the interdiffusion enthalpy flux and the
reaction heat.  A time step is split into transport (1D only) followed by
chemistry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, special

from .coefficients import CoefficientCache, ms_rhs
from .errors import DomainError, NumericalError, StiffnessError
from .mixture import STOICHIOMETRY, ReactionSpec, mass_action_ratio, partition_q, partition_qstar

CLOSURES = ("zero_mass_flux", "zero_molar_flux")
CFL_SAFETY = 0.4
MAX_HALVINGS = 40
ENERGY_RTOL = 1e-12


@dataclass(frozen=True)
class Grid1D:
    cell_count: int
    cell_width: float
    boundary: str = "zero_flux"

    def __post_init__(self) -> None:
        if int(self.cell_count) < 1:
            raise DomainError("a grid needs at least one cell")
        if not (math.isfinite(self.cell_width) and self.cell_width > 0):
            raise DomainError("cell width must be positive")
        if self.boundary != "zero_flux":
            raise DomainError(f"unsupported boundary {self.boundary!r}; only zero_flux is available")


@dataclass(frozen=True)
class MixtureState:
    """Cell densities ``n`` (cells, 4), temperatures ``T`` (cells,), face fluxes ``J`` (cells + 1, 4)."""

    n: np.ndarray
    T: np.ndarray
    J: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = np.atleast_2d(np.asarray(self.n, dtype=float))
        T = np.atleast_1d(np.asarray(self.T, dtype=float))
        if n.shape[1:] != (4,) or T.shape != (n.shape[0],):
            raise DomainError("state needs n of shape (cells, 4) and T of shape (cells,)")
        if np.any(n < 0) or not np.all(np.isfinite(n)):
            raise DomainError("densities must be finite and non-negative")
        if np.any(~(T > 0)) or not np.all(np.isfinite(T)):
            raise DomainError("temperatures must be positive and finite")
        J = np.zeros((n.shape[0] + 1, 4)) if self.J is None else np.asarray(self.J, dtype=float)
        if J.shape != (n.shape[0] + 1, 4):
            raise DomainError("fluxes must have shape (cells + 1, 4)")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "J", J)

    @property
    def cells(self) -> int:
        return self.n.shape[0]

    def partial_totals(self) -> np.ndarray:
        """Domain sums of n1+n3, n1+n4 and n2+n3."""
        s = self.n.sum(axis=0)
        return np.array([s[0] + s[2], s[0] + s[3], s[1] + s[2]])


def _partition_arrays(reaction: ReactionSpec, T: np.ndarray):
    """``q`` and ``q*`` for every cell, shape (cells, 4)."""
    T = np.asarray(T, dtype=float)
    kT = reaction.constants.k_B * T
    q = np.empty(T.shape + (4,))
    qs = np.empty(T.shape + (4,))
    for i, s in enumerate(reaction.species):
        if s.polytropic:
            a = s.weight
            q[..., i] = kT ** (a + 1) * special.gamma(a + 1)
            qs[..., i] = kT ** (a + 2) * special.gamma(a + 2)
        else:
            flat = T.reshape(-1)
            q[..., i] = np.array([partition_q(s, t, reaction.constants) for t in flat]).reshape(T.shape)
            qs[..., i] = np.array([partition_qstar(s, t, reaction.constants) for t in flat]).reshape(T.shape)
    return q, qs


def energy_density(reaction: ReactionSpec, n, T) -> np.ndarray:
    """``sum_i n_i (3/2 kT + q_i*/q_i)`` per cell."""
    n = np.asarray(n, dtype=float)
    T = np.asarray(T, dtype=float)
    q, qs = _partition_arrays(reaction, T)
    kT = reaction.constants.k_B * T
    return np.sum(n * (1.5 * kT[..., None] + qs / q), axis=-1)


def temperature_from_energy(reaction: ReactionSpec, n, e) -> np.ndarray:
    """Invert :func:`energy_density` at fixed densities, cell by cell."""
    n = np.atleast_2d(np.asarray(n, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if np.any(n.sum(axis=1) <= 0):
        raise DomainError("temperature is undefined where every density is zero")
    if np.any(~(e > 0)):
        raise DomainError("energy density must be positive")
    k_B = reaction.constants.k_B
    if all(s.polytropic for s in reaction.species):
        heat_capacity = n @ np.array([2.5 + s.weight for s in reaction.species])
        return e / (heat_capacity * k_B)
    out = np.empty(len(e))
    for c in range(len(e)):
        target = e[c]

        def residual(T):
            return float(energy_density(reaction, n[c], np.asarray(T))) - target

        lo, hi = 1e-3, 1.0
        while residual(hi) < 0:
            hi *= 2.0
        while residual(lo) > 0:
            lo *= 0.5
        out[c] = optimize.brentq(residual, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return out


def equilibrium_residual(reaction: ReactionSpec, n, T) -> np.ndarray:
    """Relative distance ``|n1 n2 / (n3 n4) - K(T)| / K(T)`` per cell."""
    n = np.atleast_2d(np.asarray(n, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    K = np.array([mass_action_ratio(reaction, t) for t in T])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = n[:, 0] * n[:, 1] / (n[:, 2] * n[:, 3])
    return np.abs(ratio - K) / K


# -- Maxwell-Stefan fluxes --------------------------------------------------


@dataclass(frozen=True)
class FluxSolution:
    J: np.ndarray
    projection_norm: float
    residual: float


def _closure_weights(closure: str, masses) -> np.ndarray:
    if closure == "zero_mass_flux":
        return np.asarray(masses, dtype=float)
    if closure == "zero_molar_flux":
        return np.ones(4)
    raise DomainError(f"unknown closure {closure!r}; choose one of {CLOSURES}")


def ms_matrix(n, D) -> np.ndarray:
    """Matrix ``B`` with ``(B J)_i = -sum_j (n_j J_i - n_i J_j) / D_ij``; batched over leading axes."""
    n = np.asarray(n, dtype=float)
    D = np.asarray(D, dtype=float)
    inv = np.where(np.eye(4, dtype=bool), 0.0, 1.0 / D)
    B = n[..., :, None] * inv
    idx = np.arange(4)
    B[..., idx, idx] = -np.einsum("...ij,...j->...i", np.broadcast_to(inv, B.shape), n)
    return B


def solve_fluxes(g, n, D, closure: str = "zero_mass_flux", masses=None) -> FluxSolution:
    """Invert the Maxwell-Stefan relations at one or many faces.

    ``g`` holds the gradients of ``n_i kT`` with shape (..., 4); ``n`` the face
    densities (..., 4); ``D`` a 4x4 table or a stack (..., 4, 4).  The
    relations are rank deficient, so the last row of each system is replaced
    by the closure.  Gradients are first projected onto the zero-sum subspace.
    Species with zero density at a face are removed and get zero flux.
    """
    g = np.asarray(g, dtype=float)
    n = np.asarray(n, dtype=float)
    batch = np.broadcast_shapes(g.shape[:-1], n.shape[:-1])
    g = np.broadcast_to(g, batch + (4,)).reshape(-1, 4)
    n = np.broadcast_to(n, batch + (4,)).reshape(-1, 4)
    D = np.broadcast_to(np.asarray(D, dtype=float), batch + (4, 4)).reshape(-1, 4, 4)
    if np.any(n < 0):
        raise DomainError("face densities must be non-negative")
    if masses is None and closure == "zero_mass_flux":
        raise DomainError("the zero_mass_flux closure needs the species masses")
    w = _closure_weights(closure, np.ones(4) if masses is None else masses)

    shift = g.mean(axis=1, keepdims=True)
    projection = float(np.max(np.abs(shift))) * 2.0 if g.size else 0.0
    g = g - shift

    J = np.zeros_like(g)
    active = n > 0
    for pattern in np.unique(active, axis=0):
        rows = np.all(active == pattern, axis=1)
        idx = np.flatnonzero(pattern)
        if idx.size == 0:
            continue
        if idx.size == 1:
            continue  # a lone species cannot interdiffuse; closure forces zero flux
        sub_n = n[rows][:, idx]
        sub_D = D[rows][:, idx][:, :, idx]
        inv = np.where(np.eye(idx.size, dtype=bool), 0.0, 1.0 / sub_D)
        B = sub_n[:, :, None] * inv
        B[:, np.arange(idx.size), np.arange(idx.size)] = -np.einsum("fij,fj->fi", inv, sub_n)
        rhs = g[rows][:, idx].copy()
        # Terms of removed species must vanish; their share of g is folded into the projection.
        rhs -= rhs.mean(axis=1, keepdims=True)
        B[:, -1, :] = w[idx]
        rhs[:, -1] = 0.0
        try:
            sol = np.linalg.solve(B, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Maxwell-Stefan system") from exc
        J[np.ix_(rows, idx)] = sol
    residual = _relative_residual(g, n, D, J)
    return FluxSolution(J.reshape(batch + (4,)), projection, residual)


def _relative_residual(g, n, D, J) -> float:
    if g.size == 0:
        return 0.0
    inv = np.where(np.eye(4, dtype=bool), 0.0, 1.0 / D)
    r = -(np.einsum("fij,fj->fi", inv, n) * J - n * np.einsum("fij,fj->fi", inv, J)) - np.where(n > 0, g, 0.0)
    scale = np.max(np.abs(g)) + np.max(np.abs(np.einsum("fij,fj->fi", inv, n) * J), initial=0.0)
    return float(np.max(np.abs(r)) / scale) if scale > 0 else 0.0


# -- chemistry ---------------------------------------------------------------


@dataclass
class ChemistryResult:
    n: np.ndarray
    T: np.ndarray
    e: np.ndarray
    extent: np.ndarray  # sum of A dt per cell; n changes by -lambda * extent
    production: np.ndarray  # A at the start of the step
    substeps: int = 1


def production_rate(reaction: ReactionSpec, cache: CoefficientCache, n, T) -> np.ndarray:
    """Production term per cell.

    The kinetic rate constant comes from the temperature-keyed cache; the
    density bracket is evaluated at the exact temperature so that the rate
    vanishes exactly on the mass action manifold.
    """
    n = np.atleast_2d(n)
    T = np.atleast_1d(T)
    k = np.array([cache.get(t).rate_constant for t in T])
    q, _ = _partition_arrays(reaction, T)
    m = reaction.masses
    kT = reaction.constants.k_B * T
    fwd = (m[2] * m[3] / (m[0] * m[1])) ** 1.5 * np.exp(-reaction.heat / kT) / (q[:, 0] * q[:, 1])
    bracket = fwd * n[:, 0] * n[:, 1] - n[:, 2] * n[:, 3] / (q[:, 2] * q[:, 3])
    return k * bracket


def _implicit_extent(reaction, cache, n, e, dt):
    """Backward-Euler reaction extent for one cell."""
    E = reaction.heat
    lo = -min(n[2], n[3])
    hi = min(n[0], n[1])
    if E > 0:
        hi = min(hi, e / E * (1 - 1e-12))
    elif E < 0:
        lo = max(lo, e / E * (1 - 1e-12))

    def f(x):
        nx = n - STOICHIOMETRY * x
        nx = np.maximum(nx, 0.0)
        T = temperature_from_energy(reaction, nx, e - E * x)
        return x - dt * float(production_rate(reaction, cache, nx, T)[0])

    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo > 0 or fhi < 0:
        raise NumericalError("implicit chemistry could not bracket the reaction extent")
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def chemical_step(
    reaction: ReactionSpec,
    cache: CoefficientCache,
    n,
    T,
    dt: float,
    implicit: bool = False,
) -> ChemistryResult:
    """Advance densities and energy through the reaction alone.

    Explicit mode halves the step (per cell, by substepping) whenever a
    density would turn negative.  Implicit mode solves the backward-Euler
    extent with a bracketed scalar root.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError("dt must be positive")
    n = np.atleast_2d(np.asarray(n, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    e = energy_density(reaction, n, T)
    A0 = production_rate(reaction, cache, n, T)
    E = reaction.heat
    if implicit:
        extent = np.array([_implicit_extent(reaction, cache, n[c], e[c], dt) for c in range(len(e))])
        n_new = n - STOICHIOMETRY * extent[:, None]
        e_new = e - E * extent
        return ChemistryResult(n_new, temperature_from_energy(reaction, n_new, e_new), e_new, extent, A0)

    # Whole-step update everywhere; cells that would go negative are substepped.
    extent = A0 * dt
    n_new = n - STOICHIOMETRY * extent[:, None]
    e_new = e - E * extent
    ok = np.all(n_new >= 0, axis=1) & (e_new > 0)
    T_new = T.copy()
    if np.any(ok):
        T_new[ok] = temperature_from_energy(reaction, n_new[ok], e_new[ok])
    substeps = 1
    for c in np.flatnonzero(~ok):
        n_new[c], e_new[c], T_new[c], extent[c], used = _halving_cell(reaction, cache, n[c], e[c], A0[c], dt)
        substeps = max(substeps, used)
    return ChemistryResult(n_new, T_new, e_new, extent, A0, substeps)


def _halving_cell(reaction, cache, nc, ec, A, dt):
    """Explicit chemistry for one cell whose full step overshoots."""
    E = reaction.heat
    remaining, h, halvings, used, extent = dt, 0.5 * dt, 1, 0, 0.0
    Tc = None
    while remaining > 0:
        h = min(h, remaining)
        x = A * h
        trial = nc - STOICHIOMETRY * x
        e_trial = ec - E * x
        if np.any(trial < 0) or e_trial <= 0:
            h *= 0.5
            halvings += 1
            if halvings > MAX_HALVINGS:
                raise StiffnessError("chemistry step underflowed while halving; switch to the implicit integrator")
            continue
        nc, ec = trial, e_trial
        Tc = float(temperature_from_energy(reaction, nc, ec)[0])
        extent += x
        remaining -= h
        used += 1
        A = float(production_rate(reaction, cache, nc, Tc)[0])
    return nc, ec, Tc, extent, used


def chemistry_timescale(reaction: ReactionSpec, cache: CoefficientCache, n, T) -> float:
    """Relaxation time of the linearized rate equation, the smallest over cells."""
    n = np.atleast_2d(n)
    T = np.atleast_1d(T)
    rates = []
    for c in range(len(T)):
        cs = cache.get(T[c])
        q, _ = _partition_arrays(reaction, T[c : c + 1])
        k = cs.rate_constant
        m = reaction.masses
        kf = k * (m[2] * m[3] / (m[0] * m[1])) ** 1.5 * math.exp(-reaction.heat / reaction.kT(T[c])) / (q[0, 0] * q[0, 1])
        kb = k / (q[0, 2] * q[0, 3])
        rates.append(kf * (n[c, 0] + n[c, 1]) + kb * (n[c, 2] + n[c, 3]))
    rate = max(rates)
    return math.inf if rate <= 0 else 1.0 / rate


# -- transport ---------------------------------------------------------------


def stable_dt(reaction: ReactionSpec, cache: CoefficientCache, state: MixtureState, grid: Grid1D, safety=CFL_SAFETY):
    """Largest diffusive step the explicit transport update accepts.

    The effective diffusivity of species ``i`` scales like ``D kT / n``, so the
    bound is ``safety dx**2 min(n) / (kT max D)``.
    """
    if state.cells < 2:
        return math.inf
    ntot = state.n.sum(axis=1)
    sets = {id(cs): cs for cs in map(cache.get, state.T)}
    Dmax = max(float(np.max(cs.D, where=np.isfinite(cs.D), initial=0.0)) for cs in sets.values())
    kTmax = reaction.constants.k_B * float(np.max(state.T))
    return safety * grid.cell_width**2 * float(np.min(ntot)) / (kTmax * Dmax)


@dataclass
class StepReport:
    state: MixtureState
    production: np.ndarray
    extent: np.ndarray
    projection_norm: float
    flux_residual: float


def face_fluxes(reaction, cache, state: MixtureState, grid: Grid1D, closure: str):
    n, T = state.n, state.T
    kT = reaction.constants.k_B * T
    faces = np.zeros((state.cells + 1, 4))
    if state.cells < 2:
        return faces, 0.0, 0.0
    p = n * kT[:, None]
    g = (p[1:] - p[:-1]) / grid.cell_width
    nf = 0.5 * (n[1:] + n[:-1])
    Tf = 0.5 * (T[1:] + T[:-1])
    D = np.stack([cache.get(t).D for t in Tf])
    sol = solve_fluxes(g, nf, D, closure, reaction.masses)
    faces[1:-1] = sol.J
    return faces, sol.projection_norm, sol.residual


def advance_1d(
    reaction: ReactionSpec,
    cache: CoefficientCache,
    state: MixtureState,
    dt: float,
    grid: Grid1D,
    closure: str = "zero_mass_flux",
    implicit: bool = False,
    safety: float = CFL_SAFETY,
) -> StepReport:
    """One split step: interdiffusion with the enthalpy flux, then chemistry."""
    if grid.cell_count != state.cells:
        raise DomainError("grid and state disagree on the number of cells")
    limit = stable_dt(reaction, cache, state, grid, safety)
    if dt > limit:
        raise NumericalError(f"dt = {dt:.6g} exceeds the diffusive stability limit; use dt <= {limit:.6g}")
    J, proj, res = face_fluxes(reaction, cache, state, grid, closure)
    n, T = state.n, state.T
    e = energy_density(reaction, n, T)
    if state.cells > 1:
        Tf = np.empty(state.cells + 1)
        Tf[1:-1] = 0.5 * (T[1:] + T[:-1])
        Tf[0], Tf[-1] = T[0], T[-1]
        q, qs = _partition_arrays(reaction, Tf)
        enthalpy = 2.5 * reaction.constants.k_B * Tf[:, None] + qs / q
        H = np.sum(enthalpy * J, axis=1)
        n = n - dt * (J[1:] - J[:-1]) / grid.cell_width
        e = e - dt * (H[1:] - H[:-1]) / grid.cell_width
        if np.any(n < 0) or np.any(e <= 0):
            raise NumericalError("transport step produced a negative density or energy; reduce dt")
        T = temperature_from_energy(reaction, n, e)
    chem = chemical_step(reaction, cache, n, T, dt, implicit)
    new = MixtureState(chem.n, chem.T, J)
    return StepReport(new, chem.production, chem.extent, proj, res)


# -- run loops ---------------------------------------------------------------


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    production: list = field(default_factory=list)
    max_energy_defect: float = 0.0
    max_projection: float = 0.0
    max_flux_residual: float = 0.0
    steps: int = 0


def relax_0d(
    reaction: ReactionSpec,
    cache: CoefficientCache,
    n0,
    T0: float,
    t_end: float,
    dt: float | None = None,
    implicit: bool = False,
    output_every: int = 1,
) -> Trajectory:
    """Space-homogeneous relaxation.

    Densities are rebuilt each step from the initial ones and the cumulative
    reaction extent, which keeps the three partial densities at their initial
    values up to a single rounding.
    """
    n0 = np.asarray(n0, dtype=float).reshape(1, 4)
    state = MixtureState(n0, np.array([float(T0)]))
    if dt is None:
        dt = 0.05 * chemistry_timescale(reaction, cache, state.n, state.T)
        if not math.isfinite(dt):
            dt = t_end
    traj = Trajectory()
    traj.times.append(0.0)
    traj.states.append(state)
    traj.production.append(production_rate(reaction, cache, state.n, state.T))
    total_extent = np.zeros(1)
    t, step = 0.0, 0
    e = energy_density(reaction, state.n, state.T)
    while t < t_end * (1 - 1e-14):
        h = min(dt, t_end - t)
        chem = chemical_step(reaction, cache, state.n, state.T, h, implicit)
        total_extent = total_extent + chem.extent
        n = n0 - STOICHIOMETRY * total_extent[:, None]
        e_new = e - reaction.heat * chem.extent
        T = temperature_from_energy(reaction, n, e_new)
        defect = abs(float(energy_density(reaction, n, T)[0] - e[0] + reaction.heat * chem.extent[0]))
        traj.max_energy_defect = max(traj.max_energy_defect, defect / max(abs(e[0]), 1e-300))
        state, e = MixtureState(n, T), e_new
        t += h
        step += 1
        if step % output_every == 0 or t >= t_end * (1 - 1e-14):
            traj.times.append(t)
            traj.states.append(state)
            traj.production.append(production_rate(reaction, cache, state.n, state.T))
    traj.steps = step
    return traj


def diffuse_1d(
    reaction: ReactionSpec,
    cache: CoefficientCache,
    state: MixtureState,
    grid: Grid1D,
    t_end: float,
    dt: float | None = None,
    closure: str = "zero_mass_flux",
    implicit: bool = False,
    output_every: int = 100,
    safety: float = CFL_SAFETY,
    max_steps: int | None = None,
) -> Trajectory:
    if dt is not None and dt > stable_dt(reaction, cache, state, grid, safety):
        limit = stable_dt(reaction, cache, state, grid, safety)
        raise NumericalError(f"dt = {dt:.6g} exceeds the diffusive stability limit; use dt <= {limit:.6g}")
    if dt is None:
        dt = min(
            stable_dt(reaction, cache, state, grid, safety),
            0.05 * chemistry_timescale(reaction, cache, state.n, state.T),
        )
        if not math.isfinite(dt):
            dt = t_end
    traj = Trajectory()
    traj.times.append(0.0)
    traj.states.append(state)
    traj.production.append(production_rate(reaction, cache, state.n, state.T))
    t, step = 0.0, 0
    while t < t_end * (1 - 1e-14):
        if max_steps is not None and step >= max_steps:
            break
        h = min(dt, t_end - t)
        # Near-equilibrium states can drift a hair past the bound set at t = 0.
        limit = stable_dt(reaction, cache, state, grid, safety)
        h = min(h, limit)
        rep = advance_1d(reaction, cache, state, h, grid, closure, implicit, safety)
        state = rep.state
        traj.max_projection = max(traj.max_projection, rep.projection_norm)
        traj.max_flux_residual = max(traj.max_flux_residual, rep.flux_residual)
        t += h
        step += 1
        if step % output_every == 0 or t >= t_end * (1 - 1e-14):
            traj.times.append(t)
            traj.states.append(state)
            traj.production.append(rep.production)
    traj.steps = step
    return traj


def uniform_state(n, T, cells: int) -> MixtureState:
    n = np.asarray(n, dtype=float)
    return MixtureState(np.tile(n, (cells, 1)), np.full(cells, float(T)))


def with_fluxes(state: MixtureState, J) -> MixtureState:
    return replace(state, J=np.asarray(J, dtype=float))
