"""Coupled time stepper: spectral Galerkin momentum balance with the
proximally regularized stress, plus semi-Lagrangian density transport.

Semi-discrete system for coefficients a(t) over the divergence-free basis:

    B(rho) da/dt = h(t, a),
    B_ij = Int rho w_i . w_j dx,
    h_j  = -Int rho (ubar . grad u) . w_j dx - Int S_alpha(Du) : D w_j dx,

with rho advected by the same velocity. Each step runs a Picard loop on the
frozen transport velocity: advect with the velocity interpolated linearly
between a(t) and the current guess for a(t+dt), then integrate the ODE with
classical RK4 (mass matrix assembled and Cholesky-factorized per stage), and
repeat until successive guesses agree in sup norm. A non-converging step is
retried once at half the step size before giving up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalFailure, StepFailure
from .rheology import (
    ConvexPotentialSpec,
    envelope_conjugate,
    moreau_envelope,
    moreau_stress,
)
from .tensor_core import (
    SQRT2,
    TWO_PI,
    BasisTables,
    QuadratureGrid,
    SYM_WEIGHTS,
    build_divfree_basis,
    sym_inner,
)
from .transport import DensityField, advect_density
from . import diagnostics


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class InitialVelocity:
    """Initial velocity descriptor: rest, or one cosine mode sqrt(2) w cos(2 pi k.x)."""

    kind: str
    k: tuple[int, int, int] | None = None
    w: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.kind == "rest":
            if self.k is not None or self.w is not None:
                raise ValueError("rest takes no mode parameters")
            return
        if self.kind != "single_mode":
            raise ValueError(f"unknown initial velocity kind {self.kind!r}")
        if self.k is None or self.w is None:
            raise ValueError("single_mode needs both k and w")
        k = tuple(int(c) for c in self.k)
        w = tuple(float(c) for c in self.w)
        if k == (0, 0, 0):
            raise ValueError("wavevector must be nonzero")
        dot = sum(ki * wi for ki, wi in zip(k, w))
        scale = math.sqrt(sum(c * c for c in k)) * max(
            1.0, math.sqrt(sum(c * c for c in w)))
        if abs(dot) > 1e-12 * scale:
            raise ValueError("w must be orthogonal to k (incompressibility)")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "w", w)

    @classmethod
    def rest(cls) -> "InitialVelocity":
        return cls(kind="rest")

    @classmethod
    def single_mode(cls, k, w) -> "InitialVelocity":
        return cls(kind="single_mode", k=tuple(k), w=tuple(w))


@dataclass(frozen=True)
class InitialDensity:
    """Initial density: constant, or value + amplitude cos(2 pi x_1)."""

    kind: str
    value: float
    amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "cosine"):
            raise ValueError(f"unknown initial density kind {self.kind!r}")
        if self.kind == "constant" and self.amplitude != 0.0:
            raise ValueError("constant profile takes no amplitude")

    @classmethod
    def constant(cls, value: float) -> "InitialDensity":
        return cls(kind="constant", value=float(value))

    @classmethod
    def cosine(cls, value: float, amplitude: float) -> "InitialDensity":
        return cls(kind="cosine", value=float(value), amplitude=float(amplitude))


@dataclass(frozen=True)
class SimConfig:
    """Full run description; validated on construction."""

    kmax: int
    density_resolution: int
    dt: float
    t_final: float
    alpha: float
    gamma: float
    potential: ConvexPotentialSpec
    rho_min: float
    rho_max: float
    quad_resolution: int | None = None
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    u0: InitialVelocity = InitialVelocity.rest()
    rho0: InitialDensity | None = None
    snapshot_every: int = 0
    energy_excess_tol: float = 1e-3
    perturb_delta: float = 0.0
    perturb_index: int = 0

    def __post_init__(self):
        if self.kmax < 1:
            raise ValueError("kmax must be at least 1")
        if self.density_resolution < 2:
            raise ValueError("density grid too coarse")
        if not (self.dt > 0.0):
            raise ValueError("dt must be positive")
        if self.t_final < 0.0:
            raise ValueError("t_final must be nonnegative")
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be positive")
        if not (self.gamma > 1.0):
            raise ValueError("gamma must exceed 1")
        if not (0.0 < self.rho_min <= self.rho_max):
            raise ValueError("need 0 < rho_min <= rho_max")
        if not (self.picard_tol > 0.0) or self.picard_max_iter < 1:
            raise ValueError("bad Picard parameters")
        if self.snapshot_every < 0:
            raise ValueError("snapshot cadence must be nonnegative")
        if not (self.energy_excess_tol > 0.0):
            raise ValueError("energy excess tolerance must be positive")
        if self.perturb_index < 0:
            raise ValueError("perturbation index must be nonnegative")
        if self.quad_resolution is not None \
                and self.quad_resolution <= 6 * self.kmax:
            raise ValueError(
                "quadrature resolution must exceed 6*kmax to integrate "
                "the triple products exactly")
        if self.rho0 is None:
            mid = 0.5 * (self.rho_min + self.rho_max)
            object.__setattr__(self, "rho0", InitialDensity.constant(mid))
        lo = self.rho0.value - abs(self.rho0.amplitude)
        hi = self.rho0.value + abs(self.rho0.amplitude)
        if lo < self.rho_min or hi > self.rho_max:
            raise ValueError("initial density profile leaves declared bounds")

    @property
    def effective_quad_resolution(self) -> int:
        if self.quad_resolution is not None:
            return self.quad_resolution
        return 6 * self.kmax + 1  # exact for triple products of modes


@dataclass
class SolverState:
    """Time level: coefficients, density, stress samples on the quad grid."""

    t: float
    a: np.ndarray
    rho: DensityField
    stress: np.ndarray | None = None


def build_tables(config: SimConfig) -> BasisTables:
    modes = build_divfree_basis(config.kmax)
    grid = QuadratureGrid(config.effective_quad_resolution, config.kmax, 3)
    return BasisTables(modes, grid)


# ---------------------------------------------------------------------------
# assembly


def _mass_from_samples(rho_q: np.ndarray, tables: BasisTables) -> np.ndarray:
    weighted = tables.values * (rho_q / tables.n_nodes)
    gram = weighted @ tables.values.T
    return (tables.E @ tables.E.T) * gram


def assemble_mass_matrix(rho: DensityField, tables: BasisTables) -> np.ndarray:
    """B_ij = Int rho w_i . w_j dx; symmetric, spectrum within density bounds."""
    return _mass_from_samples(rho.sample(tables.points), tables)


def _rhs_from_samples(rho_q, a_bar, a, potential, alpha, tables) -> np.ndarray:
    grad_u = tables.grad_nodes(a)               # (3,3,N), entries d_j u_i
    ubar = tables.velocity_nodes(a_bar)         # (3,N)
    adv = np.einsum("jq,ijq->iq", ubar, grad_u)
    inv_n = 1.0 / tables.n_nodes
    conv = np.einsum("q,iq,ri,rq->r", rho_q, adv, tables.E, tables.values) * inv_n
    stress = stress_samples(a, potential, alpha, tables)
    visc = np.einsum("cq,c,rc,rq->r", stress, SYM_WEIGHTS, tables.S6,
                     tables.partners) * inv_n
    return -(conv + visc)


def assemble_rhs(rho: DensityField, a_bar: np.ndarray, a: np.ndarray,
                 potential: ConvexPotentialSpec, alpha: float,
                 tables: BasisTables) -> np.ndarray:
    """h_j = -Int rho (ubar.grad u).w_j - Int S_alpha(Du):Dw_j, by quadrature."""
    return _rhs_from_samples(rho.sample(tables.points), a_bar, a,
                             potential, alpha, tables)


def stress_samples(a: np.ndarray, potential: ConvexPotentialSpec, alpha: float,
                   tables: BasisTables) -> np.ndarray:
    """Regularized stress S_alpha(Du) at all quadrature nodes, shape (6,N)."""
    du = tables.symgrad_nodes(a)
    return moreau_stress(potential, du.T, alpha).T


def dissipation_rate(a: np.ndarray, potential: ConvexPotentialSpec,
                     alpha: float, tables: BasisTables) -> tuple[float, float]:
    """Int [F_alpha(Du) + F*_alpha(S_alpha)] dx and its gap vs Int S_alpha:Du.

    The two agree analytically (Fenchel equality along the envelope gradient);
    the reported gap is a pure quadrature/roundoff diagnostic.
    """
    du = tables.symgrad_nodes(a).T              # (N,6)
    stress = moreau_stress(potential, du, alpha)
    rate = float(np.mean(moreau_envelope(potential, du, alpha)
                         + envelope_conjugate(potential, stress, alpha)))
    pairing = float(np.mean(sym_inner(stress, du)))
    return rate, rate - pairing


# ---------------------------------------------------------------------------
# stepping


class _PicardNoConvergence(Exception):
    def __init__(self, residual: float):
        super().__init__(f"Picard residual {residual:.3e}")
        self.residual = residual


def _linear_velocity(tables: BasisTables, a_start, a_end, t0: float, dt: float):
    """Velocity callable interpolating coefficients linearly over [t0, t0+dt]."""
    a_start = np.asarray(a_start, dtype=float)
    a_end = np.asarray(a_end, dtype=float)

    def velocity(s, pts):
        theta = min(max((s - t0) / dt, 0.0), 1.0)
        return tables.velocity_at(a_start + theta * (a_end - a_start), pts)

    return velocity


def _solve_stage(rho_q, abar_s, a_s, config, tables, factor_cache, key):
    if key not in factor_cache:
        mass = _mass_from_samples(rho_q, tables)
        try:
            factor_cache[key] = scipy.linalg.cho_factor(mass)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalFailure(f"mass matrix factorization failed: {exc}")
    h = _rhs_from_samples(rho_q, abar_s, a_s, config.potential, config.alpha,
                          tables)
    if not np.all(np.isfinite(h)):
        raise NumericalFailure("non-finite Galerkin load vector "
                               "(diverging coefficients)")
    return scipy.linalg.cho_solve(factor_cache[key], h)


def _attempt_step(state: SolverState, dt: float, config: SimConfig,
                  tables: BasisTables) -> SolverState:
    t0, a0, rho0 = state.t, state.a, state.rho
    rho_q0 = rho0.sample(tables.points)
    a_bar = a0.copy()
    residual = math.inf
    for _ in range(config.picard_max_iter):
        velocity = _linear_velocity(tables, a0, a_bar, t0, dt)
        rho_half = advect_density(rho0, velocity, t0, 0.5 * dt)
        rho_full = advect_density(rho_half, velocity, t0 + 0.5 * dt, 0.5 * dt)
        rho_qh = rho_half.sample(tables.points)
        rho_qf = rho_full.sample(tables.points)

        def abar_at(s):
            theta = (s - t0) / dt
            return a0 + theta * (a_bar - a0)

        cache: dict = {}
        k1 = _solve_stage(rho_q0, abar_at(t0), a0, config, tables, cache, 0)
        k2 = _solve_stage(rho_qh, abar_at(t0 + 0.5 * dt),
                          a0 + 0.5 * dt * k1, config, tables, cache, 1)
        k3 = _solve_stage(rho_qh, abar_at(t0 + 0.5 * dt),
                          a0 + 0.5 * dt * k2, config, tables, cache, 1)
        k4 = _solve_stage(rho_qf, abar_at(t0 + dt),
                          a0 + dt * k3, config, tables, cache, 2)
        a_new = a0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(a_new)):
            raise NumericalFailure(f"non-finite coefficients at t={t0:.6g}")

        residual = float(np.max(np.abs(a_new - a_bar)))
        if residual < config.picard_tol:
            stress = stress_samples(a_new, config.potential, config.alpha,
                                    tables)
            return SolverState(t=t0 + dt, a=a_new, rho=rho_full, stress=stress)
        a_bar = a_new
    raise _PicardNoConvergence(residual)


def step(state: SolverState, config: SimConfig,
         tables: BasisTables | None = None,
         dt: float | None = None) -> SolverState:
    """Advance one step of size dt (default config.dt).

    On Picard non-convergence the step is retried as two half steps; if that
    fails as well a StepFailure carrying the last residual is raised.
    """
    if tables is None:
        tables = build_tables(config)
    dt = config.dt if dt is None else float(dt)
    try:
        return _attempt_step(state, dt, config, tables)
    except _PicardNoConvergence:
        pass
    try:
        mid = _attempt_step(state, 0.5 * dt, config, tables)
        return _attempt_step(mid, 0.5 * dt, config, tables)
    except _PicardNoConvergence as exc:
        raise StepFailure(
            f"step at t={state.t:.6g} did not converge (dt={dt:.3e}, "
            f"residual {exc.residual:.3e})", exc.residual)


# ---------------------------------------------------------------------------
# initial data and the driver


def _initial_density(config: SimConfig) -> DensityField:
    m = config.density_resolution
    if config.rho0.kind == "constant":
        values = np.full((m, m, m), config.rho0.value)
    else:
        x1 = np.arange(m) / m
        profile = config.rho0.value \
            + config.rho0.amplitude * np.cos(TWO_PI * x1)
        values = np.broadcast_to(profile[:, None, None], (m, m, m)).copy()
    return DensityField(values, config.rho_min, config.rho_max)


def _initial_coefficients(config: SimConfig, tables: BasisTables) -> np.ndarray:
    if config.u0.kind == "rest":
        a = np.zeros(tables.n_modes)
    else:
        kv = np.array(config.u0.k, dtype=float)
        wv = np.array(config.u0.w, dtype=float)
        phase = np.cos(TWO_PI * (tables.points @ kv))
        u_nodes = SQRT2 * phase[None, :] * wv[:, None]
        a = tables.project(u_nodes)
    if config.perturb_delta != 0.0:
        if config.perturb_index >= tables.n_modes:
            raise ValueError("perturbation index out of range")
        a = a.copy()
        a[config.perturb_index] += config.perturb_delta
    return a


def run(config: SimConfig) -> tuple[list[SolverState], "diagnostics.EnergyLedger"]:
    """Integrate the configured initial data to t_final.

    Returns the trajectory and the energy ledger.

    The dissipation column accumulates trapezoid sums of
    Int [F_alpha(Du) + F*_alpha(S_alpha)] between stored time levels.
    """
    tables = build_tables(config)
    rho = _initial_density(config)
    a0 = _initial_coefficients(config, tables)
    state = SolverState(t=0.0, a=a0, rho=rho,
                        stress=stress_samples(a0, config.potential,
                                              config.alpha, tables))
    ledger = diagnostics.EnergyLedger()
    first = diagnostics.energy_row(state, config, tables, 0.0)
    ledger.append(first)
    e0 = first.total

    states = [state]
    cumulative = 0.0
    rate_prev, _ = dissipation_rate(state.a, config.potential, config.alpha,
                                    tables)
    while state.t < config.t_final - 1e-12:
        dt = min(config.dt, config.t_final - state.t)
        state = step(state, config, tables, dt=dt)
        rate_new, _ = dissipation_rate(state.a, config.potential, config.alpha,
                                       tables)
        cumulative += 0.5 * (rate_prev + rate_new) * dt
        rate_prev = rate_new
        ledger.append(diagnostics.energy_row(state, config, tables, cumulative,
                                             0.0, e0))
        states.append(state)
    return states, ledger
