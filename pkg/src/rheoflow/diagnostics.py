"""Energy bookkeeping and the machinery for comparing a simulated flow
against a smooth reference solution.

The central objects are the per-step energy ledger (kinetic + compressive
gamma-term + accumulated dissipation + measure defect, with the residual
against the initial total), the relative energy

    E_rel = 1/2 Int rho |u - U|^2
          + Int [ rho^gamma/gamma - P^(gamma-1) rho + (gamma-1)/gamma P^gamma ]
          + defect,

whose Bregman middle term vanishes iff rho = P, and a Gronwall monitor that
checks E_rel stays under an exponential envelope. A decaying single-mode
Newtonian flow with unit density is provided as the exact strong solution
used by the comparison runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor_core
from .tensor_core import QuadratureGrid, VelocityField, sym_from_matrix
from .transport import DensityField, gamma_moment

_TWO_PI = tensor_core.TWO_PI
_SQRT2 = tensor_core.SQRT2


# ---------------------------------------------------------------------------
# energy ledger


@dataclass(frozen=True)
class EnergyRow:
    t: float
    kinetic: float
    gamma_term: float
    dissipation: float
    defect: float
    total: float
    residual: float


@dataclass
class EnergyLedger:
    """Ordered energy rows; appends enforce the structural invariants."""

    rows: list[EnergyRow] = field(default_factory=list)

    def append(self, row: EnergyRow) -> None:
        vals = (row.t, row.kinetic, row.gamma_term, row.dissipation,
                row.defect, row.total, row.residual)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite ledger entry at t={row.t}")
        if row.defect < 0.0:
            raise ValueError("defect must be nonnegative")
        if self.rows:
            if row.t <= self.rows[-1].t:
                raise ValueError("ledger times must increase")
            if row.dissipation < self.rows[-1].dissipation:
                raise ValueError("cumulative dissipation must not decrease")
        self.rows.append(row)

    @property
    def initial_energy(self) -> float:
        if not self.rows:
            raise ValueError("empty ledger")
        return self.rows[0].total


def energy_row(state, config, tables, cumulative_dissipation: float,
               defect: float = 0.0,
               initial_energy: float | None = None) -> EnergyRow:
    """Build one ledger row from a solver state.

    kinetic = 1/2 Int rho |u|^2 on the assembly quadrature grid (density by
    trilinear sampling), gamma_term = Int rho^gamma / gamma on the density's
    own grid. With initial_energy omitted the row defines the baseline and
    its residual is zero.
    """
    rho_q = state.rho.sample(tables.points)
    u_q = tables.velocity_nodes(state.a)
    kinetic = 0.5 * float(np.mean(rho_q * np.sum(u_q * u_q, axis=0)))
    gterm = gamma_moment(state.rho, config.gamma) / config.gamma
    total = kinetic + gterm + cumulative_dissipation + defect
    residual = 0.0 if initial_energy is None else total - initial_energy
    return EnergyRow(t=state.t, kinetic=kinetic, gamma_term=gterm,
                     dissipation=cumulative_dissipation, defect=defect,
                     total=total, residual=residual)


def energy_inequality_check(ledger: EnergyLedger) -> float:
    """Largest signed excess max_t [E(t) - E(0)]; positive means violation."""
    e0 = ledger.initial_energy
    return max(row.total - e0 for row in ledger.rows)


# ---------------------------------------------------------------------------
# relative energy


def bregman_density_gap(rho, p, gamma: float):
    """Pointwise rho^g/g - P^(g-1) rho + (g-1)/g P^g; nonnegative, zero iff rho=P."""
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    return rho ** gamma / gamma - p ** (gamma - 1.0) * rho \
        + (gamma - 1.0) / gamma * p ** gamma


def bregman_comparability_constant(rho_min: float, rho_max: float,
                                   gamma: float, samples: int = 400) -> float:
    """Smallest-known B with (rho - P)^2 <= B * bregman gap on the bound box.

    Dense sampling of the ratio plus the analytic diagonal limit
    2 / ((gamma-1) P^(gamma-2)).
    """
    if not (gamma > 1.0):
        raise ValueError("gamma must exceed 1")
    grid = np.linspace(rho_min, rho_max, samples)
    r, p = np.meshgrid(grid, grid, indexing="ij")
    gap = bregman_density_gap(r, p, gamma)
    diff2 = (r - p) ** 2
    off = gap > 1e-14
    ratio = float(np.max(diff2[off] / gap[off])) if np.any(off) else 0.0
    diagonal = float(np.max(2.0 / ((gamma - 1.0) * grid ** (gamma - 2.0))))
    return max(ratio, diagonal)


def relative_energy(rho: DensityField, u: VelocityField, defect: float,
                    strong: "StrongSolution", t: float, gamma: float,
                    grid: QuadratureGrid) -> float:
    """E_rel of (rho, u, defect) against the strong solution at time t."""
    if defect < 0.0:
        raise ValueError("defect must be nonnegative")
    if not (gamma > 1.0):
        raise ValueError("gamma must exceed 1")
    pts = grid.points()
    rho_q = rho.sample(pts)
    p_q = np.broadcast_to(np.asarray(strong.density(t, pts), dtype=float),
                          rho_q.shape)
    slack = 1e-12 * max(1.0, rho.rho_max)
    if p_q.min() < rho.rho_min - slack or p_q.max() > rho.rho_max + slack:
        raise ValueError("reference density leaves the declared bounds")
    du = tensor_core.eval_velocity(u, pts) - strong.velocity(t, pts)
    kinetic = 0.5 * float(np.mean(rho_q * np.sum(du * du, axis=1)))
    bregman = float(np.mean(bregman_density_gap(rho_q, p_q, gamma)))
    return kinetic + bregman + defect


# ---------------------------------------------------------------------------
# Gronwall monitor


@dataclass(frozen=True)
class GronwallReport:
    rate: float
    passed: bool
    c_max: float
    floor: float
    reference: float
    worst_margin: float


def gronwall_monitor(series: Sequence[tuple[float, float]],
                     window: int | None = None, c_max: float = 50.0,
                     floor: float = 1e-12) -> GronwallReport:
    """Fit the growth rate of a relative-energy series and check the envelope
    E(t) <= max(E(0), floor) * exp(c_max * (t - t0)).

    The rate is a least-squares slope of log E over the (windowed) rows with
    positive values; an identically-zero series passes with rate 0.
    """
    data = np.asarray(list(series), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) < 3:
        raise ValueError("need a series of at least 3 (t, value) pairs")
    t = data[:, 0]
    e = data[:, 1]
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("times must increase strictly")
    if np.any(e < -1e-15 * max(1.0, float(np.max(np.abs(e))))):
        raise ValueError("relative energy must be nonnegative")
    e = np.maximum(e, 0.0)

    fit_t, fit_e = (t, e) if window is None else (t[:window], e[:window])
    pos = fit_e > 0.0
    if pos.sum() >= 2:
        rate = float(np.polyfit(fit_t[pos], np.log(fit_e[pos]), 1)[0])
    else:
        rate = 0.0

    reference = max(float(e[0]), floor)
    envelope = reference * np.exp(c_max * (t - t[0]))
    margins = envelope * (1.0 + 1e-12) - e
    return GronwallReport(rate=rate, passed=bool(np.all(margins >= 0.0)),
                          c_max=c_max, floor=floor, reference=reference,
                          worst_margin=float(np.min(margins)))


# ---------------------------------------------------------------------------
# manufactured strong solution


@dataclass(frozen=True)
class StrongSolution:
    """Smooth reference flow: evaluators plus the data the monitors need.

    velocity/density/stress/grad_velocity/stress_divergence all take
    (t, points(N,3)); stress returns symmetric components (N,6).
    """

    velocity: Callable[[float, np.ndarray], np.ndarray]
    density: Callable[[float, np.ndarray], np.ndarray]
    stress: Callable[[float, np.ndarray], np.ndarray]
    grad_velocity: Callable[[float, np.ndarray], np.ndarray]
    stress_divergence: Callable[[float, np.ndarray], np.ndarray]
    kinetic_energy: Callable[[float], float]
    smoothness: str
    decay_rate: float
    grad_sup0: float

    def grad_sup(self, t: float) -> float:
        """Sup over x of the Frobenius norm of grad U at time t."""
        return self.grad_sup0 * math.exp(-self.decay_rate * t)


def manufactured_solution(k, w, nu: float) -> StrongSolution:
    """Decaying single-mode Newtonian flow with unit density.

        U(t,x) = exp(-4 pi^2 nu |k|^2 t) sqrt(2) w cos(2 pi k.x),  P = 1,
        S_hat  = 2 nu D(U),

    an exact solution of the momentum balance with quadratic potential
    nu |D|^2: convection vanishes because w.k = 0, and div S_hat = nu Lap U
    balances the time derivative.
    """
    kv = np.asarray(k, dtype=float)
    wv = np.asarray(w, dtype=float)
    if kv.shape != (3,) or wv.shape != (3,):
        raise ValueError("k and w must be 3-vectors")
    if not np.all(kv == np.round(kv)) or np.all(kv == 0.0):
        raise ValueError("k must be a nonzero integer wavevector")
    if not (nu > 0.0):
        raise ValueError("viscosity must be positive")
    wnorm = float(np.linalg.norm(wv))
    knorm2 = float(kv @ kv)
    if abs(float(wv @ kv)) > 1e-12 * max(1.0, wnorm * math.sqrt(knorm2)):
        raise ValueError("amplitude w must be orthogonal to k")

    rate = 4.0 * math.pi ** 2 * nu * knorm2
    sym_wk = sym_from_matrix(np.outer(wv, kv) + np.outer(kv, wv))

    def amp(t):
        return math.exp(-rate * t)

    def velocity(t, pts):
        phase = np.cos(_TWO_PI * (np.asarray(pts) @ kv))
        return amp(t) * _SQRT2 * phase[:, None] * wv[None, :]

    def density(t, pts):
        return np.ones(len(np.atleast_2d(pts)))

    def grad_velocity(t, pts):
        s = np.sin(_TWO_PI * (np.asarray(pts) @ kv))
        return (-amp(t) * _SQRT2 * _TWO_PI) * s[:, None, None] \
            * np.outer(wv, kv)[None, :, :]

    def stress(t, pts):
        # 2 nu D(U) = -2 nu sqrt(2) pi (w_i k_j + w_j k_i) A sin(2 pi k.x)
        s = np.sin(_TWO_PI * (np.asarray(pts) @ kv))
        factor = -2.0 * nu * amp(t) * _SQRT2 * math.pi
        return factor * s[:, None] * sym_wk[None, :]

    def stress_divergence(t, pts):
        return -rate * velocity(t, pts)

    grad_sup0 = 2.0 * _SQRT2 * math.pi * wnorm * math.sqrt(knorm2)

    return StrongSolution(
        velocity=velocity, density=density, stress=stress,
        grad_velocity=grad_velocity, stress_divergence=stress_divergence,
        kinetic_energy=lambda t: 0.5 * wnorm ** 2 * math.exp(-2.0 * rate * t),
        smoothness="C-infinity in t and x", decay_rate=rate,
        grad_sup0=grad_sup0)
