"""Convex dissipation potentials and their proximal calculus.

Two isotropic families are provided, both acting on the Frobenius norm of
the symmetric strain rate D:

* power-law:  F(D) = (nu/p) |D|^p,        nu > 0, p > 1
* Bingham:    F(D) = tau0 |D| + (mu/2) |D|^2,   tau0 >= 0, mu > 0

Both are superlinear, vanish at zero, and are finite everywhere, so the
Fenchel conjugate F*(S) = sup_D (S:D - F(D)) is finite and the inequality
F(D) + F*(S) >= S:D holds with equality exactly on the subdifferential.

The regularized stress map used by the solver comes from the quadratic
envelope

    F_alpha(D) = min_S  1/(2 alpha) |S - D|^2 + F(S),

whose minimizer is the proximal point prox_{alpha F}(D) and whose gradient
(D - prox)/alpha is 1/alpha-Lipschitz. Because both families are radial,
every map reduces to a scalar profile in |D|; the scalar proximal radius is
closed form for p = 2 and for Bingham, and a safeguarded Newton iteration
otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .tensor_core import SymMat3, sym_inner, sym_norm

_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class ConvexPotentialSpec:
    """Parameter record for one potential; build via power_law() or bingham()."""

    kind: str
    nu: float = 0.0
    p: float = 0.0
    tau0: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.kind == "power_law":
            if not (self.nu > 0.0):
                raise ValueError("power-law consistency nu must be positive")
            if not (self.p > 1.0):
                raise ValueError("power-law exponent p must exceed 1 "
                                 "(superlinearity)")
        elif self.kind == "bingham":
            if self.tau0 < 0.0:
                raise ValueError("yield stress tau0 must be nonnegative")
            if not (self.mu > 0.0):
                raise ValueError("plastic viscosity mu must be positive "
                                 "(superlinearity)")
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def power_law(cls, nu: float, p: float) -> "ConvexPotentialSpec":
        return cls(kind="power_law", nu=float(nu), p=float(p))

    @classmethod
    def bingham(cls, tau0: float, mu: float) -> "ConvexPotentialSpec":
        return cls(kind="bingham", tau0=float(tau0), mu=float(mu))

    @property
    def q(self) -> float:
        """Conjugate exponent of a power-law potential, 1/p + 1/q = 1."""
        if self.kind != "power_law":
            raise ValueError("conjugate exponent only defined for power_law")
        return self.p / (self.p - 1.0)


# ---------------------------------------------------------------------------
# radial profiles


def _radial_potential(spec: ConvexPotentialSpec, r: np.ndarray) -> np.ndarray:
    if spec.kind == "power_law":
        return (spec.nu / spec.p) * r ** spec.p
    return spec.tau0 * r + 0.5 * spec.mu * r * r


def _radial_conjugate(spec: ConvexPotentialSpec, s: np.ndarray) -> np.ndarray:
    if spec.kind == "power_law":
        q = spec.q
        return (1.0 / q) * spec.nu ** (1.0 - q) * s ** q
    excess = np.maximum(0.0, s - spec.tau0)
    return excess * excess / (2.0 * spec.mu)


def _newton_prox_radius(nu: float, p: float, alpha: float,
                        d: np.ndarray) -> np.ndarray:
    """Solve s + alpha*nu*s^(p-1) = d for s in [0,d], elementwise.

    The left side is strictly increasing, so the root is unique; Newton is
    bracket-safeguarded because for p < 2 the derivative blows up at 0.
    """
    c = alpha * nu
    d = np.asarray(d, dtype=float)
    lo = np.zeros_like(d)
    hi = d.copy()
    positive = d > 0.0
    s = np.where(positive, d / (1.0 + c * np.where(positive, d, 1.0) ** (p - 2.0)),
                 0.0)
    tol = _NEWTON_TOL * np.maximum(1.0, d)
    for _ in range(_NEWTON_MAX_ITER):
        with np.errstate(divide="ignore", invalid="ignore"):
            powm1 = np.where(s > 0.0, s, 1.0) ** (p - 1.0)
            powm1 = np.where(s > 0.0, powm1, 0.0)
            g = s + c * powm1 - d
            gp = 1.0 + c * (p - 1.0) * np.where(s > 0.0, s, 1.0) ** (p - 2.0)
        active = positive & (np.abs(g) > tol)
        if not np.any(active):
            return s
        lo = np.where(active & (g < 0.0), s, lo)
        hi = np.where(active & (g > 0.0), s, hi)
        candidate = s - g / gp
        inside = (candidate > lo) & (candidate < hi)
        s = np.where(active, np.where(inside, candidate, 0.5 * (lo + hi)), s)
    raise NumericalFailure(
        f"proximal Newton did not converge (worst residual {np.max(np.abs(g)):.3e})")


def _radial_stress(spec: ConvexPotentialSpec, d: np.ndarray,
                   alpha: float) -> np.ndarray:
    """Magnitude of (D - prox)/alpha, computed without cancellation."""
    d = np.asarray(d, dtype=float)
    if spec.kind == "power_law":
        if spec.p == 2.0:
            return spec.nu * d / (1.0 + alpha * spec.nu)
        s = _newton_prox_radius(spec.nu, spec.p, alpha, d)
        with np.errstate(invalid="ignore"):
            sigma = spec.nu * np.where(s > 0.0, s, 1.0) ** (spec.p - 1.0)
        return np.where(s > 0.0, sigma, 0.0)
    # Bingham: inside the yield radius the prox collapses to zero
    yielded = d > alpha * spec.tau0
    return np.where(yielded,
                    (spec.mu * d + spec.tau0) / (1.0 + alpha * spec.mu),
                    d / alpha)


def _radial_prox(spec: ConvexPotentialSpec, d: np.ndarray,
                 alpha: float) -> np.ndarray:
    return np.asarray(d, dtype=float) - alpha * _radial_stress(spec, d, alpha)


# ---------------------------------------------------------------------------
# polymorphic wrappers: SymMat3 in -> SymMat3 out, arrays pass through


def _as_components(x):
    if isinstance(x, SymMat3):
        return x.as_array6(), True
    a = np.asarray(x, dtype=float)
    if a.shape[-1] != 6:
        raise ValueError(f"expected (...,6) components, got shape {a.shape}")
    return a, False


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (alpha > 0.0) or not math.isfinite(alpha):
        raise ValueError("regularization weight alpha must be positive")
    return alpha


def eval_potential(spec: ConvexPotentialSpec, strain):
    """F(D). Accepts a SymMat3 or an (...,6) component array."""
    d6, scalar = _as_components(strain)
    vals = _radial_potential(spec, sym_norm(d6))
    return float(vals) if scalar else vals


def eval_conjugate(spec: ConvexPotentialSpec, stress):
    """Fenchel conjugate F*(S) in closed form."""
    s6, scalar = _as_components(stress)
    vals = _radial_conjugate(spec, sym_norm(s6))
    return float(vals) if scalar else vals


def conjugate_oracle(spec: ConvexPotentialSpec, stress, radius: float,
                     samples: int, seed: int = 0) -> float:
    """Brute-force lower bound for F*(S): max of S:D - F(D) over |D| <= radius.

    The sample always contains the origin and a dense lattice along the ray
    through S (where every radial potential attains the sup) plus uniform
    random points of the Frobenius ball, so the result increases toward F*(S)
    as radius and samples grow but never exceeds it beyond roundoff.
    """
    if not (radius > 0.0):
        raise ValueError("radius must be positive")
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    s6, _ = _as_components(stress)
    if s6.ndim != 1:
        raise ValueError("conjugate_oracle expects a single stress tensor")

    n_ray = min(2000, max(2, samples // 10))
    pts = []
    s_norm = float(sym_norm(s6))
    if s_norm > 0.0:
        ray_dir = s6 / s_norm
        t = np.linspace(0.0, radius, n_ray)
        pts.append(t[:, None] * ray_dir[None, :])
    else:
        pts.append(np.zeros((1, 6)))

    rng = np.random.default_rng(seed)
    n_rand = max(0, samples - n_ray)
    if n_rand:
        # sample uniformly in the Frobenius ball via orthonormal coordinates
        g = rng.standard_normal((n_rand, 6))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = radius * rng.random(n_rand) ** (1.0 / 6.0)
        on = g * r[:, None]
        d = on.copy()
        d[:, 3:] /= math.sqrt(2.0)
        pts.append(d)
    cloud = np.concatenate(pts, axis=0)
    objective = sym_inner(np.broadcast_to(s6, cloud.shape), cloud) \
        - eval_potential(spec, cloud)
    return float(np.max(objective))


def prox(spec: ConvexPotentialSpec, strain, alpha: float):
    """Proximal point argmin_S 1/(2 alpha)|S - D|^2 + F(S)."""
    alpha = _check_alpha(alpha)
    d6, scalar = _as_components(strain)
    d = sym_norm(d6)
    s = _radial_prox(spec, d, alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(d > 0.0, s / np.where(d > 0.0, d, 1.0), 0.0)
    out = d6 * scale[..., None]
    return SymMat3.from_array6(out) if scalar else out


def moreau_envelope(spec: ConvexPotentialSpec, strain, alpha: float):
    """F_alpha(D) = 1/(2 alpha)|prox - D|^2 + F(prox)."""
    alpha = _check_alpha(alpha)
    d6, scalar = _as_components(strain)
    d = sym_norm(d6)
    sigma = _radial_stress(spec, d, alpha)
    vals = 0.5 * alpha * sigma * sigma + _radial_potential(spec, d - alpha * sigma)
    return float(vals) if scalar else vals


def moreau_stress(spec: ConvexPotentialSpec, strain, alpha: float):
    """Envelope gradient (D - prox)/alpha; the solver's stress map."""
    alpha = _check_alpha(alpha)
    d6, scalar = _as_components(strain)
    d = sym_norm(d6)
    sigma = _radial_stress(spec, d, alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(d > 0.0, sigma / np.where(d > 0.0, d, 1.0), 0.0)
    out = d6 * scale[..., None]
    return SymMat3.from_array6(out) if scalar else out


def envelope_conjugate(spec: ConvexPotentialSpec, stress, alpha: float):
    """(F_alpha)*(S) = F*(S) + alpha/2 |S|^2 (conjugate of an inf-convolution)."""
    alpha = _check_alpha(alpha)
    s6, scalar = _as_components(stress)
    n2 = sym_inner(s6, s6)
    vals = _radial_conjugate(spec, np.sqrt(n2)) + 0.5 * alpha * n2
    return float(vals) if scalar else vals


def fenchel_gap(spec: ConvexPotentialSpec, stress, strain, alpha: float | None = None):
    """F(D) + F*(S) - S:D, nonnegative up to roundoff.

    With alpha given, the gap is computed for the regularized pair
    (F_alpha, (F_alpha)*) instead; it vanishes at S = moreau_stress(D).
    """
    s6, scalar_s = _as_components(stress)
    d6, scalar_d = _as_components(strain)
    pairing = sym_inner(s6, d6)
    if alpha is None:
        vals = eval_potential(spec, d6) + eval_conjugate(spec, s6) - pairing
    else:
        vals = moreau_envelope(spec, d6, alpha) \
            + envelope_conjugate(spec, s6, alpha) - pairing
    return float(vals) if (scalar_s and scalar_d) else vals
