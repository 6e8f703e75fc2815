"""Semi-Lagrangian transport of the density on a periodic lattice.

The density lives on nodes x_i = i/M of a uniform M^3 grid. One step pulls
each node back along the velocity characteristic (classical RK4) and reads
the old density there by periodic trilinear interpolation. Interpolation is
a convex combination of the eight surrounding corners, clamped to their
hull, so declared density bounds are preserved exactly.

Velocities are plain callables (t, points(N,3)) -> (N,3); the Galerkin layer
wraps its coefficient interpolant into one and tests use lambdas.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalFailure

VelocityFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DensityField:
    """Density samples on the uniform M^3 node lattice with declared bounds."""

    values: np.ndarray
    rho_min: float
    rho_max: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3 or len(set(v.shape)) != 1:
            raise ValueError(f"density grid must be cubic, got shape {v.shape}")
        if not (0.0 < self.rho_min <= self.rho_max):
            raise ValueError("need 0 < rho_min <= rho_max")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite density sample")
        if v.min() < self.rho_min or v.max() > self.rho_max:
            raise ValueError(
                f"density samples [{v.min():.6g}, {v.max():.6g}] violate "
                f"declared bounds [{self.rho_min:.6g}, {self.rho_max:.6g}]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def nodes(self) -> np.ndarray:
        """All node coordinates, (M^3, 3), same layout as values.reshape(-1)."""
        m = self.resolution
        axis = np.arange(m) / m
        grid = np.meshgrid(axis, axis, axis, indexing="ij")
        return np.stack([g.reshape(-1) for g in grid], axis=-1)

    def sample(self, points) -> np.ndarray:
        return trilinear_periodic(self.values, points)

    @classmethod
    def constant(cls, value: float, resolution: int, rho_min: float,
                 rho_max: float) -> "DensityField":
        return cls(np.full((resolution,) * 3, float(value)), rho_min, rho_max)


def trilinear_periodic(values: np.ndarray, points) -> np.ndarray:
    """Periodic trilinear interpolation of (M,M,M) node samples at (N,3) points.

    The result is clamped to the hull of the eight corner values, which keeps
    the convex-combination property exact in floating point.
    """
    values = np.asarray(values, dtype=float)
    pts = np.mod(np.asarray(points, dtype=float), 1.0)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    m = values.shape[0]

    g = pts * m
    base = np.floor(g)
    frac = g - base
    i0 = base.astype(np.int64) % m
    i1 = (i0 + 1) % m

    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    corners = np.empty((8, len(pts)))
    weights = np.empty((8, len(pts)))
    idx = 0
    for dx, wx in ((i0[:, 0], 1.0 - fx), (i1[:, 0], fx)):
        for dy, wy in ((i0[:, 1], 1.0 - fy), (i1[:, 1], fy)):
            for dz, wz in ((i0[:, 2], 1.0 - fz), (i1[:, 2], fz)):
                corners[idx] = values[dx, dy, dz]
                weights[idx] = wx * wy * wz
                idx += 1
    out = np.sum(corners * weights, axis=0)
    np.clip(out, corners.min(axis=0), corners.max(axis=0), out=out)
    return out[0] if single else out


def trace_characteristic(x, velocity: VelocityFn, t: float, dt: float):
    """Foot y ~ X(t - dt) of the characteristic through (t, x), one RK4 step.

    dX/ds = u(s, X) integrated backward; accepts a single point (3,) or a
    batch (N,3) and returns the same shape, wrapped into [0,1)^3.
    """
    if not (dt > 0.0):
        raise ValueError("dt must be positive")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)

    def f(s, y):
        u = np.asarray(velocity(s, np.mod(y, 1.0)), dtype=float)
        if u.shape != y.shape:
            raise ValueError(f"velocity returned shape {u.shape} for {y.shape}")
        if not np.all(np.isfinite(u)):
            raise NumericalFailure("non-finite velocity along characteristic")
        return u

    h = -dt  # backward in time
    k1 = f(t, pts)
    k2 = f(t + 0.5 * h, pts + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, pts + 0.5 * h * k2)
    k4 = f(t + h, pts + h * k3)
    feet = np.mod(pts + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 1.0)
    return feet[0] if single else feet


def advect_density(rho: DensityField, velocity: VelocityFn, t: float,
                   dt: float) -> DensityField:
    """Advance the density from time t to t + dt along the velocity.

    New node value is the old density interpolated at the foot of the
    characteristic through (t + dt, node). Bounds carry over unchanged and
    hold exactly because interpolation never leaves the corner hull.
    """
    m = rho.resolution
    feet = trace_characteristic(rho.nodes(), velocity, t + dt, dt)
    new_values = rho.sample(feet).reshape(m, m, m)
    return DensityField(new_values, rho.rho_min, rho.rho_max)


def gamma_moment(rho: DensityField, gamma: float) -> float:
    """Integral of rho^gamma over the torus (the grid is its own quadrature)."""
    if not (gamma > 1.0):
        raise ValueError("gamma must exceed 1")
    return float(np.mean(rho.values ** gamma))
