"""Symmetric 3x3 tensor algebra, divergence-free trigonometric velocity
basis on the unit torus, and exact trigonometric quadrature.

Conventions used throughout the package:

* the domain is the flat torus [0,1)^3 with unit volume;
* every basis mode is sqrt(2) * e * cos/sin(2 pi k.x) with |e| = 1 and
  e.k = 0, so modes are orthonormal in L2 and exactly divergence free;
* symmetric tensors are stored as six components (xx, yy, zz, xy, xz, yz)
  and all inner products / norms count the off-diagonal entries twice,
  matching the Frobenius metric of the full matrix.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)

#: storage order of the six independent components of a symmetric matrix
SYM_COMPONENTS = ("xx", "yy", "zz", "xy", "xz", "yz")
#: multiplicity of each stored component inside the full 3x3 matrix
SYM_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
_SYM_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


# ---------------------------------------------------------------------------
# symmetric 3x3 tensors


@dataclass(frozen=True)
class SymMat3:
    """Real symmetric 3x3 tensor stored as six independent components."""

    xx: float = 0.0
    yy: float = 0.0
    zz: float = 0.0
    xy: float = 0.0
    xz: float = 0.0
    yz: float = 0.0

    @classmethod
    def from_array6(cls, a) -> "SymMat3":
        a = np.asarray(a, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"expected 6 components, got shape {a.shape}")
        return cls(*[float(v) for v in a])

    @classmethod
    def from_matrix(cls, m, tol: float = 1e-12) -> "SymMat3":
        """Build from a full 3x3 matrix; rejects asymmetry beyond tol."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        skew = np.max(np.abs(m - m.T))
        if skew > tol * max(1.0, float(np.max(np.abs(m)))):
            raise ValueError(f"matrix is not symmetric (asymmetry {skew:.3e})")
        sym = 0.5 * (m + m.T)
        return cls(*[float(sym[i, j]) for i, j in _SYM_INDEX])

    @classmethod
    def identity(cls) -> "SymMat3":
        return cls(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def outer(v) -> "SymMat3":
        """Rank-one tensor v (x) v."""
        v = np.asarray(v, dtype=float)
        return SymMat3(v[0] * v[0], v[1] * v[1], v[2] * v[2],
                       v[0] * v[1], v[0] * v[2], v[1] * v[2])

    def as_array6(self) -> np.ndarray:
        return np.array([self.xx, self.yy, self.zz, self.xy, self.xz, self.yz])

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.xx, self.xy, self.xz],
                         [self.xy, self.yy, self.yz],
                         [self.xz, self.yz, self.zz]])

    def trace(self) -> float:
        return self.xx + self.yy + self.zz

    def norm(self) -> float:
        """Frobenius norm of the full matrix (off-diagonals counted twice)."""
        return float(np.sqrt(sym_inner(self.as_array6(), self.as_array6())))

    def inner(self, other: "SymMat3") -> float:
        return float(sym_inner(self.as_array6(), other.as_array6()))

    def __add__(self, other: "SymMat3") -> "SymMat3":
        return SymMat3.from_array6(self.as_array6() + other.as_array6())

    def __sub__(self, other: "SymMat3") -> "SymMat3":
        return SymMat3.from_array6(self.as_array6() - other.as_array6())

    def __mul__(self, c: float) -> "SymMat3":
        return SymMat3.from_array6(self.as_array6() * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "SymMat3":
        return self * -1.0


def sym_inner(a, b) -> np.ndarray:
    """Frobenius inner product A:B on (...,6) component arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sum(a * b * SYM_WEIGHTS, axis=-1)


def sym_norm(a) -> np.ndarray:
    """Frobenius norm on (...,6) component arrays."""
    return np.sqrt(sym_inner(a, a))


def sym_to_matrix(a) -> np.ndarray:
    """Expand (...,6) components to full (...,3,3) matrices."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape[:-1] + (3, 3))
    for c, (i, j) in enumerate(_SYM_INDEX):
        out[..., i, j] = a[..., c]
        out[..., j, i] = a[..., c]
    return out


def sym_from_matrix(m) -> np.ndarray:
    """Collapse full (...,3,3) symmetric matrices to (...,6) components."""
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.stack([sym[..., i, j] for i, j in _SYM_INDEX], axis=-1)


# ---------------------------------------------------------------------------
# divergence-free basis


@dataclass(frozen=True)
class DivFreeMode:
    """One real divergence-free mode sqrt(2) * e * cos/sin(2 pi k.x).

    :param k: integer wavevector, sign-normalized (first nonzero entry > 0)
    :param polarization: which of the two unit vectors orthogonal to k, 0 or 1
    :param parity: "cos" or "sin"
    :param e: the polarization unit vector itself
    """

    k: tuple[int, int, int]
    polarization: int
    parity: str
    e: tuple[float, float, float]


def _polarization_pair(k: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    # Deterministic orthonormal pair orthogonal to k: cross with the
    # coordinate axis least aligned with k, then complete the triad.
    kv = np.array(k, dtype=float)
    axis = int(np.argmin(np.abs(kv)))
    helper = np.zeros(3)
    helper[axis] = 1.0
    e1 = np.cross(kv, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(kv, e1)
    e2 /= np.linalg.norm(e2)
    return e1, e2


def build_divfree_basis(kmax: int) -> list[DivFreeMode]:
    """All modes with max-norm |k|_inf <= kmax, deterministically ordered.

    Wavevectors are identified up to sign (k and -k span the same pair of
    real modes); the representative has its first nonzero entry positive.
    Ordering is lexicographic in (|k|^2, k, polarization, parity) with
    cos before sin.
    """
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    modes = []
    for k in itertools.product(range(-kmax, kmax + 1), repeat=3):
        if k == (0, 0, 0):
            continue
        nonzero = [c for c in k if c != 0]
        if nonzero[0] < 0:
            continue  # -k already counted
        e1, e2 = _polarization_pair(k)
        for pol, e in ((0, e1), (1, e2)):
            for parity in ("cos", "sin"):
                modes.append(DivFreeMode(k=k, polarization=pol, parity=parity,
                                         e=tuple(float(c) for c in e)))
    modes.sort(key=lambda m: (sum(c * c for c in m.k), m.k, m.polarization,
                              0 if m.parity == "cos" else 1))
    return modes


@dataclass(frozen=True)
class VelocityField:
    """Finite-dimensional velocity: coefficients over an ordered mode list."""

    modes: tuple[DivFreeMode, ...]
    coefficients: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        modes = tuple(self.modes)
        a = np.array(self.coefficients, dtype=float)
        if a.shape != (len(modes),):
            raise ValueError(
                f"{len(modes)} modes but coefficient shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite coefficient")
        a.flags.writeable = False
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coefficients", a)

    def l2_norm(self) -> float:
        """L2 norm of the field; equals |a| by mode orthonormality."""
        return float(np.linalg.norm(self.coefficients))


@functools.lru_cache(maxsize=64)
def _mode_statics(modes: tuple[DivFreeMode, ...]):
    """Static per-mode arrays: E (n,3), K (n,3), sin-parity mask, the six
    components of pi*(e_i k_j + e_j k_i) used for symmetric gradients, and
    the deduplicated wavevector table (modes share k across polarizations
    and parities, so the trig work shrinks fourfold)."""
    n = len(modes)
    E = np.array([m.e for m in modes], dtype=float)
    K = np.array([m.k for m in modes], dtype=float)
    sin_mask = np.array([m.parity == "sin" for m in modes])
    S6 = np.empty((n, 6))
    for c, (i, j) in enumerate(_SYM_INDEX):
        S6[:, c] = math.pi * (E[:, i] * K[:, j] + E[:, j] * K[:, i])
    k_unique, k_index = np.unique(K, axis=0, return_inverse=True)
    return E, K, sin_mask, S6, k_unique, k_index.ravel()


def _phase_tables(modes, pts):
    """Scalar tables at points: values c_r(x) and derivative partners t_r(x).

    c_r = sqrt(2) cos(theta) or sqrt(2) sin(theta); the partner t_r is defined
    so that grad(mode)_ij = 2 pi e_i k_j t_r and Dmode = S6_r t_r.
    """
    E, K, sin_mask, S6, k_unique, k_index = _mode_statics(tuple(modes))
    # reduce k.x mod 1 before scaling so evaluation is exactly 1-periodic
    theta = TWO_PI * np.mod(pts @ k_unique.T, 1.0)  # (N, #distinct k)
    cos_t = np.cos(theta)[:, k_index]
    sin_t = np.sin(theta)[:, k_index]
    values = SQRT2 * np.where(sin_mask, sin_t, cos_t)
    partners = SQRT2 * np.where(sin_mask, cos_t, -sin_t)
    return E, K, S6, values, partners


def _normalize_points(x):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (3,) or (N,3), got {pts.shape}")
    return np.mod(pts, 1.0), single


def _velocity_sum(modes, a, pts):
    """Velocity sum grouped by distinct wavevector.

    Folding the coefficients into one cosine and one sine amplitude per
    wavevector replaces the (N, n_modes) fan-out with two slim GEMMs; this
    is the hot path of characteristic tracing.
    """
    E, _, sin_mask, _, k_unique, k_index = _mode_statics(tuple(modes))
    amp = SQRT2 * np.asarray(a, dtype=float)[:, None] * E  # (n,3)
    cos_amp = np.zeros((len(k_unique), 3))
    sin_amp = np.zeros_like(cos_amp)
    np.add.at(cos_amp, k_index[~sin_mask], amp[~sin_mask])
    np.add.at(sin_amp, k_index[sin_mask], amp[sin_mask])
    theta = TWO_PI * np.mod(pts @ k_unique.T, 1.0)
    return np.cos(theta) @ cos_amp + np.sin(theta) @ sin_amp


def eval_velocity(field: VelocityField, x) -> np.ndarray:
    """Evaluate the field at one point (3,) or a batch (N,3)."""
    pts, single = _normalize_points(x)
    u = _velocity_sum(field.modes, field.coefficients, pts)
    return u[0] if single else u


def eval_symgrad(field: VelocityField, x):
    """Symmetric velocity gradient D(u) = (grad u + grad u^T)/2.

    Returns a SymMat3 for a single point, else an (N,6) component array.
    Always trace free because every mode satisfies e.k = 0.
    """
    pts, single = _normalize_points(x)
    _, _, S6, _, partners = _phase_tables(field.modes, pts)
    d = (partners * field.coefficients) @ S6  # (N,6)
    return SymMat3.from_array6(d[0]) if single else d


def eval_grad(field: VelocityField, x) -> np.ndarray:
    """Full velocity gradient, (grad u)_ij = d_j u_i; (3,3) or (N,3,3)."""
    pts, single = _normalize_points(x)
    E, K, _, _, partners = _phase_tables(field.modes, pts)
    g = TWO_PI * np.einsum("r,ri,rk,qr->qik", field.coefficients, E, K, partners)
    return g[0] if single else g


# ---------------------------------------------------------------------------
# quadrature


@functools.lru_cache(maxsize=16)
def _lattice_points(resolution: int) -> np.ndarray:
    axis = np.arange(resolution) / resolution
    grid = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grid], axis=-1)
    pts.flags.writeable = False
    return pts


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform tensor lattice on the torus with equal weights 1/M^3.

    Such a rule integrates trigonometric polynomials exactly as long as no
    aliased frequency survives; construction enforces the conservative bound
    resolution > 2 * max_component * factors for the declared product degree.
    """

    resolution: int
    max_component: int
    factors: int

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be positive")
        if self.max_component < 0 or self.factors < 1:
            raise ValueError("invalid exactness declaration")
        bound = 2 * self.max_component * self.factors
        if self.resolution <= bound:
            raise ValueError(
                f"resolution {self.resolution} too coarse for products of "
                f"{self.factors} factors with |k|_inf <= {self.max_component}; "
                f"need > {bound}")

    @classmethod
    def for_products(cls, max_component: int, factors: int) -> "QuadratureGrid":
        """Smallest grid declared exact for the requested products."""
        return cls(2 * max_component * factors + 1, max_component, factors)

    @property
    def node_count(self) -> int:
        return self.resolution ** 3

    @property
    def weight(self) -> float:
        return 1.0 / self.node_count

    def points(self) -> np.ndarray:
        """All nodes as an (M^3, 3) array, x index fastest in the last axis."""
        return _lattice_points(self.resolution)


def integrate(grid: QuadratureGrid, integrand) -> float:
    """Integrate a callable over the torus.

    The callable receives the full (N,3) node array and must return scalars
    per node (shape (N,) or a broadcastable scalar).
    """
    pts = grid.points()
    vals = np.asarray(integrand(pts), dtype=float)
    vals = np.broadcast_to(vals, (len(pts),))
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand values")
    return float(vals.mean())


def integrate_samples(grid: QuadratureGrid, values) -> float:
    """Integrate node samples already laid out like grid.points()."""
    vals = np.asarray(values, dtype=float)
    if vals.shape[-1] != grid.node_count:
        raise ValueError(f"expected {grid.node_count} samples, got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand values")
    return float(vals.mean(axis=-1))


# ---------------------------------------------------------------------------
# precomputed assembly tables


class BasisTables:
    """Per-mode scalar tables on a fixed quadrature grid.

    Holds everything the Galerkin assembly and the energy diagnostics need:
    values c_r(x_q), derivative partners t_r(x_q), polarization/wavevector
    arrays and the symmetric-gradient component factors.
    """

    def __init__(self, modes: Sequence[DivFreeMode], grid: QuadratureGrid):
        self.modes = tuple(modes)
        self.grid = grid
        pts = grid.points()
        E, K, S6, values, partners = _phase_tables(self.modes, pts)
        self.E = E                      # (n,3)
        self.K = K                      # (n,3)
        self.S6 = S6                    # (n,6), includes the pi factor
        self.values = values.T.copy()   # (n,N)
        self.partners = partners.T.copy()  # (n,N)
        self.points = pts

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def n_nodes(self) -> int:
        return self.grid.node_count

    def velocity_nodes(self, a) -> np.ndarray:
        """u at all grid nodes, shape (3,N)."""
        return np.einsum("r,ri,rq->iq", a, self.E, self.values)

    def grad_nodes(self, a) -> np.ndarray:
        """grad u at all grid nodes, shape (3,3,N) with entries d_j u_i."""
        return TWO_PI * np.einsum("r,ri,rj,rq->ijq", a, self.E, self.K,
                                  self.partners)

    def symgrad_nodes(self, a) -> np.ndarray:
        """D(u) at all grid nodes as components, shape (6,N)."""
        return np.einsum("r,rc,rq->cq", a, self.S6, self.partners)

    def project(self, u_nodes) -> np.ndarray:
        """L2 projection coefficients <u, mode_r> from (3,N) node samples."""
        return np.einsum("iq,ri,rq->r", u_nodes, self.E, self.values) / self.n_nodes

    def velocity_at(self, a, pts) -> np.ndarray:
        """u at arbitrary (N,3) points (not restricted to the grid)."""
        field_pts = np.mod(np.asarray(pts, dtype=float), 1.0)
        return _velocity_sum(self.modes, a, field_pts)
