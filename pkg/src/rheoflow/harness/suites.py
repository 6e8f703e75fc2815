"""Randomized property suites shared by `rheoflow verify` and the test tree.

Each suite draws from a seeded generator and returns CheckResult rows; the
margin is the worst observed slack (nonnegative exactly when the check
passed), so regressions show up as shrinking margins before they flip signs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rheology import (
    ConvexPotentialSpec,
    eval_potential,
    fenchel_gap,
    moreau_envelope,
    moreau_stress,
)
from ..tensor_core import (
    TWO_PI,
    BasisTables,
    DivFreeMode,
    QuadratureGrid,
    VelocityField,
    build_divfree_basis,
    eval_symgrad,
    eval_velocity,
    sym_norm,
)
from ..transport import DensityField, advect_density, gamma_moment
from ..measure_lab import MatrixMeasure, psd_test, trace_domination_check


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str


def _result(name: str, margin: float, detail: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(margin >= 0.0),
                       margin=float(margin), detail=detail)


def _random_sym6(rng: np.random.Generator, count: int) -> np.ndarray:
    g = rng.standard_normal((count, 3, 3))
    sym = 0.5 * (g + np.swapaxes(g, 1, 2))
    return np.stack([sym[:, 0, 0], sym[:, 1, 1], sym[:, 2, 2],
                     sym[:, 0, 1], sym[:, 0, 2], sym[:, 1, 2]], axis=-1)


_FAMILIES = (
    ("power_law(1,2)", ConvexPotentialSpec.power_law(1.0, 2.0)),
    ("power_law(1,3)", ConvexPotentialSpec.power_law(1.0, 3.0)),
    ("bingham(0.5,1)", ConvexPotentialSpec.bingham(0.5, 1.0)),
)
_ALPHAS = (1.0, 0.1, 0.01, 0.001)


# ---------------------------------------------------------------------------
# rheology


def suite_rheology(seed: int = 42) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []

    worst = np.inf
    for label, spec in _FAMILIES:
        strain = _random_sym6(rng, 10_000)
        stress = _random_sym6(rng, 10_000)
        worst = min(worst, float(np.min(fenchel_gap(spec, stress, strain))))
    out.append(_result("fenchel_young_nonneg", worst + 1e-12,
                       f"min gap {worst:.3e} over 1e4 pairs x "
                       f"{len(_FAMILIES)} families (tol -1e-12)"))

    worst = 0.0
    for _, spec in _FAMILIES:
        strain = _random_sym6(rng, 2_000)
        for alpha in _ALPHAS:
            stress = moreau_stress(spec, strain, alpha)
            gap = fenchel_gap(spec, stress, strain, alpha=alpha)
            worst = max(worst, float(np.max(np.abs(gap))))
    out.append(_result("regularized_gap_closed", 1e-10 - worst,
                       f"max |gap| {worst:.3e} at envelope stress (tol 1e-10)"))

    ladder_margin = np.inf
    approx_margin = np.inf
    for label, spec in _FAMILIES:
        strain = _random_sym6(rng, 100)
        f_exact = eval_potential(spec, strain)
        slack = 1e-12 * (1.0 + np.abs(f_exact))
        values = np.stack([moreau_envelope(spec, strain, a) for a in _ALPHAS])
        rising = np.min(np.diff(values, axis=0) + slack)
        below = np.min(f_exact + slack - values)
        ladder_margin = min(ladder_margin, float(rising), float(below))
        if label == "power_law(1,2)":
            dev = np.abs(values[-1] - f_exact) / (1.0 + np.abs(f_exact))
            approx_margin = float(0.05 - np.max(dev))
    out.append(_result("moreau_ladder_monotone", ladder_margin,
                       "envelope nondecreasing as alpha drops and <= F"))
    out.append(_result("moreau_envelope_tight", approx_margin,
                       "alpha=1e-3 envelope within 5% of F for power_law(1,2)"))

    worst = -np.inf
    for _, spec in _FAMILIES:
        for alpha in _ALPHAS:
            d1 = _random_sym6(rng, 1_000)
            d2 = _random_sym6(rng, 1_000)
            lhs = sym_norm(moreau_stress(spec, d1, alpha)
                           - moreau_stress(spec, d2, alpha))
            rhs = sym_norm(d1 - d2) / alpha + 1e-12
            worst = max(worst, float(np.max(lhs - rhs)))
    out.append(_result("stress_lipschitz", -worst,
                       f"worst |sigma1-sigma2| - |D1-D2|/alpha = {worst:.3e}"))
    return out


# ---------------------------------------------------------------------------
# measure


def _random_psd_atoms(rng: np.random.Generator, count: int, cells: int = 4,
                      max_atoms: int = 8) -> np.ndarray:
    """(count, cells^3, 6) PSD matrices, each a sum of 1..max_atoms rank ones."""
    n_cells = cells ** 3
    v = rng.standard_normal((count, n_cells, max_atoms, 3))
    lam = rng.uniform(0.1, 1.0, (count, n_cells, max_atoms))
    n_atoms = rng.integers(1, max_atoms + 1, (count, n_cells))
    lam = lam * (np.arange(max_atoms) < n_atoms[..., None])
    outer = np.stack([v[..., 0] * v[..., 0], v[..., 1] * v[..., 1],
                      v[..., 2] * v[..., 2], v[..., 0] * v[..., 1],
                      v[..., 0] * v[..., 2], v[..., 1] * v[..., 2]], axis=-1)
    return np.einsum("mca,mcak->mck", lam, outer)


def suite_measure(seed: int = 42) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []

    hahn_margin = np.inf
    ratio_max = 0.0
    for _ in range(10):  # 10 chunks of 1000 measures
        atoms = _random_psd_atoms(rng, 1_000)
        diag = atoms[..., :3].sum(axis=1)                    # (m,3)
        off_tv = np.abs(atoms[..., 3:]).sum(axis=1)          # (m,3)
        bounds = np.stack([diag[:, 0] + diag[:, 1],
                           diag[:, 0] + diag[:, 2],
                           diag[:, 1] + diag[:, 2]], axis=-1)
        hahn_margin = min(hahn_margin, float(np.min(bounds - off_tv)))
        trace = diag.sum(axis=1)
        tv = trace + 2.0 * off_tv.sum(axis=1)
        ratio_max = max(ratio_max, float(np.max(tv / trace)))
    out.append(_result("hahn_componentwise", hahn_margin,
                       "total |mu_ij| <= mu_ii + mu_jj on 1e4 PSD measures, "
                       "no tolerance"))
    out.append(_result("variation_trace_ratio", 5.0 - ratio_max,
                       f"max TV/trace {ratio_max:.3f} (bound 5)"))

    api_margin = np.inf
    atoms = _random_psd_atoms(rng, 100)
    for weights in atoms:
        report = trace_domination_check(MatrixMeasure(weights.reshape(4, 4, 4, 6)))
        if not report.passed:
            api_margin = min(api_margin, -1.0)
        api_margin = min(api_margin, report.c_lemma - report.ratio)
    out.append(_result("trace_domination_api", api_margin,
                       "full check object on 100 sampled measures"))

    bad = np.zeros((1, 1, 1, 6))
    bad[0, 0, 0, :3] = (1.0, -1.0, 0.0)
    detected = not psd_test(MatrixMeasure(bad)).passed
    out.append(_result("psd_detector_fires", 1.0 if detected else -1.0,
                       "indefinite diag(1,-1,0) must fail the PSD test"))
    return out


# ---------------------------------------------------------------------------
# transport


def _translation_error(m: int, delta: np.ndarray) -> float:
    def profile(a, b):
        return 1.0 + 0.25 * np.cos(TWO_PI * a) * np.cos(TWO_PI * b)

    def velocity(s, pts):
        return np.broadcast_to(delta, pts.shape)

    axis = np.arange(m) / m
    x1, x2, _ = np.meshgrid(axis, axis, axis, indexing="ij")
    rho = DensityField(profile(x1, x2), 0.5, 2.0)
    moved = advect_density(rho, velocity, 0.0, 1.0)
    exact = profile(x1 - delta[0], x2 - delta[1])
    return float(np.max(np.abs(moved.values - exact)))


def suite_transport(seed: int = 42) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []

    # displacement chosen so every resolution sees the same fractional
    # offset 1/3 or 2/3, hence the same interpolation constant
    delta = np.full(3, 1.0 / 48.0)
    errors = [_translation_error(m, delta) for m in (16, 32, 64)]
    orders = [float(np.log2(errors[i] / errors[i + 1])) for i in range(2)]
    out.append(_result("translation_order", min(orders) - 1.8,
                       f"sup errors {errors[0]:.2e}/{errors[1]:.2e}/"
                       f"{errors[2]:.2e}, orders {orders[0]:.2f}, "
                       f"{orders[1]:.2f} (need >= 1.8)"))

    modes = tuple(build_divfree_basis(1))
    coeffs = 0.3 * rng.standard_normal(len(modes))
    field = VelocityField(modes, coeffs)

    def velocity(s, pts):
        return eval_velocity(field, pts)

    m = 16
    values = rng.uniform(0.5, 2.0, (m, m, m))
    rho = DensityField(values, 0.5, 2.0)
    lo0, hi0 = float(values.min()), float(values.max())
    margin = np.inf
    for k in range(50):
        rho = advect_density(rho, velocity, 0.01 * k, 0.01)
        margin = min(margin, float(rho.values.min()) - lo0,
                     hi0 - float(rho.values.max()))
    out.append(_result("max_principle_exact", margin,
                       f"range drift {margin:.1e} over 50 random-flow steps "
                       "(must be >= 0 exactly)"))

    shear_mode = DivFreeMode(k=(1, 0, 0), polarization=0, parity="cos",
                             e=(0.0, 1.0, 0.0))
    shear = VelocityField((shear_mode,), np.array([0.5]))

    def shear_velocity(s, pts):
        return eval_velocity(shear, pts)

    m = 32
    axis = np.arange(m) / m
    _, x2, _ = np.meshgrid(axis, axis, axis, indexing="ij")
    rho = DensityField(1.0 + 0.1 * np.cos(TWO_PI * x2), 0.5, 2.0)
    mass0 = float(rho.values.mean())
    gm0 = gamma_moment(rho, 2.0)
    for k in range(100):
        rho = advect_density(rho, shear_velocity, 1e-3 * k, 1e-3)
    mass_drift = abs(float(rho.values.mean()) - mass0)
    gm_drift = abs(gamma_moment(rho, 2.0) - gm0)
    out.append(_result("conservation_drift", 1e-3 - max(mass_drift, gm_drift),
                       f"mass drift {mass_drift:.2e}, gamma-moment drift "
                       f"{gm_drift:.2e} over t=0.1 (tol 1e-3)"))
    return out


# ---------------------------------------------------------------------------
# basis


def suite_basis(seed: int = 42) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []

    counts_ok = (len(build_divfree_basis(1)) == 52
                 and len(build_divfree_basis(2)) == 248)
    out.append(_result("mode_count", 1.0 if counts_ok else -1.0,
                       "2 polarizations x 2 parities x sign-distinct k: "
                       "52 at kmax=1, 248 at kmax=2"))

    modes = tuple(build_divfree_basis(1))
    tables = BasisTables(modes, QuadratureGrid.for_products(1, 2))
    gram = (tables.E @ tables.E.T) * (tables.values @ tables.values.T
                                      / tables.n_nodes)
    dev = float(np.max(np.abs(gram - np.eye(len(modes)))))
    out.append(_result("orthonormality", 1e-12 - dev,
                       f"Gram deviation from identity {dev:.2e} (tol 1e-12)"))

    div_dev = max(abs(sum(ki * ei for ki, ei in zip(m.k, m.e))) for m in modes)
    out.append(_result("divergence_free", 1e-13 - div_dev,
                       f"max |e.k| {div_dev:.2e} across all modes"))

    a = rng.standard_normal(len(modes))
    u_sq = np.sum(tables.velocity_nodes(a) ** 2, axis=0)
    parseval_dev = abs(float(u_sq.mean()) - float(a @ a)) / float(a @ a)
    out.append(_result("parseval", 1e-10 - parseval_dev,
                       f"relative |u|^2 vs |a|^2 deviation {parseval_dev:.2e}"))

    field = VelocityField(modes, a)
    pts = rng.uniform(0.0, 1.0, (10, 3))
    h = 1e-5
    worst = 0.0
    for pt in pts:
        grad = np.empty((3, 3))
        for j in range(3):
            step = np.zeros(3)
            step[j] = h
            grad[:, j] = (eval_velocity(field, pt + step)
                          - eval_velocity(field, pt - step)) / (2.0 * h)
        fd_sym = 0.5 * (grad + grad.T)
        exact = eval_symgrad(field, pt).as_matrix()
        worst = max(worst, float(np.max(np.abs(fd_sym - exact))))
    out.append(_result("symgrad_matches_fd", 1e-6 - worst,
                       f"max deviation from central differences {worst:.2e}"))

    sg = eval_symgrad(field, rng.uniform(0.0, 1.0, (200, 3)))
    trace_dev = float(np.max(np.abs(sg[:, 0] + sg[:, 1] + sg[:, 2])))
    scale = max(1.0, float(np.max(sym_norm(sg))))
    out.append(_result("symgrad_trace_free", 1e-12 * scale - trace_dev,
                       f"max |trace D(u)| {trace_dev:.2e}"))
    return out


SUITES = {
    "basis": suite_basis,
    "rheology": suite_rheology,
    "measure": suite_measure,
    "transport": suite_transport,
}


def run_suite(name: str, seed: int = 42) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed)
