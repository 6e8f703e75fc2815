"""Energy ledger, relative energy, growth monitor, and the reference flow."""
import math

import numpy as np
import pytest

from rheoflow import galerkin
from rheoflow.diagnostics import (
    EnergyLedger,
    EnergyRow,
    bregman_comparability_constant,
    bregman_density_gap,
    energy_inequality_check,
    energy_row,
    gronwall_monitor,
    manufactured_solution,
    relative_energy,
)
from rheoflow.rheology import ConvexPotentialSpec
from rheoflow.tensor_core import (
    QuadratureGrid,
    VelocityField,
    build_divfree_basis,
    eval_grad,
)
from rheoflow.transport import DensityField


def small_config(**overrides):
    base = dict(kmax=1, density_resolution=8, dt=1e-3, t_final=0.0,
                alpha=1e-3, gamma=2.0,
                potential=ConvexPotentialSpec.power_law(0.2, 2.0),
                rho_min=0.5, rho_max=2.0)
    base.update(overrides)
    return galerkin.SimConfig(**base)


def row_at(t, total, dissipation=0.0):
    return EnergyRow(t=t, kinetic=total - dissipation, gamma_term=0.0,
                     dissipation=dissipation, defect=0.0, total=total,
                     residual=0.0)


# --- ledger ----------------------------------------------------------------


def test_energy_row_kinetic_of_unit_mode():
    config = small_config(
        u0=galerkin.InitialVelocity.single_mode((1, 0, 0), (0.0, 1.0, 0.0)),
        rho0=galerkin.InitialDensity.constant(1.0))
    tables = galerkin.build_tables(config)
    states, ledger = galerkin.run(config)
    assert len(ledger.rows) == 1
    assert ledger.rows[0].kinetic == pytest.approx(0.5, abs=1e-13)
    assert ledger.rows[0].gamma_term == pytest.approx(0.5, abs=1e-13)
    fresh = energy_row(states[0], config, tables, 0.0)
    assert fresh.total == pytest.approx(1.0, abs=1e-13)
    assert fresh.residual == 0.0


def test_ledger_rejects_malformed_rows():
    ledger = EnergyLedger()
    ledger.append(row_at(0.0, 1.0))
    with pytest.raises(ValueError):
        ledger.append(row_at(0.0, 1.0))  # time must increase
    with pytest.raises(ValueError):
        ledger.append(row_at(0.1, 1.0, dissipation=-0.5))
    with pytest.raises(ValueError):
        ledger.append(row_at(0.1, math.nan))
    ledger.append(row_at(0.1, 0.9, dissipation=0.05))
    with pytest.raises(ValueError):
        ledger.append(row_at(0.2, 0.9, dissipation=0.01))  # dissipation dropped
    with pytest.raises(ValueError):
        EnergyLedger().initial_energy


def test_energy_inequality_check_flags_growth():
    ledger = EnergyLedger()
    ledger.append(row_at(0.0, 1.0))
    ledger.append(row_at(0.1, 0.98, dissipation=0.01))
    assert energy_inequality_check(ledger) == 0.0  # the initial row itself
    ledger.append(row_at(0.2, 1.02, dissipation=0.02))
    assert energy_inequality_check(ledger) == pytest.approx(0.02, abs=1e-15)


# --- relative energy -------------------------------------------------------


def test_bregman_gap_frozen_value_and_nonnegativity():
    assert bregman_density_gap(2.0, 1.0, 2.0) == pytest.approx(0.5, abs=1e-15)
    r = np.linspace(0.3, 3.0, 40)
    p = np.linspace(0.3, 3.0, 40)
    rr, pp = np.meshgrid(r, p, indexing="ij")
    for gamma in (1.5, 2.0, 3.0):
        gap = bregman_density_gap(rr, pp, gamma)
        assert np.all(gap >= -1e-14)
        np.testing.assert_allclose(np.diagonal(gap), 0.0, atol=1e-14)


def test_bregman_comparability_constant_quadratic_case():
    # gamma = 2 makes the gap exactly (rho - P)^2 / 2, so the constant is 2
    assert bregman_comparability_constant(0.5, 2.0, 2.0) == pytest.approx(
        2.0, rel=1e-9)
    with pytest.raises(ValueError):
        bregman_comparability_constant(0.5, 2.0, 1.0)


def make_matched_pair(value=1.0):
    """Velocity field equal to the reference flow at t = 0."""
    strong = manufactured_solution((1, 0, 0), (0.0, 1.0, 0.0), 0.1)
    basis = build_divfree_basis(1)
    a = np.zeros(len(basis))
    a[10] = -1.0  # mode 10 is k=(1,0,0), e=(0,-1,0), cos
    u = VelocityField(basis, a, t=0.0)
    rho = DensityField.constant(value, 8, 0.5, 2.5)
    return strong, u, rho


def test_relative_energy_zero_for_identical_data():
    strong, u, rho = make_matched_pair(1.0)
    grid = QuadratureGrid.for_products(1, 2)
    assert relative_energy(rho, u, 0.0, strong, 0.0, 2.0, grid) \
        <= 1e-14


def test_relative_energy_frozen_density_offset():
    strong, u, rho2 = make_matched_pair(2.0)
    grid = QuadratureGrid.for_products(1, 2)
    # velocities match, so only the Bregman term contributes: gap(2|1) = 1/2
    assert relative_energy(rho2, u, 0.0, strong, 0.0, 2.0, grid) \
        == pytest.approx(0.5, abs=1e-13)
    # the defect adds on top
    assert relative_energy(rho2, u, 0.25, strong, 0.0, 2.0, grid) \
        == pytest.approx(0.75, abs=1e-13)


def test_relative_energy_validation():
    strong, u, rho = make_matched_pair()
    grid = QuadratureGrid.for_products(1, 2)
    with pytest.raises(ValueError):
        relative_energy(rho, u, -0.1, strong, 0.0, 2.0, grid)
    with pytest.raises(ValueError):
        relative_energy(rho, u, 0.0, strong, 0.0, 1.0, grid)
    tight = DensityField.constant(1.8, 8, 1.5, 2.5)
    with pytest.raises(ValueError):
        # reference density P = 1 leaves the declared bounds
        relative_energy(tight, u, 0.0, strong, 0.0, 2.0, grid)


# --- growth monitor --------------------------------------------------------


def test_gronwall_recovers_synthetic_rate():
    t = np.linspace(0.0, 1.0, 30)
    series = list(zip(t, 0.01 * np.exp(3.0 * t)))
    report = gronwall_monitor(series, c_max=4.0)
    assert report.rate == pytest.approx(3.0, rel=1e-6)
    assert report.passed
    tighter = gronwall_monitor(series, c_max=2.0)
    assert not tighter.passed


def test_gronwall_zero_series_passes_trivially():
    series = [(0.0, 0.0), (0.1, 0.0), (0.2, 0.0)]
    report = gronwall_monitor(series)
    assert report.passed
    assert report.rate == 0.0
    assert report.reference == report.floor


def test_gronwall_input_validation():
    with pytest.raises(ValueError):
        gronwall_monitor([(0.0, 1.0), (0.1, 1.0)])
    with pytest.raises(ValueError):
        gronwall_monitor([(0.0, 1.0), (0.0, 1.0), (0.1, 1.0)])
    with pytest.raises(ValueError):
        gronwall_monitor([(0.0, 1.0), (0.1, -1.0), (0.2, 1.0)])


# --- manufactured reference flow -------------------------------------------


def test_reference_flow_satisfies_the_momentum_balance():
    """With unit density and no convection, d/dt U = div S pointwise."""
    strong = manufactured_solution((1, 1, 0), (1.0, -1.0, 0.0), 0.05)
    rng = np.random.default_rng(41)
    pts = rng.random((20, 3))
    t, h = 0.3, 1e-6
    dudt = (strong.velocity(t + h, pts) - strong.velocity(t - h, pts)) / (2 * h)
    np.testing.assert_allclose(dudt, strong.stress_divergence(t, pts),
                               rtol=1e-7, atol=1e-9)


def test_reference_flow_gradients_and_energy():
    strong = manufactured_solution((1, 0, 0), (0.0, 1.0, 0.0), 0.1)
    rng = np.random.default_rng(43)
    pts = rng.random((10, 3))
    t, h = 0.2, 1e-6

    grad_fd = np.empty((len(pts), 3, 3))
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        grad_fd[:, :, j] = (strong.velocity(t, pts + step)
                            - strong.velocity(t, pts - step)) / (2 * h)
    np.testing.assert_allclose(strong.grad_velocity(t, pts), grad_fd,
                               atol=1e-6)
    # divergence free
    np.testing.assert_allclose(np.trace(grad_fd, axis1=1, axis2=2), 0.0,
                               atol=1e-6)
    # stress = 2 nu D(U)
    sym_fd = 0.5 * (grad_fd + np.swapaxes(grad_fd, 1, 2))
    stress = strong.stress(t, pts)
    np.testing.assert_allclose(stress[:, 0], 2 * 0.1 * sym_fd[:, 0, 0],
                               atol=1e-6)
    np.testing.assert_allclose(stress[:, 3], 2 * 0.1 * sym_fd[:, 0, 1],
                               atol=1e-6)
    # closed-form kinetic energy and gradient envelope
    assert strong.kinetic_energy(0.0) == pytest.approx(0.5, abs=1e-15)
    rate = 4.0 * math.pi ** 2 * 0.1
    assert strong.kinetic_energy(1.0) == pytest.approx(
        0.5 * math.exp(-2.0 * rate), rel=1e-12)
    dense = np.stack([np.linspace(0, 1, 400), np.zeros(400),
                      np.zeros(400)], axis=-1)
    sup = float(np.max(np.linalg.norm(strong.grad_velocity(t, dense),
                                      axis=(1, 2))))
    assert strong.grad_sup(t) == pytest.approx(sup, rel=1e-4)


def test_reference_flow_validation():
    with pytest.raises(ValueError):
        manufactured_solution((0, 0, 0), (0.0, 1.0, 0.0), 0.1)
    with pytest.raises(ValueError):
        manufactured_solution((1, 0, 0), (1.0, 0.0, 0.0), 0.1)  # w not perp k
    with pytest.raises(ValueError):
        manufactured_solution((1, 0, 0), (0.0, 1.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        manufactured_solution((0.5, 0, 0), (0.0, 1.0, 0.0), 0.1)
