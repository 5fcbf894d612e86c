"""Tests for the diffusion scalings, the action-density solver, the Monte
Carlo ensembles and the two forecasting modes.

Equilibrium checks use the Gibbs form e^{-H/T}/Z, which the drift/diffusion
pair satisfies exactly because nu_c*sigma_c = T by construction.
"""

import io
import math

import numpy as np
import pytest

from ecsim.dynamics import pendulum
from ecsim.errors import DomainError
from ecsim.risk import (
    AdiabaticityWarning,
    DensityGrid,
    DiffusionParams,
    ForecastMode,
    business_cycle_scalings,
    diffusion_scalings,
    forecast,
    fp_solve,
    ks_statistic,
    mc_ensemble,
)


class TestScalings:
    def test_reference_point(self):
        # ratio 0.01 with unit scales: nu_c = sigma_c = 0.1, kappa = 1e-3
        p = diffusion_scalings(T=0.01, omega_0=1.0, J_0=1.0)
        assert p.nu_c == pytest.approx(0.1, rel=1e-15)
        assert p.sigma_c == pytest.approx(0.1, rel=1e-15)
        assert p.kappa == pytest.approx(1e-3, rel=1e-15)

    def test_identities_random_draws(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            omega_0 = rng.uniform(0.1, 50.0)
            J_0 = rng.uniform(0.1, 50.0)
            T = rng.uniform(1e-6, 0.09) * omega_0 * J_0
            p = diffusion_scalings(T, omega_0, J_0)
            assert p.kappa == p.nu_c * p.sigma_c**2  # bitwise by construction
            r = math.sqrt(T / (J_0 * omega_0))
            assert p.nu_c / p.omega_0 == pytest.approx(r, rel=1e-14)
            assert p.sigma_c / p.J_0 == pytest.approx(r, rel=1e-14)

    def test_unit_ratio_warns_but_returns_boundary_values(self):
        with pytest.warns(AdiabaticityWarning):
            p = diffusion_scalings(T=1.0, omega_0=1.0, J_0=1.0)
        assert p.nu_c == pytest.approx(1.0)
        assert p.sigma_c == pytest.approx(1.0)

    def test_ratio_above_one_rejected(self):
        with pytest.raises(DomainError):
            diffusion_scalings(T=1.5, omega_0=1.0, J_0=1.0)

    def test_nonpositive_inputs_rejected(self):
        with pytest.raises(DomainError):
            diffusion_scalings(T=-1.0, omega_0=1.0, J_0=1.0)
        with pytest.raises(DomainError):
            diffusion_scalings(T=0.1, omega_0=0.0, J_0=1.0)

    def test_business_cycle_sixth_root(self):
        # T_e/(omega_0*J_0) = 0.1^6 collapses to nu = 0.1*omega_0.
        p = business_cycle_scalings(T_e=0.1**6, omega_0=1.0, J_0=1.0)
        assert p.nu_c == pytest.approx(0.1, rel=1e-12)

    def test_params_consistency_enforced(self):
        with pytest.raises(DomainError):
            DiffusionParams(nu_c=1.0, sigma_c=1.0, kappa=2.0, T=1.0,
                            omega_0=1.0, J_0=1.0)


class TestDensityGrid:
    def test_from_function_normalizes(self):
        g = DensityGrid.from_function(lambda j: np.exp(-j), 0.0, 10.0, 400)
        assert g.mass() == pytest.approx(1.0, abs=1e-14)
        assert g.mean() == pytest.approx(1.0, abs=5e-3)  # truncation at 10

    def test_point_mass(self):
        g = DensityGrid.point_mass(2.0, 0.0, 10.0, 100)
        assert g.mass() == pytest.approx(1.0, abs=1e-14)
        assert g.mean() == pytest.approx(2.0, abs=g.cell_width)

    def test_cdf_monotone(self):
        g = DensityGrid.from_function(lambda j: np.exp(-0.5 * j**2), 0.0, 5.0, 64)
        cdf = g.cdf()
        assert np.all(np.diff(cdf) >= 0.0)
        assert cdf[-1] == pytest.approx(1.0, abs=1e-12)

    def test_negative_density_rejected(self):
        with pytest.raises(DomainError):
            DensityGrid(0.0, 1.0, np.array([0.5, -0.1, 0.6]), t=0.0)
        with pytest.raises(DomainError):
            DensityGrid.from_function(lambda j: j - 1.0, 0.0, 2.0, 16)

    def test_csv_format(self):
        g = DensityGrid.point_mass(0.5, 0.0, 1.0, 4)
        buf = io.StringIO()
        g.to_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "j,f"
        assert len(lines) == 5


def _unit_params():
    # omega_0 = J_0 = 10 with T = 1 gives nu_c = sigma_c = kappa = 1,
    # putting the equilibrium scale T well inside the grid.
    return diffusion_scalings(T=1.0, omega_0=10.0, J_0=10.0)


class TestFokkerPlanck:
    def test_equilibrium_linear_and_quadratic(self):
        params = _unit_params()
        for H, f_eq in (
            (lambda j: j, lambda j: np.exp(-j)),
            (lambda j: 0.5 * j**2, lambda j: np.exp(-0.5 * j**2)),
        ):
            f0 = DensityGrid.from_function(lambda j: np.exp(-((j - 3.0) ** 2)),
                                           0.0, 10.0, 400)
            out = fp_solve(H, params, f0, t_end=20.0 / params.nu_c)
            ref = DensityGrid.from_function(f_eq, 0.0, 10.0, 400)
            l1 = float(np.sum(np.abs(out.values - ref.values)) * out.cell_width)
            assert l1 <= 0.05
            assert abs(out.mass() - 1.0) <= 1e-8

    def test_mean_relaxes_to_temperature(self):
        params = _unit_params()
        f0 = DensityGrid.point_mass(5.0, 0.0, 10.0, 400)
        out = fp_solve(lambda j: j, params, f0, t_end=20.0)
        assert out.mean() == pytest.approx(1.0, rel=0.02)

    def test_drift_dominated_advection(self):
        # Weak diffusion: a point mass slides toward the landscape minimum
        # (at J = 2 here) and stays normalized.  The rate bundle keeps
        # kappa tiny but positive, standing in for the kappa -> 0 limit.
        params = diffusion_scalings(T=0.01, omega_0=10.0, J_0=10.0)
        f0 = DensityGrid.point_mass(6.0, 0.0, 10.0, 500)
        out = fp_solve(lambda j: 0.5 * (j - 2.0) ** 2, params, f0, t_end=100.0)
        assert abs(out.mass() - 1.0) <= 1e-8
        assert out.mean() == pytest.approx(2.0, abs=0.3)
        assert np.all(out.values >= 0.0)

    def test_t_end_zero_identity(self):
        params = _unit_params()
        f0 = DensityGrid.point_mass(1.0, 0.0, 10.0, 400)
        out = fp_solve(lambda j: j, params, f0, t_end=0.0)
        assert np.array_equal(out.values, f0.values)

    def test_coarse_grid_rejected(self):
        params = _unit_params()  # sigma_c = 1 -> need h <= 0.25
        f0 = DensityGrid.point_mass(1.0, 0.0, 10.0, 20)  # h = 0.5
        with pytest.raises(DomainError):
            fp_solve(lambda j: j, params, f0, 1.0)


class TestMonteCarlo:
    def test_terminal_mean_matches_equilibrium(self):
        params = _unit_params()
        J = mc_ensemble(lambda j: j, params, j0=3.0, n_paths=20_000,
                        t_end=20.0, seed=5)
        assert J.mean() == pytest.approx(1.0, abs=0.03)

    def test_prefix_property(self):
        params = _unit_params()
        small = mc_ensemble(lambda j: j, params, 1.0, 5, 2.0, seed=9)
        big = mc_ensemble(lambda j: j, params, 1.0, 8, 2.0, seed=9)
        assert np.array_equal(small, big[:5])

    def test_same_seed_identical(self):
        params = _unit_params()
        a = mc_ensemble(lambda j: j, params, 1.0, 64, 3.0, seed=21)
        b = mc_ensemble(lambda j: j, params, 1.0, 64, 3.0, seed=21)
        assert np.array_equal(a, b)

    def test_zero_time_returns_start(self):
        params = _unit_params()
        J = mc_ensemble(lambda j: j, params, j0=1.5, n_paths=1, t_end=0.0, seed=0)
        assert J.tolist() == [1.5]

    def test_ks_against_pde(self):
        params = _unit_params()
        f0 = DensityGrid.point_mass(3.0, 0.0, 10.0, 400)
        grid = fp_solve(lambda j: j, params, f0, t_end=5.0)
        J = mc_ensemble(lambda j: j, params, 3.0, 20_000, 5.0, seed=13)
        assert ks_statistic(J, grid) <= 0.03

    def test_invalid_inputs(self):
        params = _unit_params()
        with pytest.raises(DomainError):
            mc_ensemble(lambda j: j, params, 1.0, 0, 1.0, seed=0)
        with pytest.raises(DomainError):
            mc_ensemble(lambda j: j, params, -1.0, 4, 1.0, seed=0)


class TestForecast:
    def test_conservative_preserves_amplitude(self):
        model = pendulum()
        horizon = 10.0 * 2.0 * math.pi
        res = forecast(ForecastMode.CONSERVATIVE, start=1.0, horizon=horizon,
                       n_realizations=20, seed=3, n_samples=800, model=model)
        for path in res.paths:
            assert np.ptp(path) == pytest.approx(2.0, rel=0.01)

    def test_conservative_phase_variety(self):
        model = pendulum()
        res = forecast(ForecastMode.CONSERVATIVE, start=1.0, horizon=10.0,
                       n_realizations=10, seed=3, n_samples=100, model=model)
        # distinct phases: the realizations must not be identical
        assert np.ptp(res.paths[:, 0]) > 0.1

    def test_diffusive_variance_growth(self):
        params = _unit_params()  # kappa = 1
        t_end = 0.5
        res = forecast(ForecastMode.DIFFUSIVE, start=5.0, horizon=t_end,
                       n_realizations=4000, seed=11, n_samples=16,
                       params=params, H=lambda j: j)
        var = float(np.var(res.paths[:, -1]))
        assert var == pytest.approx(2.0 * params.kappa * t_end, rel=0.2)

    def test_diffusive_mean_reverts(self):
        params = _unit_params()
        res = forecast(ForecastMode.DIFFUSIVE, start=5.0, horizon=30.0,
                       n_realizations=2000, seed=11, n_samples=16,
                       params=params, H=lambda j: j)
        assert float(res.paths[:, -1].mean()) == pytest.approx(1.0, abs=0.1)

    def test_empty_ensemble(self):
        model = pendulum()
        res = forecast(ForecastMode.CONSERVATIVE, start=1.0, horizon=1.0,
                       n_realizations=0, model=model)
        assert res.paths.shape[0] == 0

    def test_bad_horizon(self):
        with pytest.raises(DomainError):
            forecast(ForecastMode.CONSERVATIVE, start=1.0, horizon=0.0,
                     n_realizations=1, model=pendulum())

    def test_csv_long_format(self):
        model = pendulum()
        res = forecast(ForecastMode.CONSERVATIVE, start=0.5, horizon=1.0,
                       n_realizations=2, seed=0, n_samples=3, model=model)
        buf = io.StringIO()
        res.to_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "realization_id,t,value"
        assert len(lines) == 1 + 2 * 3
        rid, t, value = lines[1].split(",")
        assert rid == "0" and float(t) == 0.0
