"""Tests for the control module: policy validation, reward-shaping and
feedback forces, parametric (Kapitza-style) stabilization, landscape
dissipation, four-level gain accounting and band arbitrage."""

import io
import math

import numpy as np
import pytest

from ecsim.control import (
    ControlPolicy,
    FaserLevels,
    PolicyKind,
    PumpAndDump,
    Verdict,
    WeakDriveWarning,
    arbitrage_run,
    control_force_reward,
    critical_nu,
    dissipative_trajectory,
    embed_dissipation,
    faser_gain,
    feedback_force,
    kapitza_sweep,
    kick_times,
    ponderomotive_force,
    stabilize_run,
    sweep_to_csv,
)
from ecsim.dynamics import (
    HamiltonianModel,
    ModelKind,
    PhaseState,
    double_well_action,
    find_equilibria,
    integrate_trajectory,
    pendulum,
    quartic_action,
)
from ecsim.errors import DomainError, UnsupportedModelError

TWO_PI = 2.0 * math.pi


def _drive(f_0, omega_sp=40.0, epsilon_P=0.0, omega_0=1.0, J_0=1.0):
    return ControlPolicy(kind=PolicyKind.PONDEROMOTIVE, f_0=f_0,
                         omega_sp=omega_sp, epsilon_P=epsilon_P,
                         omega_0=omega_0, J_0=J_0)


class TestPolicyValidation:
    def test_slow_drive_rejected(self):
        with pytest.raises(DomainError):
            _drive(2.0, omega_sp=9.9)

    def test_overstrong_drive_rejected(self):
        # bound is 0.3 * J_0 * omega_sp = 12 here
        with pytest.raises(DomainError):
            _drive(12.1, omega_sp=40.0)

    def test_weak_drive_warns(self):
        with pytest.warns(WeakDriveWarning):
            _drive(0.5)

    def test_amplitude_at_natural_scale_is_silent(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            _drive(1.0)

    def test_feedback_needs_target(self):
        with pytest.raises(DomainError):
            ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=2.0)

    def test_feedback_gain_floor(self):
        with pytest.raises(DomainError):
            ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=0.5, target=0.0)

    def test_negative_cooling_rejected(self):
        with pytest.raises(DomainError):
            ControlPolicy(kind=PolicyKind.NONE, epsilon_P=-0.1)


class TestRewardForce:
    def test_identity_gives_zero(self):
        F = control_force_reward(np.cos, np.cos, (-3.0, 3.0))
        for q in np.linspace(-3.0, 3.0, 11):
            assert F(q) == pytest.approx(0.0, abs=1e-12)

    def test_linear_tilt(self):
        a = 0.7
        F = control_force_reward(lambda q: 0.5 * q * q + a * q,
                                 lambda q: 0.5 * q * q, (-2.0, 2.0))
        for q in (-1.5, 0.0, 0.3, 1.9):
            assert F(q) == pytest.approx(-a, abs=1e-9)

    def test_cosine_correction(self):
        F = control_force_reward(lambda q: math.cos(q) + 0.1 * math.cos(2 * q),
                                 math.cos, (-math.pi, math.pi))
        for q in np.linspace(-3.0, 3.0, 25):
            assert F(q) == pytest.approx(0.2 * math.sin(2 * q), abs=1e-6)

    def test_shaped_dynamics_matches_native_target(self):
        # Integrating V0 plus the shaping force must reproduce the
        # trajectory of the target landscape itself (same start, so the
        # long-run q statistics trivially agree).
        V0 = lambda q: -math.cos(q)  # noqa: E731
        Vt = lambda q: -math.cos(q) + 0.1 * math.cos(2 * q)  # noqa: E731
        F = control_force_reward(Vt, V0, (-math.pi, math.pi))
        base = HamiltonianModel(kind=ModelKind.CUSTOM,
                                energy=lambda p, q: 0.5 * p * p + V0(q),
                                dVdq=math.sin, name="base")
        native = HamiltonianModel(
            kind=ModelKind.CUSTOM,
            energy=lambda p, q: 0.5 * p * p + Vt(q),
            dVdq=lambda q: math.sin(q) - 0.2 * math.sin(2 * q),
            name="native",
        )
        start = PhaseState(0.4, 0.0)
        shaped = integrate_trajectory(base, start, 1e-3, 20_000,
                                      force=lambda t, q, p: F(q))
        direct = integrate_trajectory(native, start, 1e-3, 20_000)
        assert np.max(np.abs(shaped.q - direct.q)) < 1e-4

    def test_bad_domain(self):
        with pytest.raises(DomainError):
            control_force_reward(np.cos, np.cos, (1.0, 1.0))
        with pytest.raises(DomainError):
            control_force_reward(lambda q: 1.0 / q, np.cos, (0.0, 1.0))


class TestFeedbackForce:
    def test_fixed_point(self):
        pol = ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=1.0, target=2.0)
        assert feedback_force(pol, 2.0, lambda P: 0.0) == 0.0

    def test_linear_term(self):
        pol = ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=1.0, target=0.0)
        assert feedback_force(pol, 0.2, lambda P: 0.0) == pytest.approx(-0.2)

    def test_cooling_term(self):
        pol = ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=1.0,
                            epsilon_P=0.01, target=1.0)
        assert feedback_force(pol, 1.0, lambda P: 2.0) == pytest.approx(-0.02)

    def test_wrong_kind(self):
        pol = ControlPolicy(kind=PolicyKind.NONE)
        with pytest.raises(DomainError):
            feedback_force(pol, 0.0, lambda P: 0.0)


class TestDriveForce:
    def test_silent_drive_is_zero(self):
        pol = _drive(0.0)
        for t in (0.0, 0.1, 7.3):
            assert ponderomotive_force(pol, t) == 0.0

    def test_cosine_phase_at_origin(self):
        pol = _drive(1.0, omega_sp=100.0, omega_0=10.0, J_0=0.1)
        assert ponderomotive_force(pol, 0.0) == pytest.approx(1.0)

    def test_ten_kicks_in_ten_windows(self):
        pol = _drive(0.0, epsilon_P=0.1)
        times = kick_times(pol, 0.0, 20.0 * math.pi)
        assert len(times) == 10
        assert times[0] == 0.0
        assert times[1] == pytest.approx(TWO_PI)

    def test_kick_is_deterministic_and_window_constant(self):
        pol = _drive(0.0, epsilon_P=0.5)
        a = ponderomotive_force(pol, 1.0, seed=7)
        b = ponderomotive_force(pol, 2.0, seed=7)  # same window
        assert a == b
        assert abs(a) == pytest.approx(0.5)

    def test_signs_vary_across_windows(self):
        pol = _drive(0.0, epsilon_P=1.0)
        vals = {ponderomotive_force(pol, k * TWO_PI + 0.1, seed=3)
                for k in range(12)}
        assert vals == {1.0, -1.0}

    def test_wrong_kind(self):
        with pytest.raises(DomainError):
            ponderomotive_force(ControlPolicy(kind=PolicyKind.NONE), 0.0)


class TestStabilizeRun:
    def test_uncontrolled_departure(self):
        res = stabilize_run(pendulum(), ControlPolicy(kind=PolicyKind.NONE),
                            PhaseState(math.pi + 0.01, 0.0), 10.0 * TWO_PI)
        assert res.verdict is Verdict.NOT_STABILIZED
        # exponential departure from the hilltop: e-folding rate 1
        assert res.max_final_distance > 1.0

    def test_exact_hilltop_is_fixed(self):
        res = stabilize_run(pendulum(), ControlPolicy(kind=PolicyKind.NONE),
                            PhaseState(math.pi, 0.0), 20.0)
        assert res.max_final_distance <= 1e-9
        assert res.stabilized

    def test_fast_drive_above_threshold(self):
        res = stabilize_run(pendulum(), _drive(2.0),
                            PhaseState(math.pi + 0.01, 0.0), 10.0 * TWO_PI)
        assert res.verdict is Verdict.STABILIZED
        assert res.bound == pytest.approx(0.25 * math.pi)

    def test_threshold_drive_fails(self):
        res = stabilize_run(pendulum(), _drive(1.0),
                            PhaseState(math.pi + 0.01, 0.0), 10.0 * TWO_PI)
        assert res.verdict is Verdict.NOT_STABILIZED

    def test_random_kicks_change_the_path(self):
        runs = [stabilize_run(pendulum(), _drive(2.0, epsilon_P=0.02),
                              PhaseState(math.pi + 0.01, 0.0), 4.0 * TWO_PI,
                              seed=s) for s in (1, 2)]
        assert not np.array_equal(runs[0].trajectory.p, runs[1].trajectory.p)

    def test_feedback_pins_action_model(self):
        model = double_well_action()
        pol = ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=5.0, target=0.0)
        res = stabilize_run(model, pol, PhaseState(0.0, 0.4), 30.0)
        assert res.stabilized
        assert abs(res.trajectory.p[-1]) < 1e-3

    def test_feedback_needs_action_model(self):
        pol = ControlPolicy(kind=PolicyKind.FEEDBACK, omega_sf=5.0, target=0.0)
        with pytest.raises(UnsupportedModelError):
            stabilize_run(pendulum(), pol, PhaseState(math.pi, 0.0), 1.0)

    def test_bad_duration(self):
        with pytest.raises(DomainError):
            stabilize_run(pendulum(), ControlPolicy(kind=PolicyKind.NONE),
                          PhaseState(3.0, 0.0), 0.0)


class TestSweep:
    def test_endpoints_and_monotonicity(self):
        pts = kapitza_sweep(pendulum(), [0.0, 1.0, 2.0], n_seeds=6,
                            duration_periods=6.0, seed=1)
        fracs = [p.fraction_stabilized for p in pts]
        assert fracs[0] == 0.0
        assert fracs[-1] == 1.0
        assert fracs == sorted(fracs)

    def test_csv_format(self):
        pts = kapitza_sweep(pendulum(), [0.0, 2.0], n_seeds=2,
                            duration_periods=3.0)
        buf = io.StringIO()
        sweep_to_csv(pts, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "amplitude,fraction_stabilized,n_runs"
        assert len(lines) == 3
        assert lines[1].endswith(",2")


class TestDissipation:
    def test_zero_rate_is_identity(self):
        model = double_well_action()
        assert embed_dissipation(model, 0.0) is model

    def test_polynomial_smoothing_is_exact(self):
        # Gaussian blur of P^4/4 - P^2/2 with width w has the closed form
        # P^4/4 + (3w^2 - 1) P^2/2 + 3w^4/4 - w^2/2, so the quadrature
        # must reproduce it to rounding.
        model = double_well_action()
        nu = 0.35
        blurred = embed_dissipation(model, nu)
        w2 = nu * nu
        for P in np.linspace(-1.5, 1.5, 9):
            expect = (0.25 * P**4 + 0.5 * (3.0 * w2 - 1.0) * P * P
                      + 0.75 * w2 * w2 - 0.5 * w2)
            assert blurred.energy(P) == pytest.approx(expect, abs=1e-10)
            assert blurred.dEdP(P) == pytest.approx(P**3 + (3.0 * w2 - 1.0) * P,
                                                    abs=1e-10)

    def test_count_drops_from_three_to_one(self):
        model = double_well_action()
        domain = model.params["domain"]
        counts = [len(find_equilibria(embed_dissipation(model, nu), domain))
                  for nu in (0.0, 0.2, 0.4, 0.6, 0.9)]
        assert counts[0] == 3
        assert counts[-1] == 1
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_critical_rate_matches_analytic_root(self):
        # With the closed form above the wells vanish at 3w^2 = 1.
        nu_cr = critical_nu(double_well_action(), (0.05, 1.0))
        assert nu_cr == pytest.approx(1.0 / math.sqrt(3.0), rel=0.02)

    def test_no_transition_raises(self):
        with pytest.raises(DomainError):
            critical_nu(quartic_action(), (0.05, 1.0))

    def test_negative_rate_rejected(self):
        with pytest.raises(DomainError):
            embed_dissipation(double_well_action(), -0.1)

    def test_coordinate_model_rejected(self):
        with pytest.raises(UnsupportedModelError):
            embed_dissipation(pendulum(), 0.5)

    def test_overdamped_run_sheds_energy(self):
        model = double_well_action()
        nu = 1.0  # above the critical rate
        traj = dissipative_trajectory(model, nu, PhaseState(0.0, 0.9), 10.0 / nu)
        blurred = embed_dissipation(model, nu)
        e_rel = [blurred.energy(p) - blurred.energy(0.0) for p in traj.p]
        assert abs(e_rel[-1]) <= 0.01 * abs(e_rel[0])
        assert abs(traj.p[-1]) < 1e-3


class TestFaserGain:
    def test_worked_cycle(self):
        levels = FaserLevels(E_0=0.0, E_star=4.0, E_p=5.0, E_d=1.0)
        assert faser_gain(levels, excited=True) == pytest.approx(2.0)
        assert faser_gain(levels, excited=False) == pytest.approx(-5.0)

    def test_documented_example(self):
        levels = FaserLevels(E_0=0.0, E_star=5.0, E_p=6.0, E_d=2.0)
        assert faser_gain(levels) == pytest.approx(2.0)

    def test_laser_limit(self):
        # free pumping (E_p = E_star) and dump at the ground level
        levels = FaserLevels(E_0=1.0, E_star=5.0, E_p=5.0, E_d=1.0)
        assert faser_gain(levels) == pytest.approx(4.0)

    def test_invalid_ordering(self):
        with pytest.raises(DomainError):
            FaserLevels(E_0=0.0, E_star=4.0, E_p=3.0, E_d=1.0)
        with pytest.raises(DomainError):
            FaserLevels(E_0=0.0, E_star=1.0, E_p=3.0, E_d=2.0)

    def test_random_level_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            E_0, E_d, E_star, E_p = np.sort(rng.uniform(-5.0, 5.0, size=4))
            levels = FaserLevels(E_0=E_0, E_star=E_star, E_p=E_p, E_d=E_d)
            g = faser_gain(levels)
            assert g == (E_star - E_d) - (E_p - E_star)
            if E_p > E_0:
                assert faser_gain(levels, excited=False) < 0.0
            assert (g > 0.0) == (E_star - E_d > E_p - E_star)


class TestArbitrage:
    def test_flat_price_no_trades(self):
        res = arbitrage_run(amplitude=0.0, seed=0)
        assert res.trades == []
        assert res.completed_profit == 0.0
        assert res.var_controlled == res.var_uncontrolled == 0.0

    def test_band_narrower_than_spread(self):
        res = arbitrage_run(amplitude=0.5, delta=1.0, seed=4)
        assert res.trades == []

    def test_cycle_profit_closed_form(self):
        # no impact: every round trip books 2*(A - delta)*lot
        res = arbitrage_run(amplitude=3.0, delta=1.0, impact=0.0, seed=2)
        assert res.completed_cycles >= 7
        for profit in res.cycle_profits:
            assert profit == pytest.approx(4.0, abs=2e-3)

    def test_profit_and_damping_across_seeds(self):
        for seed in range(10):
            res = arbitrage_run(seed=seed)
            assert res.completed_cycles >= 1
            assert res.completed_profit >= 0.0
            assert res.var_controlled < res.var_uncontrolled

    def test_cash_matches_trade_log(self):
        res = arbitrage_run(seed=3)
        cash = 0.0
        for tr in res.trades:
            assert tr.agent == "controller"
            cash += tr.price * tr.lots * (1.0 if tr.side == "sell" else -1.0)
        assert res.controller_cash == pytest.approx(cash, abs=1e-9)

    def test_start_long_first_trade_sells(self):
        res = arbitrage_run(seed=1, start_long=True)
        assert res.trades[0].side == "sell"

    def test_pump_and_dump_feeds_the_controller(self):
        period = TWO_PI
        inj = PumpAndDump(pump_window=(period, 1.25 * period),
                          dump_window=(2.0 * period, 2.25 * period),
                          n_trades=10, lots_per_trade=2.0)
        for seed in range(6):
            res = arbitrage_run(seed=seed, injector=inj)
            assert res.completed_profit > 0.0
            assert res.injector_cash < 0.0
            agents = {t.agent for t in res.trades}
            assert agents == {"controller", "injector"}

    def test_bad_injector_windows(self):
        with pytest.raises(DomainError):
            arbitrage_run(injector=PumpAndDump(pump_window=(2.0, 4.0),
                                               dump_window=(1.0, 3.0)))

    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            arbitrage_run(delta=0.0)
        with pytest.raises(DomainError):
            arbitrage_run(impact=-0.1)
