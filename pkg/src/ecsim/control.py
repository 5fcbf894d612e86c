"""Stabilization and control of oscillatory models.

Four policy families:

* **Reward shaping** — apply the force that makes a base reward landscape
  behave like a target landscape (their difference gradient).
* **Feedback** — proportional action feedback toward a target, with an
  optional noise-cancelling term.
* **Ponderomotive** — a fast drive at ``omega_sp >> omega_0`` plus sparse
  random kicks.  For the pendulum the drive enters parametrically as pivot
  modulation (the classic fast-vibration mechanism), with ``f_0`` the pivot
  velocity amplitude; averaging over the fast phase yields an effective
  restoring force at the inverted point once ``f_0 > sqrt(2)`` in natural
  units.  For action-level landscapes the drive adds directly to dP/dt and
  its averaged effect reshapes the landscape.
* **None** — free dynamics (control group for batteries).

Also here: heat-kernel embedding of dissipation into an action landscape
(:func:`embed_dissipation`), the critical damping search
(:func:`critical_nu`), the four-level gain bookkeeping
(:func:`faser_gain`), and a band-arbitrage market demo
(:func:`arbitrage_run`) that extracts oscillation energy as trading profit.
"""

from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .dynamics import (
    Equilibrium,
    HamiltonianModel,
    ModelKind,
    PhaseState,
    Stability,
    Trajectory,
    custom_action,
    find_equilibria,
    integrate_trajectory,
)
from .errors import DomainError, UnsupportedModelError

__all__ = [
    "PolicyKind",
    "ControlPolicy",
    "WeakDriveWarning",
    "control_force_reward",
    "feedback_force",
    "kick_times",
    "ponderomotive_force",
    "Verdict",
    "StabilizeResult",
    "stabilize_run",
    "SweepPoint",
    "kapitza_sweep",
    "sweep_to_csv",
    "embed_dissipation",
    "critical_nu",
    "dissipative_trajectory",
    "FaserLevels",
    "faser_gain",
    "Trade",
    "PumpAndDump",
    "ArbitrageResult",
    "arbitrage_run",
]

TWO_PI = 2.0 * math.pi


class WeakDriveWarning(UserWarning):
    """Drive amplitude below the J_0*omega_0 guideline; stabilization is not
    expected there (useful for threshold sweeps, hence a warning not an
    error)."""


class PolicyKind(enum.Enum):
    REWARD_SHAPING = "reward-shaping"
    FEEDBACK = "feedback"
    PONDEROMOTIVE = "ponderomotive"
    NONE = "none"


@dataclass(frozen=True)
class ControlPolicy:
    """Control configuration.  ``omega_0`` and ``J_0`` are the natural
    frequency and action scale of the plant, used to validate the policy."""

    kind: PolicyKind
    omega_sf: float = 0.0
    epsilon_P: float = 0.0
    f_0: float = 0.0
    omega_sp: float = 0.0
    target: float | None = None
    omega_0: float = 1.0
    J_0: float = 1.0

    def __post_init__(self):
        if self.omega_0 <= 0.0 or self.J_0 <= 0.0:
            raise DomainError("omega_0 and J_0 must be positive")
        if self.epsilon_P < 0.0:
            raise DomainError(f"epsilon_P must be non-negative, got {self.epsilon_P}")
        if self.kind is PolicyKind.FEEDBACK:
            if self.target is None:
                raise DomainError("feedback policy needs a target action")
            if self.omega_sf < self.omega_0:
                raise DomainError(
                    f"feedback gain omega_sf={self.omega_sf:g} must be at least "
                    f"omega_0={self.omega_0:g}"
                )
        elif self.kind is PolicyKind.PONDEROMOTIVE:
            if self.f_0 < 0.0:
                raise DomainError(f"drive amplitude must be non-negative, got {self.f_0}")
            if self.omega_sp < 10.0 * self.omega_0:
                raise DomainError(
                    f"drive frequency omega_sp={self.omega_sp:g} must be at least "
                    f"10*omega_0={10.0 * self.omega_0:g} for the averaged picture"
                )
            if self.f_0 > 0.3 * self.J_0 * self.omega_sp:
                raise DomainError(
                    f"drive amplitude f_0={self.f_0:g} exceeds the validity bound "
                    f"0.3*J_0*omega_sp={0.3 * self.J_0 * self.omega_sp:g}"
                )
            if 0.0 < self.f_0 < self.J_0 * self.omega_0:
                warnings.warn(
                    f"drive amplitude f_0={self.f_0:g} is below J_0*omega_0="
                    f"{self.J_0 * self.omega_0:g}; too weak to restructure the dynamics",
                    WeakDriveWarning,
                    stacklevel=2,
                )

    @property
    def window(self) -> float:
        """Kick window length 2*pi/omega_0."""
        return TWO_PI / self.omega_0


# ---------------------------------------------------------------------------
# Forces
# ---------------------------------------------------------------------------


def control_force_reward(
    R_target: Callable[[float], float],
    R_0: Callable[[float], float],
    domain: tuple[float, float],
    h: float | None = None,
) -> Callable[[float], float]:
    """Force that turns dynamics under landscape ``R_0`` into dynamics under
    ``R_target``:  F_c(q) = -d(R_target - R_0)/dq by centered differences
    with step ``h = 1e-5 * domain width`` unless overridden."""
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise DomainError(f"invalid reward domain {domain}")
    if h is None:
        h = 1e-5 * (hi - lo)
    if h <= 0.0:
        raise DomainError(f"difference step must be positive, got {h}")
    for f, name in ((R_target, "R_target"), (R_0, "R_0")):
        for x in (lo, hi):
            try:
                v = float(f(x))
            except (ZeroDivisionError, OverflowError, ValueError) as exc:
                raise DomainError(f"{name} failed to evaluate at q={x:g}: {exc}") from None
            if not math.isfinite(v):
                raise DomainError(f"{name} is not finite at q={x:g}")

    def F_c(q, _h=h):
        dRt = (R_target(q + _h) - R_target(q - _h)) / (2.0 * _h)
        dR0 = (R_0(q + _h) - R_0(q - _h)) / (2.0 * _h)
        return -(dRt - dR0)

    return F_c


def feedback_force(
    policy: ControlPolicy, P: float, omega_Q: Callable[[float], float]
) -> float:
    """Proportional feedback toward the target action:
    ``-omega_sf*(P - P_target) - epsilon_P*omega_Q(P)``."""
    if policy.kind is not PolicyKind.FEEDBACK:
        raise DomainError(f"feedback_force needs a feedback policy, got {policy.kind}")
    return -policy.omega_sf * (P - policy.target) - policy.epsilon_P * omega_Q(P)


def _kick_sign(seed: int, k: int) -> int:
    """Random ±1 for kick window k, from the dedicated stream (seed, k)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
    return int(rng.integers(0, 2)) * 2 - 1


def kick_times(policy: ControlPolicy, t0: float, t1: float) -> list[float]:
    """Window-start times in [t0, t1): exactly one kick per window
    2*pi/omega_0."""
    if t1 <= t0:
        return []
    W = policy.window
    k0 = math.ceil(t0 / W - 1e-12)
    out = []
    k = k0
    while k * W < t1 - 1e-12 * max(1.0, abs(t1)):
        if k * W >= t0 - 1e-12:
            out.append(k * W)
        k += 1
    return out


def ponderomotive_force(policy: ControlPolicy, t: float, seed: int = 0) -> float:
    """Drive value at time t: the coherent part ``f_0*cos(omega_sp*t)`` plus
    the current window's random kick term ``omega_0*epsilon_P*(+/-1)``.

    The kick sign is resampled once per window 2*pi/omega_0 from the stream
    ``(seed, window_index)``, so the force is deterministic in (t, seed) and
    independent of evaluation order.
    """
    if policy.kind is not PolicyKind.PONDEROMOTIVE:
        raise DomainError(
            f"ponderomotive_force needs a ponderomotive policy, got {policy.kind}"
        )
    val = policy.f_0 * math.cos(policy.omega_sp * t)
    if policy.epsilon_P > 0.0:
        k = math.floor(t / policy.window)
        val += policy.omega_0 * policy.epsilon_P * _kick_sign(seed, k)
    return val


# ---------------------------------------------------------------------------
# Stabilization runs
# ---------------------------------------------------------------------------


class Verdict(enum.Enum):
    STABILIZED = "Stabilized"
    NOT_STABILIZED = "NotStabilized"


@dataclass(frozen=True)
class StabilizeResult:
    trajectory: Trajectory
    verdict: Verdict
    equilibrium: float
    bound: float
    max_final_distance: float

    @property
    def stabilized(self) -> bool:
        return self.verdict is Verdict.STABILIZED


def _angle_distance(q: np.ndarray, q_star: float) -> np.ndarray:
    d = np.mod(q - q_star + math.pi, TWO_PI) - math.pi
    return np.abs(d)


def _unstable_action_point(model: HamiltonianModel) -> tuple[float, float]:
    """Locate the x-point of an action landscape and its basin half-width
    (distance to the nearest neighbouring equilibrium)."""
    domain = model.params.get("domain")
    if domain is None:
        raise DomainError("action-level model has no 'domain' parameter to search")
    eqs = find_equilibria(model, domain)
    xs = [e for e in eqs if e.stability is Stability.UNSTABLE]
    if not xs:
        raise DomainError(f"model {model.name!r} has no unstable equilibrium")
    x = xs[0]
    others = [e.P_star for e in eqs if e is not x]
    if others:
        half = min(abs(x.P_star - o) for o in others)
    else:
        half = 0.5 * (domain[1] - domain[0])
    return x.P_star, half


def _integrate_with_kicks(
    model: HamiltonianModel,
    start: PhaseState,
    dt: float,
    duration: float,
    force: Callable[[float, float, float], float] | None,
    kicks: Sequence[tuple[float, float]],
) -> Trajectory:
    """Integrate across ``duration`` applying instantaneous momentum kicks
    (t_k, dP_k) at the given times (assumed sorted)."""
    marks = [t for t, _ in kicks if start.t < t < start.t + duration]
    deltas = {t: dp for t, dp in kicks}
    seg_edges = [start.t] + marks + [start.t + duration]
    qs, ps, ts = [np.array([start.q])], [np.array([start.p])], [np.array([start.t])]
    state = start
    # A kick exactly at the start applies before integration begins.
    if kicks and abs(kicks[0][0] - start.t) <= 1e-12:
        state = PhaseState(state.q, state.p + deltas[kicks[0][0]], state.t)
        ps[0] = np.array([state.p])
    for a, b in zip(seg_edges[:-1], seg_edges[1:]):
        n = max(1, int(round((b - a) / dt)))
        seg = integrate_trajectory(model, state, (b - a) / n, n, force=force)
        qs.append(seg.q[1:])
        ps.append(seg.p[1:])
        ts.append(seg.t[1:])
        state = seg[len(seg) - 1]
        if b in deltas and b < start.t + duration:
            state = PhaseState(state.q, state.p + deltas[b], state.t)
            ps[-1] = ps[-1].copy()
            ps[-1][-1] = state.p
    return Trajectory(t=np.concatenate(ts), q=np.concatenate(qs), p=np.concatenate(ps))


def stabilize_run(
    model: HamiltonianModel,
    policy: ControlPolicy,
    start: PhaseState,
    duration: float,
    seed: int = 0,
    dt: float | None = None,
    equilibrium: float | None = None,
    basin_halfwidth: float | None = None,
) -> StabilizeResult:
    """Run the controlled system and judge stabilization.

    The verdict is ``Stabilized`` when the distance from the unstable
    equilibrium stays below half the basin half-width over the entire final
    half of the run.  For the pendulum the distance is angular distance from
    the inverted point (basin half-width pi/2); for action-level models it
    is |P - P_star| with the half-width taken to the nearest neighbouring
    equilibrium.

    Coupling: a ponderomotive drive on the pendulum modulates the pivot,
    i.e. the restoring term becomes ``-(1 - f_0*omega_sp*cos(omega_sp t))
    * sin q``; random kicks are instantaneous momentum increments of size
    ``epsilon_P`` once per window.  On action-level models the drive and
    kicks act additively on P.
    """
    if duration <= 0.0:
        raise DomainError(f"duration must be positive, got {duration}")

    if model.action_level:
        if equilibrium is None or basin_halfwidth is None:
            p_star, half = _unstable_action_point(model)
            equilibrium = p_star if equilibrium is None else equilibrium
            basin_halfwidth = half if basin_halfwidth is None else basin_halfwidth
    else:
        if equilibrium is None:
            equilibrium = model.params.get("unstable_q")
            if equilibrium is None:
                raise DomainError(
                    f"model {model.name!r} does not expose an unstable equilibrium"
                )
        if basin_halfwidth is None:
            basin_halfwidth = 0.5 * math.pi

    force = None
    kicks: list[tuple[float, float]] = []
    if policy.kind is PolicyKind.PONDEROMOTIVE:
        if policy.epsilon_P > 0.0:
            kicks = [
                (tk, policy.epsilon_P * _kick_sign(seed, round(tk / policy.window)))
                for tk in kick_times(policy, start.t, start.t + duration)
            ]
        f0, wsp = policy.f_0, policy.omega_sp
        if model.action_level:
            force = lambda t, q, p: f0 * math.cos(wsp * t)  # noqa: E731
        else:
            force = lambda t, q, p: f0 * wsp * math.cos(wsp * t) * math.sin(q)  # noqa: E731
        if dt is None:
            dt = (TWO_PI / wsp) / 32.0
    elif policy.kind is PolicyKind.FEEDBACK:
        if not model.action_level:
            raise UnsupportedModelError("feedback stabilization acts on action-level models")
        force = lambda t, q, p: feedback_force(policy, p, model.dEdP)  # noqa: E731
        if dt is None:
            dt = (TWO_PI / policy.omega_0) / 256.0
    elif policy.kind is PolicyKind.NONE:
        if dt is None:
            dt = (TWO_PI / policy.omega_0) / 256.0
    else:
        raise DomainError(f"stabilize_run does not support policy kind {policy.kind}")

    traj = _integrate_with_kicks(model, start, dt, duration, force, kicks)

    if model.action_level:
        dist = np.abs(traj.p - equilibrium)
    else:
        dist = _angle_distance(traj.q, equilibrium)
    half_idx = len(dist) // 2
    max_final = float(np.max(dist[half_idx:]))
    bound = 0.5 * basin_halfwidth
    verdict = Verdict.STABILIZED if max_final < bound else Verdict.NOT_STABILIZED
    return StabilizeResult(
        trajectory=traj,
        verdict=verdict,
        equilibrium=float(equilibrium),
        bound=bound,
        max_final_distance=max_final,
    )


@dataclass(frozen=True)
class SweepPoint:
    amplitude: float
    fraction_stabilized: float
    n_runs: int


def kapitza_sweep(
    model: HamiltonianModel,
    amplitudes: Sequence[float],
    omega_sp: float = 40.0,
    n_seeds: int = 16,
    duration_periods: float = 10.0,
    offset_scale: float = 0.05,
    epsilon_P: float = 0.0,
    seed: int = 0,
) -> list[SweepPoint]:
    """Fraction of randomized runs stabilized at each drive amplitude.

    Each run perturbs the start away from the inverted point by a random
    offset in ±[0.1, 1]*offset_scale drawn from the stream
    (seed, amplitude_index, run_index).
    """
    omega_0 = model.params.get("omega_0", 1.0)
    duration = duration_periods * TWO_PI / omega_0
    q_star = model.params.get("unstable_q", math.pi)
    out = []
    for ai, amp in enumerate(amplitudes):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", WeakDriveWarning)
            policy = ControlPolicy(
                kind=PolicyKind.PONDEROMOTIVE,
                f_0=float(amp),
                omega_sp=omega_sp,
                epsilon_P=epsilon_P,
                omega_0=omega_0,
            )
        wins = 0
        for si in range(n_seeds):
            rng = np.random.default_rng(np.random.SeedSequence((seed, ai, si)))
            off = rng.uniform(0.1 * offset_scale, offset_scale) * (
                1 if rng.random() < 0.5 else -1
            )
            kick_seed = int(rng.integers(0, 2**31 - 1))
            res = stabilize_run(
                model, policy, PhaseState(q_star + off, 0.0), duration, seed=kick_seed
            )
            wins += res.stabilized
        out.append(SweepPoint(float(amp), wins / n_seeds, n_seeds))
    return out


def sweep_to_csv(points: Sequence[SweepPoint], path_or_file) -> None:
    buf = io.StringIO()
    buf.write("amplitude,fraction_stabilized,n_runs\n")
    for pt in points:
        buf.write(f"{pt.amplitude!r},{pt.fraction_stabilized!r},{pt.n_runs}\n")
    data = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(data)


# ---------------------------------------------------------------------------
# Embedded dissipation
# ---------------------------------------------------------------------------

_GH_NODES, _GH_WEIGHTS = hermegauss(48)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(TWO_PI)  # normalize the Gaussian weight


def embed_dissipation(model: HamiltonianModel, nu: float) -> HamiltonianModel:
    """Embed damping of rate ``nu`` into an action landscape.

    Dissipation blurs the landscape features on the action scale
    ``w = nu * J_0 / omega_0``; this is implemented as heat-kernel
    (Gaussian) smoothing of E(P) by Gauss-Hermite quadrature, which is
    exact for polynomial landscapes.  ``nu = 0`` returns the model
    unchanged.  As nu grows, neighbouring o/x-point pairs merge and
    annihilate, and feature energies shrink toward zero.
    """
    if not model.action_level or model.dEdP is None:
        raise UnsupportedModelError("embed_dissipation needs an action-level model")
    if nu < 0.0 or not math.isfinite(nu):
        raise DomainError(f"damping rate must be non-negative, got {nu}")
    if nu == 0.0:
        return model
    J0 = model.params.get("J_0", 1.0)
    omega0 = model.params.get("omega_0", 1.0)
    w = nu * J0 / omega0
    parent_E, parent_dEdP = model.energy, model.dEdP

    def E_nu(P, _w=w):
        return float(np.dot(_GH_WEIGHTS, [parent_E(P + _w * x, 0.0) for x in _GH_NODES]))

    def dEdP_nu(P, _w=w):
        return float(np.dot(_GH_WEIGHTS, [parent_dEdP(P + _w * x) for x in _GH_NODES]))

    params = dict(model.params)
    params["nu"] = nu
    return HamiltonianModel(
        kind=ModelKind.CUSTOM,
        energy=lambda p, q=0.0: E_nu(p),
        dEdP=dEdP_nu,
        params=params,
        action_level=True,
        name=f"{model.name}+dissipation(nu={nu:g})",
    )


def critical_nu(
    model: HamiltonianModel,
    nu_range: tuple[float, float],
    domain: tuple[float, float] | None = None,
    n_seeds: int = 200,
    rtol: float = 0.01,
) -> float:
    """Smallest damping rate at which the equilibrium count drops to its
    terminal (large-nu) value, found by bisection on the count.

    Raises :class:`DomainError` when the count does not change across
    ``nu_range``.
    """
    lo, hi = float(nu_range[0]), float(nu_range[1])
    if not (0.0 <= lo < hi):
        raise DomainError(f"invalid nu range {nu_range}")
    if domain is None:
        domain = model.params.get("domain")
        if domain is None:
            raise DomainError("no search domain given and the model has none")

    def count(nu: float) -> int:
        return len(find_equilibria(embed_dissipation(model, nu), domain, n_seeds))

    c_lo, c_hi = count(lo), count(hi)
    if c_hi >= c_lo:
        raise DomainError(
            f"equilibrium count does not drop across nu range {nu_range} "
            f"({c_lo} -> {c_hi})"
        )
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if count(mid) <= c_hi:
            hi = mid
        else:
            lo = mid
    return hi


def dissipative_trajectory(
    model: HamiltonianModel,
    nu: float,
    start: PhaseState,
    duration: float,
    dt: float | None = None,
) -> Trajectory:
    """Trajectory on the nu-smoothed landscape with action drag
    ``dP/dt = -nu*P``: every orbit spirals to the zero-action point."""
    if nu <= 0.0:
        raise DomainError(f"damping rate must be positive, got {nu}")
    m = embed_dissipation(model, nu)
    omega0 = model.params.get("omega_0", 1.0)
    if dt is None:
        dt = min(0.05 / nu, (TWO_PI / omega0) / 64.0)
    n = max(1, int(math.ceil(duration / dt)))
    return integrate_trajectory(
        m, start, duration / n, n, force=lambda t, q, p: -nu * p
    )


# ---------------------------------------------------------------------------
# Four-level gain bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FaserLevels:
    """Energy levels of the four-level amplification cycle: ground E_0,
    upper working level E_star, pump level E_p, dump level E_d.
    Requires E_p >= E_star >= E_d."""

    E_0: float
    E_star: float
    E_p: float
    E_d: float

    def __post_init__(self):
        if not (self.E_p >= self.E_star >= self.E_d):
            raise DomainError(
                f"level ordering violated: need E_p >= E_star >= E_d, got "
                f"E_p={self.E_p}, E_star={self.E_star}, E_d={self.E_d}"
            )


def faser_gain(levels: FaserLevels, excited: bool = True) -> float:
    """Net energy extracted per cycle.

    With the medium excited the cycle yields the drop to the dump level
    minus the pump cost: ``(E_star - E_d) - (E_p - E_star)``.  Unexcited,
    pumping from the ground state costs ``E_p - E_0`` and returns nothing:
    the gain is negative whenever E_p > E_0.
    """
    if excited:
        return (levels.E_star - levels.E_d) - (levels.E_p - levels.E_star)
    return -(levels.E_p - levels.E_0)


# ---------------------------------------------------------------------------
# Band arbitrage on an oscillating price
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trade:
    t: float
    side: str  # "buy" | "sell"
    price: float
    lots: float
    agent: str  # "controller" | "injector"


@dataclass(frozen=True)
class PumpAndDump:
    """Adversarial injector: buys ``lots_per_trade`` at ``n_trades`` evenly
    spaced times in the pump window, then sells the same amount across the
    dump window."""

    pump_window: tuple[float, float]
    dump_window: tuple[float, float]
    n_trades: int = 10
    lots_per_trade: float = 1.0


@dataclass
class ArbitrageResult:
    times: np.ndarray
    price_uncontrolled: np.ndarray
    price_controlled: np.ndarray
    trades: list[Trade]
    controller_cash: float
    controller_inventory: float
    completed_cycles: int
    cycle_profits: list[float]
    var_uncontrolled: float
    var_controlled: float
    injector_cash: float
    amplitude: float

    @property
    def completed_profit(self) -> float:
        return float(sum(self.cycle_profits))


def _injector_schedule(inj: PumpAndDump) -> list[tuple[float, float]]:
    """Expand the injector into (time, lots) trades, buys positive."""
    a, b = inj.pump_window
    c, d = inj.dump_window
    if not (a < b <= c < d):
        raise DomainError("pump window must precede dump window")
    if inj.n_trades < 1 or inj.lots_per_trade <= 0.0:
        raise DomainError("injector needs at least one trade of positive size")
    pumps = [(a + (b - a) * (k + 0.5) / inj.n_trades, inj.lots_per_trade)
             for k in range(inj.n_trades)]
    dumps = [(c + (d - c) * (k + 0.5) / inj.n_trades, -inj.lots_per_trade)
             for k in range(inj.n_trades)]
    return pumps + dumps


def arbitrage_run(
    p_star: float = 100.0,
    delta: float = 1.0,
    omega: float = 1.0,
    duration: float | None = None,
    seed: int = 0,
    amplitude: float | None = None,
    lot: float = 1.0,
    impact: float | None = None,
    start_long: bool = False,
    injector: PumpAndDump | None = None,
    samples_per_period: int = 512,
) -> ArbitrageResult:
    """Trade the band ±delta around the price equilibrium ``p_star``.

    The deviation follows a harmonic cycle (x'' = -omega^2 x).  The trader
    waits for turning points: it buys one lot at a trough below -delta
    (filling at the extreme plus the half-spread delta) and sells it at a
    peak above +delta (extreme minus delta), so each completed round trip
    books ``2*(A' - delta)*lot`` where A' is the executed band.  Every fill
    moves the price by ``impact`` per lot toward the equilibrium side of the
    trade, which is how trading profit drains oscillation energy: the
    controlled price path has strictly smaller variance than the
    uncontrolled path on the same seed whenever at least one round trip
    completes.

    All taker fills pay the half-spread: a buy executes ``delta`` above the
    mid and a sell ``delta`` below it (the controller's extreme -/+ delta
    fills are this same rule applied at the turning point).  Impact moves
    the mid after the fill, so an injector cannot profit from its own
    pressure.

    The run is simulated twice from identical initial conditions — trader
    off, then trader on (any injector is active in both) — and reports both
    price paths and their variances.
    """
    if delta <= 0.0 or omega <= 0.0 or lot <= 0.0:
        raise DomainError("delta, omega and lot must be positive")
    period = TWO_PI / omega
    if duration is None:
        duration = 8.0 * period
    if duration <= 0.0:
        raise DomainError(f"duration must be positive, got {duration}")
    if impact is None:
        impact = 0.05 * delta
    if impact < 0.0:
        raise DomainError(f"impact must be non-negative, got {impact}")

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    if amplitude is None:
        amplitude = float(rng.uniform(2.0 * delta, 4.0 * delta))
    if amplitude < 0.0:
        raise DomainError(f"amplitude must be non-negative, got {amplitude}")
    phase = float(rng.uniform(0.0, TWO_PI))

    dt = period / samples_per_period
    n = int(math.ceil(duration / dt))
    dt = duration / n
    times = dt * np.arange(n + 1)
    inj_trades = sorted(_injector_schedule(injector), key=lambda s: s[0]) if injector else []

    def simulate(trader_on: bool):
        x = amplitude * math.cos(phase)
        v = -amplitude * omega * math.sin(phase)
        xs = np.empty(n + 1)
        xs[0] = x
        trades: list[Trade] = []
        cash = 0.0
        inv = lot if (trader_on and start_long) else 0.0
        inj_cash = 0.0
        inj_i = 0
        cycles = 0
        cycle_profits: list[float] = []
        open_fill = p_star if start_long else None  # book basis of the held lot
        prev_v = v
        for i in range(1, n + 1):
            t = times[i]
            # leapfrog step of the price deviation
            v_half = v - 0.5 * dt * omega * omega * x
            x = x + dt * v_half
            v = v_half - 0.5 * dt * omega * omega * x
            # injector trades scheduled within (t-dt, t]
            while inj_i < len(inj_trades) and inj_trades[inj_i][0] <= t:
                lots = inj_trades[inj_i][1]
                price = p_star + x + (delta if lots > 0 else -delta)
                inj_cash -= price * lots
                x += impact * lots
                trades.append(Trade(t, "buy" if lots > 0 else "sell", price, abs(lots), "injector"))
                inj_i += 1
            if trader_on:
                trough = prev_v < 0.0 <= v
                peak = prev_v > 0.0 >= v
                if trough and x < -delta and inv == 0.0:
                    fill = p_star + x + delta
                    cash -= fill * lot
                    inv = lot
                    open_fill = fill
                    x += impact * lot
                    trades.append(Trade(t, "buy", fill, lot, "controller"))
                elif peak and x > delta and inv > 0.0:
                    fill = p_star + x - delta
                    cash += fill * lot
                    inv = 0.0
                    x -= impact * lot
                    trades.append(Trade(t, "sell", fill, lot, "controller"))
                    if open_fill is not None:
                        cycle_profits.append((fill - open_fill) * lot)
                        cycles += 1
                    open_fill = None
            prev_v = v
            xs[i] = x
        return xs, trades, cash, inv, inj_cash, cycles, cycle_profits

    xs_off, _, _, _, inj_cash_off, _, _ = simulate(trader_on=False)
    xs_on, trades, cash, inv, inj_cash, cycles, cycle_profits = simulate(trader_on=True)

    return ArbitrageResult(
        times=times,
        price_uncontrolled=p_star + xs_off,
        price_controlled=p_star + xs_on,
        trades=trades,
        controller_cash=cash,
        controller_inventory=inv,
        completed_cycles=cycles,
        cycle_profits=cycle_profits,
        var_uncontrolled=float(np.var(xs_off)),
        var_controlled=float(np.var(xs_on)),
        injector_cash=inj_cash,
        amplitude=amplitude,
    )
