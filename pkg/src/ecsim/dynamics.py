"""Conservative phase-space dynamics for closed-form models.

Two families of models are supported:

* **Coordinate models** live in ``(q, p)`` with ``H = p^2/2 + V(q)`` — the
  pendulum (``V = -cos q``) and the harmonic oscillator are built in.
* **Action-level models** are one-dimensional energy landscapes ``E(P)``
  whose state is an angle/action pair ``(Q, P)``: the angle advances at the
  local frequency ``omega(P) = dE/dP`` while the action only changes under
  external forcing.  Zeros of ``omega`` are the landscape equilibria:
  o-points (minima, stable) and x-points (maxima, unstable).

Trajectories are integrated with the kick-drift-kick (velocity Verlet)
splitting, which is symplectic and exactly time-reversible for
state-independent forces.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import (
    DomainError,
    IntegrationBlowupError,
    UnsupportedModelError,
)

__all__ = [
    "Stability",
    "ModelKind",
    "PhaseState",
    "Equilibrium",
    "HamiltonianModel",
    "Trajectory",
    "pendulum",
    "harmonic",
    "double_well_action",
    "quartic_action",
    "custom_action",
    "integrate_trajectory",
    "action_angle",
    "action_angle_inverse",
    "oscillation_period",
    "find_equilibria",
    "trajectory_to_csv",
]

TWO_PI = 2.0 * math.pi

# States with E within this distance of the separatrix energy are rejected:
# the period diverges there and the angle map is no longer well conditioned.
_SEPARATRIX_TOL = 1e-9


class Stability(enum.Enum):
    STABLE = "stable"  # o-point: local minimum of the landscape
    UNSTABLE = "unstable"  # x-point: local maximum


class ModelKind(enum.Enum):
    PENDULUM = "pendulum"
    DOUBLE_WELL_ACTION = "double-well-action"
    QUARTIC_ACTION = "quartic-action"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PhaseState:
    """A single phase-space sample.  For action-level models read (q, p) as
    (angle Q, action P)."""

    q: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p) and math.isfinite(self.t)):
            raise DomainError(f"non-finite phase state ({self.q}, {self.p}, t={self.t})")


@dataclass(frozen=True)
class Equilibrium:
    P_star: float
    E_star: float
    stability: Stability


@dataclass(frozen=True)
class HamiltonianModel:
    """A closed-form model.

    ``energy(p, q)`` returns the conserved energy.  Action-level models
    ignore ``q`` (the landscape depends on the action alone) and provide
    ``dEdP``; coordinate models provide the potential gradient ``dVdq``
    instead.
    """

    kind: ModelKind
    energy: Callable[[float, float], float]
    dEdP: Callable[[float], float] | None = None
    params: dict = field(default_factory=dict)
    dVdq: Callable[[float], float] | None = None
    action_level: bool = False
    name: str = ""

    def omega(self, P: float) -> float:
        """Local frequency dE/dP of an action-level model."""
        if self.dEdP is None:
            raise UnsupportedModelError(f"model {self.name or self.kind.value!r} has no dEdP")
        return self.dEdP(P)


def pendulum() -> HamiltonianModel:
    """Unit pendulum: H = p^2/2 - cos q, libration for E in (-1, 1)."""
    return HamiltonianModel(
        kind=ModelKind.PENDULUM,
        energy=lambda p, q: 0.5 * p * p - np.cos(q),
        dVdq=np.sin,
        params={"separatrix_energy": 1.0, "unstable_q": math.pi, "omega_0": 1.0},
        name="pendulum",
    )


def harmonic(omega: float = 1.0) -> HamiltonianModel:
    """Harmonic oscillator H = p^2/2 + omega^2 q^2 / 2 (a coordinate model)."""
    if omega <= 0:
        raise DomainError(f"harmonic frequency must be positive, got {omega}")
    w2 = omega * omega
    return HamiltonianModel(
        kind=ModelKind.CUSTOM,
        energy=lambda p, q: 0.5 * p * p + 0.5 * w2 * q * q,
        dVdq=lambda q: w2 * q,
        params={"harmonic_omega": omega},
        name=f"harmonic(omega={omega:g})",
    )


def double_well_action(a: float = 1.0, b: float = 1.0) -> HamiltonianModel:
    """Action landscape E(P) = a P^4/4 - b P^2/2.

    For a, b > 0 this has o-points at P = ±sqrt(b/a) and an x-point at
    P = 0 — the canonical two-basin landscape.
    """
    if a <= 0 or b <= 0:
        raise DomainError(f"double-well coefficients must be positive, got a={a}, b={b}")
    span = math.sqrt(b / a)
    return HamiltonianModel(
        kind=ModelKind.DOUBLE_WELL_ACTION,
        energy=lambda p, q=0.0: 0.25 * a * p**4 - 0.5 * b * p * p,
        dEdP=lambda P: a * P**3 - b * P,
        params={"a": a, "b": b, "domain": (-2.0 * span, 2.0 * span), "omega_0": 1.0, "J_0": 1.0},
        action_level=True,
        name=f"double-well(a={a:g}, b={b:g})",
    )


def quartic_action(c: float = 1.0) -> HamiltonianModel:
    """Action landscape E(P) = c P^4 / 4 (single o-point at P = 0)."""
    if c <= 0:
        raise DomainError(f"quartic coefficient must be positive, got {c}")
    return HamiltonianModel(
        kind=ModelKind.QUARTIC_ACTION,
        energy=lambda p, q=0.0: 0.25 * c * p**4,
        dEdP=lambda P: c * P**3,
        params={"c": c, "domain": (-2.0, 2.0), "omega_0": 1.0, "J_0": 1.0},
        action_level=True,
        name=f"quartic(c={c:g})",
    )


def custom_action(
    energy: Callable[[float], float],
    dEdP: Callable[[float], float] | None = None,
    params: dict | None = None,
    name: str = "custom-action",
) -> HamiltonianModel:
    """Wrap a user-supplied landscape E(P) as an action-level model.

    When ``dEdP`` is omitted it is built by centered differences; when it is
    supplied, :func:`find_equilibria` cross-checks it against finite
    differences before trusting it.
    """
    if dEdP is None:
        def dEdP(P, _e=energy):
            h = 1e-6 * max(1.0, abs(P))
            return (_e(P + h) - _e(P - h)) / (2.0 * h)

    return HamiltonianModel(
        kind=ModelKind.CUSTOM,
        energy=lambda p, q=0.0: energy(p),
        dEdP=dEdP,
        params=dict(params or {}),
        action_level=True,
        name=name,
    )


# ---------------------------------------------------------------------------
# Trajectory integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Integrator output: n+1 samples stored as flat arrays.

    Supports the sequence protocol (``traj[i]`` yields a
    :class:`PhaseState`) so callers can treat it as a list of states.
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i) -> "PhaseState":
        if isinstance(i, slice):
            return [PhaseState(float(self.q[j]), float(self.p[j]), float(self.t[j]))
                    for j in range(*i.indices(len(self)))]
        return PhaseState(float(self.q[i]), float(self.p[i]), float(self.t[i]))

    def __iter__(self) -> Iterator["PhaseState"]:
        for i in range(len(self)):
            yield self[i]

    def energies(self, model: HamiltonianModel) -> np.ndarray:
        return np.asarray(model.energy(self.p, self.q), dtype=float)


def integrate_trajectory(
    model: HamiltonianModel,
    start: PhaseState,
    dt: float,
    n_steps: int,
    force: Callable[[float, float, float], float] | None = None,
) -> Trajectory:
    """Integrate ``n_steps`` of size ``dt`` from ``start``; returns n+1 states.

    ``force(t, q, p)`` is an optional external generalized force added to
    dp/dt.  Coordinate models evolve under ``q' = p, p' = -V'(q) + F``;
    action-level models under ``Q' = omega(P), P' = F``.  The splitting is
    kick-drift-kick, so runs with purely state-independent forces retrace
    exactly when re-integrated with ``dt -> -dt``.
    """
    if not math.isfinite(dt) or dt == 0.0:
        raise DomainError(f"step size must be finite and nonzero, got {dt}")
    if n_steps < 0:
        raise DomainError(f"step count must be non-negative, got {n_steps}")

    q = np.empty(n_steps + 1)
    p = np.empty(n_steps + 1)
    t = start.t + dt * np.arange(n_steps + 1)
    q[0], p[0] = start.q, start.p

    if model.action_level:
        if model.dEdP is None:
            raise UnsupportedModelError("action-level model lacks dEdP")
        rate = model.dEdP
        grad = None
    else:
        if model.dVdq is None:
            raise UnsupportedModelError("coordinate model lacks dVdq")
        grad = model.dVdq
        rate = None

    qi, pi = float(start.q), float(start.p)
    ti = float(start.t)
    for i in range(n_steps):
        try:
            if grad is not None:
                a0 = -grad(qi) + (force(ti, qi, pi) if force else 0.0)
                p_half = pi + 0.5 * dt * a0
                qi = qi + dt * p_half
                a1 = -grad(qi) + (force(ti + dt, qi, p_half) if force else 0.0)
                pi = p_half + 0.5 * dt * a1
            else:
                f0 = force(ti, qi, pi) if force else 0.0
                p_half = pi + 0.5 * dt * f0
                qi = qi + dt * rate(p_half)
                f1 = force(ti + dt, qi, p_half) if force else 0.0
                pi = p_half + 0.5 * dt * f1
        except OverflowError:
            # Python-float arithmetic overflows before inf shows up.
            raise IntegrationBlowupError(step=i + 1, t=start.t + (i + 1) * dt) from None
        ti = start.t + (i + 1) * dt
        if not (math.isfinite(qi) and math.isfinite(pi)):
            raise IntegrationBlowupError(step=i + 1, t=ti)
        q[i + 1], p[i + 1] = qi, pi

    return Trajectory(t=t, q=q, p=p)


def trajectory_to_csv(traj: Trajectory, model: HamiltonianModel, path_or_file) -> None:
    """Write a trajectory as CSV with columns ``t,q,p,E``."""
    e = traj.energies(model)
    buf = io.StringIO()
    buf.write("t,q,p,E\n")
    for i in range(len(traj)):
        buf.write(
            f"{float(traj.t[i])!r},{float(traj.q[i])!r},"
            f"{float(traj.p[i])!r},{float(e[i])!r}\n"
        )
    data = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(data)


# ---------------------------------------------------------------------------
# Pendulum action/angle maps
#
# With k^2 = (1+E)/2 and the substitution sin(q/2) = k sin(phi), libration
# motion reduces to d(phi)/dt = sqrt(1 - k^2 sin^2 phi): the action is
#   P(E) = (8 k^2 / pi) * Int_0^{pi/2} cos^2(phi) / sqrt(1 - k^2 sin^2 phi) dphi
# and the quarter-period integrand is 1/sqrt(1 - k^2 sin^2 phi).  Both are
# evaluated by adaptive quadrature and cached per energy.
# ---------------------------------------------------------------------------


def _pendulum_k2(E: float) -> float:
    return 0.5 * (1.0 + E)


_action_cache: dict[float, float] = {}
_quarter_period_cache: dict[float, float] = {}


def _check_libration(E: float) -> None:
    if E >= 1.0 - _SEPARATRIX_TOL:
        raise DomainError(
            f"state energy {E:.12g} is at or beyond the separatrix; "
            "the angle map is only defined for libration (E < 1)"
        )
    if E <= -1.0:
        # E == -1 is the fixed point at the bottom; no oscillation to map.
        raise DomainError(f"state energy {E:.12g} has no oscillation (E <= -1)")


def _pendulum_action(E: float) -> float:
    P = _action_cache.get(E)
    if P is None:
        k2 = _pendulum_k2(E)
        val, _ = quad(
            lambda ph: math.cos(ph) ** 2 / math.sqrt(1.0 - k2 * math.sin(ph) ** 2),
            0.0,
            0.5 * math.pi,
            epsabs=1e-13,
            epsrel=1e-13,
            limit=200,
        )
        P = 8.0 * k2 / math.pi * val
        _action_cache[E] = P
    return P


def _pendulum_quarter_period(E: float) -> float:
    T4 = _quarter_period_cache.get(E)
    if T4 is None:
        k2 = _pendulum_k2(E)
        T4, _ = quad(
            lambda ph: 1.0 / math.sqrt(1.0 - k2 * math.sin(ph) ** 2),
            0.0,
            0.5 * math.pi,
            epsabs=1e-13,
            epsrel=1e-13,
            limit=200,
        )
        _quarter_period_cache[E] = T4
    return T4


def _pendulum_time_to_max(E: float, phi: float) -> float:
    """Time for the phase to run from phi up to pi/2 (i.e. to the q-maximum)."""
    k2 = _pendulum_k2(E)
    val, _ = quad(
        lambda ph: 1.0 / math.sqrt(1.0 - k2 * math.sin(ph) ** 2),
        phi,
        0.5 * math.pi,
        epsabs=1e-13,
        epsrel=1e-13,
        limit=200,
    )
    return val


def _wrap_angle(q: float) -> float:
    """Reduce to the principal interval (-pi, pi]."""
    q = math.fmod(q, TWO_PI)
    if q <= -math.pi:
        q += TWO_PI
    elif q > math.pi:
        q -= TWO_PI
    return q


def oscillation_period(model: HamiltonianModel, E: float) -> float:
    """Oscillation period at energy E (pendulum or harmonic)."""
    w = model.params.get("harmonic_omega")
    if w is not None:
        return TWO_PI / w
    if model.kind is ModelKind.PENDULUM:
        _check_libration(E)
        return 4.0 * _pendulum_quarter_period(E)
    raise UnsupportedModelError(f"no period map for model {model.name!r}")


def action_angle(model: HamiltonianModel, state: PhaseState) -> tuple[float, float]:
    """Map a state to its action/angle pair ``(P, Q)``.

    The angle convention: Q is the phase measured so that Q = 0 at the
    coordinate maximum and Q = pi/2 a quarter period earlier (for the
    harmonic oscillator this is atan2(p, q·omega_ratio)).  Q lies in
    [0, 2*pi).  Pendulum states must be librating; rotation or separatrix
    states raise :class:`DomainError`.
    """
    if model.action_level:
        # Identity chart: the state already is (Q, P).
        return float(state.p), float(state.q) % TWO_PI

    w = model.params.get("harmonic_omega")
    if w is not None:
        E = model.energy(state.p, state.q)
        P = E / w
        if P <= 0.0:
            raise DomainError("zero-amplitude state has no angle")
        Q = math.atan2(state.p / math.sqrt(2.0 * P * w), state.q * math.sqrt(w / (2.0 * P)))
        return P, Q % TWO_PI

    if model.kind is not ModelKind.PENDULUM:
        raise UnsupportedModelError(
            f"action/angle map is not defined for model {model.name!r}"
        )

    q = _wrap_angle(state.q)
    E = float(model.energy(state.p, q))
    _check_libration(E)
    k2 = _pendulum_k2(E)
    k = math.sqrt(k2)
    P = _pendulum_action(E)
    T = 4.0 * _pendulum_quarter_period(E)
    omega = TWO_PI / T

    s = math.sin(0.5 * q) / k
    s = min(1.0, max(-1.0, s))  # guard roundoff at the turning points
    phi = math.asin(s)
    tau = _pendulum_time_to_max(E, phi)  # time until next q-maximum if p >= 0
    if state.p >= 0.0:
        Q = omega * tau
    else:
        Q = TWO_PI - omega * tau
    return P, Q % TWO_PI


def action_angle_inverse(
    model: HamiltonianModel, P: float, Q: float, t: float = 0.0
) -> PhaseState:
    """Inverse chart: reconstruct the coordinate state from ``(P, Q)``."""
    if model.action_level:
        return PhaseState(q=Q % TWO_PI, p=P, t=t)

    w = model.params.get("harmonic_omega")
    if w is not None:
        if P <= 0.0:
            raise DomainError(f"action must be positive, got {P}")
        return PhaseState(
            q=math.sqrt(2.0 * P / w) * math.cos(Q),
            p=math.sqrt(2.0 * P * w) * math.sin(Q),
            t=t,
        )

    if model.kind is not ModelKind.PENDULUM:
        raise UnsupportedModelError(
            f"action/angle map is not defined for model {model.name!r}"
        )

    if P <= 0.0:
        raise DomainError(f"action must be positive, got {P}")
    E_hi = 1.0 - _SEPARATRIX_TOL
    P_max = _pendulum_action(E_hi)
    if P >= P_max:
        raise DomainError(
            f"action {P:.9g} exceeds the libration maximum {P_max:.9g}"
        )
    E = brentq(lambda e: _pendulum_action(e) - P, -1.0 + 1e-14, E_hi, xtol=1e-15)
    k = math.sqrt(_pendulum_k2(E))
    T = 4.0 * _pendulum_quarter_period(E)
    omega = TWO_PI / T

    s = (Q % TWO_PI) / omega  # time until the next q-maximum
    if s <= 0.5 * T:
        target, sign = s, 1.0
    else:
        target, sign = T - s, -1.0
    # tau(phi) decreases monotonically from T/2 at phi=-pi/2 to 0 at phi=pi/2.
    phi = brentq(
        lambda ph: _pendulum_time_to_max(E, ph) - target,
        -0.5 * math.pi,
        0.5 * math.pi,
        xtol=1e-14,
    )
    q = 2.0 * math.asin(k * math.sin(phi))
    p2 = 2.0 * (E + math.cos(q))
    p = sign * math.sqrt(max(0.0, p2))
    return PhaseState(q=q, p=p, t=t)


# ---------------------------------------------------------------------------
# Landscape equilibria
# ---------------------------------------------------------------------------


def _verify_dEdP(model: HamiltonianModel, lo: float, hi: float) -> None:
    """Cross-check a user-supplied dEdP against finite differences of E."""
    scale = 0.0
    probes = np.linspace(lo, hi, 9)
    analytic = np.array([model.dEdP(float(x)) for x in probes])
    scale = float(np.max(np.abs(analytic)))
    if scale == 0.0:
        scale = 1.0
    for x, a in zip(probes, analytic):
        h = 1e-5 * max(1.0, abs(x))
        fd = (model.energy(x + h, 0.0) - model.energy(x - h, 0.0)) / (2.0 * h)
        if abs(fd - a) > 1e-6 * max(scale, abs(fd)):
            raise DomainError(
                f"dEdP disagrees with finite differences of the landscape at "
                f"P={x:.6g}: {a:.9g} vs {fd:.9g}"
            )


def find_equilibria(
    model: HamiltonianModel,
    domain: tuple[float, float],
    n_seeds: int = 200,
) -> list[Equilibrium]:
    """Locate zeros of ``omega(P) = dE/dP`` on ``domain`` and classify them.

    The domain is treated as half-open ``[lo, hi)`` so that periodic
    landscapes sampled over one full period do not report the same
    equilibrium twice.  Roots are bracketed by a sign scan over ``n_seeds``
    subintervals, polished with Brent's method, merged within 1e-7, and
    classified by the sign of omega'(P*): positive slope means a landscape
    minimum (stable o-point).
    """
    if model.dEdP is None or not model.action_level:
        raise UnsupportedModelError(
            "find_equilibria needs an action-level model exposing dEdP"
        )
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError(f"domain must be finite, got {domain}")
    if lo >= hi:
        return []
    if n_seeds < 2:
        raise DomainError(f"n_seeds must be at least 2, got {n_seeds}")

    if model.kind is ModelKind.CUSTOM:
        _verify_dEdP(model, lo, hi)

    grid = np.linspace(lo, hi, n_seeds + 1)
    w = np.array([model.dEdP(float(x)) for x in grid])
    scale = float(np.max(np.abs(w)))
    if scale == 0.0:
        return []  # flat landscape: no isolated equilibria

    roots: list[float] = []
    for i in range(n_seeds):  # half-open: an exact zero at hi is skipped
        if abs(w[i]) <= 1e-12 * scale:
            roots.append(float(grid[i]))
    for i in range(n_seeds):
        if w[i] * w[i + 1] < 0.0:
            roots.append(
                float(brentq(model.dEdP, grid[i], grid[i + 1], xtol=1e-14, maxiter=200))
            )

    roots.sort()
    merged: list[float] = []
    for r in roots:
        if merged and abs(r - merged[-1]) <= 1e-7:
            continue
        merged.append(r)

    out: list[Equilibrium] = []
    span = hi - lo
    for r in merged:
        h = max(1e-7, 1e-7 * abs(r), 1e-9 * span)
        slope = (model.dEdP(r + h) - model.dEdP(r - h)) / (2.0 * h)
        stability = Stability.STABLE if slope > 0.0 else Stability.UNSTABLE
        out.append(
            Equilibrium(P_star=r, E_star=float(model.energy(r, 0.0)), stability=stability)
        )
    return out
