"""Monetary valuation of a closed production loop.

A currency firm issues its own settlement currency into a tree of
production levels.  Level i re-spends a fraction (1 - 1/m) of what level
i-1 received, so total activity is R = m * R_0, and weighting each level's
savings by the value ratio V_0/V_i gives the effective savings share
``Sbar_e``.  Currency demand is the product

    M = m_e * S_0 * R_0,      m_e = m * Sbar_e,   S_e = S_0 * Sbar_e,

and all algebraically equivalent factorizations (m_e*S_0*R_0, m*S_e*R_0,
m*Sbar_e*S_0*R_0) are evaluated through one exact rational product so they
agree bit for bit.

An operator choosing activity Q trades revenue R(Q) (concave) against
expenses E(Q) (convex).  Each unit of revenue carries m_e*S_0 of currency
demand, so the money-supply gain is

    dM(Q) = (m_e*S_0 + T_I) * R(Q) - T_I * E(Q)

with T_I the investment recovery horizon.  Maximizing dM shifts the
operating point off the revenue maximum to where R'(Q) = E'(Q) / (rho + 1),
rho = m_e*S_0/T_I.  :func:`kuhn_tucker_optimize` solves the constrained
problem "maximize R(Q) subject to dM(Q) >= mu" for any mu up to the
attainable maximum.

Classical discounted-cashflow machinery (:func:`npv`) and the side-by-side
comparison of the money-supply constraint against the NPV constraint
(:func:`constraint_compare`) complete the module.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import BracketingError, DomainError

__all__ = [
    "EconomyParams",
    "MU_MAX",
    "OperatingPoint",
    "Verdict",
    "level_sums",
    "currency_demand",
    "currency_price",
    "investment_decision",
    "Curve",
    "kuhn_tucker_optimize",
    "PiecewiseConstant",
    "CashflowProfile",
    "NPVResult",
    "npv",
    "ConstraintReport",
    "constraint_compare",
]


def _exact_product(*factors: float) -> float:
    """Multiply floats exactly (as rationals) and round once at the end.

    Guarantees that every grouping of the same factors yields the identical
    IEEE double, which is what makes the factorization identities below
    hold bit for bit.
    """
    acc = Fraction(1)
    for f in factors:
        acc *= Fraction(f)
    return float(acc)


@dataclass(frozen=True)
class EconomyParams:
    """Structural parameters of the production loop.

    ``m`` is the activity multiplier, ``S_0`` the base savings time,
    ``Sbar_e`` the value-weighted savings share in (0, 1], ``R_0`` the
    first-level revenue rate, ``N_ec`` the currency float (optional until a
    price is needed) and ``T_I`` the investment recovery horizon.  The
    effective quantities m_e and S_e are always derived, never stored.
    """

    m: float
    S_0: float
    Sbar_e: float = 1.0
    R_0: float = 1.0
    N_ec: float | None = None
    T_I: float = 1.0

    def __post_init__(self):
        for name in ("m", "S_0", "R_0", "T_I"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be positive and finite, got {v}")
        if not (0.0 < self.Sbar_e <= 1.0):
            raise DomainError(f"Sbar_e must lie in (0, 1], got {self.Sbar_e}")
        if self.N_ec is not None and not (math.isfinite(self.N_ec) and self.N_ec > 0.0):
            raise DomainError(f"N_ec must be positive when given, got {self.N_ec}")

    @property
    def m_e(self) -> float:
        """Effective multiplier m * Sbar_e."""
        return _exact_product(self.m, self.Sbar_e)

    @property
    def S_e(self) -> float:
        """Effective savings time S_0 * Sbar_e."""
        return _exact_product(self.S_0, self.Sbar_e)

    @property
    def rho(self) -> float:
        """Money-demand to recovery-time ratio m_e*S_0/T_I."""
        return self.m_e * self.S_0 / self.T_I


def level_sums(
    m: float,
    R_0: float,
    value_ratio: Callable[[int], float] | Sequence[float],
    rel_tol: float = 1e-12,
) -> tuple[float, float]:
    """Sum the production-level series.

    Level i has revenue ``R_i = R_0 * (1 - 1/m)**i``; ``value_ratio(i)``
    (or a sequence) gives V_0/V_i in (0, 1].  Returns ``(R, Sbar_e)``
    where R is the total activity (= m*R_0) and Sbar_e the value-weighted
    share sum(R_i * V_0/V_i) / R.  The series is truncated once the
    relative term falls below ``rel_tol``.
    """
    if m <= 1.0 or not math.isfinite(m):
        raise DomainError(f"multiplier must exceed 1, got {m}")
    if R_0 <= 0.0:
        raise DomainError(f"R_0 must be positive, got {R_0}")
    if callable(value_ratio):
        ratio = value_ratio
    else:
        seq = list(value_ratio)

        def ratio(i: int) -> float:
            return seq[i] if i < len(seq) else seq[-1]

    x = 1.0 - 1.0 / m
    total = 0.0
    weighted = 0.0
    term = R_0
    i = 0
    while term > rel_tol * R_0:
        v = float(ratio(i))
        if not (0.0 < v <= 1.0):
            raise DomainError(f"value ratio V_0/V_{i} = {v} must lie in (0, 1]")
        total += term
        weighted += term * v
        term *= x
        i += 1
        if i > 10_000_000:
            raise DomainError("value series failed to truncate")
    return total, weighted / total


class Factorization(enum.Enum):
    EFFECTIVE_MULTIPLIER = "effective-multiplier"  # (m*Sbar_e) * S_0 * R_0
    EFFECTIVE_SAVINGS = "effective-savings"  # m * (S_0*Sbar_e) * R_0
    EXPLICIT = "explicit"  # m * Sbar_e * S_0 * R_0


def currency_demand(
    params: EconomyParams,
    factorization: Factorization = Factorization.EFFECTIVE_MULTIPLIER,
) -> float:
    """Steady-state currency demand M = m_e * S_0 * R_0.

    All three factorizations are the same exact rational product, so the
    returned double is bit-identical whichever view is requested.
    """
    if factorization is Factorization.EFFECTIVE_MULTIPLIER:
        return _exact_product(params.m, params.Sbar_e, params.S_0, params.R_0)
    if factorization is Factorization.EFFECTIVE_SAVINGS:
        return _exact_product(params.m, params.S_0, params.Sbar_e, params.R_0)
    if factorization is Factorization.EXPLICIT:
        return _exact_product(params.m, params.Sbar_e, params.S_0, params.R_0)
    raise DomainError(f"unknown factorization {factorization!r}")


def currency_price(params: EconomyParams) -> float:
    """Unit price of the currency, P_ec = M / N_ec."""
    if params.N_ec is None or params.N_ec <= 0.0:
        raise DomainError("currency price needs a positive float size N_ec")
    return currency_demand(params) / params.N_ec


class Verdict(enum.Enum):
    INVEST = "Invest"
    REJECT = "Reject"


def investment_decision(
    params: EconomyParams, delta_R0: float, delta_I: float
) -> tuple[float, Verdict]:
    """Money-supply test of an investment: dM = m_e*S_0*dR_0 - dI.

    Non-negative dM clears the bar (``Invest``, break-even included);
    otherwise ``Reject``.
    """
    if not math.isfinite(delta_R0) or not math.isfinite(delta_I):
        raise DomainError("investment deltas must be finite")
    dM = params.m_e * params.S_0 * delta_R0 - delta_I
    return dM, Verdict.INVEST if dM >= 0.0 else Verdict.REJECT


# ---------------------------------------------------------------------------
# Curves and the constrained operating point
# ---------------------------------------------------------------------------


class Curve:
    """Differentiable curve on an interval, built from a callable or
    samples via a not-a-knot cubic spline (exact through cubics)."""

    def __init__(self, spline: CubicSpline, lo: float, hi: float):
        self._s = spline
        self._d1 = spline.derivative()
        self._d2 = spline.derivative(2)
        self.lo = lo
        self.hi = hi

    @classmethod
    def from_callable(
        cls, f: Callable[[float], float], lo: float, hi: float, n: int = 513
    ) -> "Curve":
        if hi <= lo:
            raise DomainError(f"curve interval [{lo}, {hi}] is empty")
        x = np.linspace(lo, hi, n)
        y = np.array([float(f(v)) for v in x])
        if not np.all(np.isfinite(y)):
            raise DomainError("curve values must be finite on the interval")
        return cls(CubicSpline(x, y, bc_type="not-a-knot"), lo, hi)

    @classmethod
    def from_samples(cls, x: Sequence[float], y: Sequence[float]) -> "Curve":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(x) < 4:
            raise DomainError("need at least 4 samples for a cubic curve")
        return cls(CubicSpline(x, y, bc_type="not-a-knot"), float(x[0]), float(x[-1]))

    def __call__(self, q):
        return self._s(q)

    def derivative(self, q):
        return self._d1(q)

    def second(self, q):
        return self._d2(q)

    def check_shape(self, concave: bool, n: int = 512, label: str = "curve") -> None:
        """Verify concavity/convexity by sampled second differences.

        The tolerance is floored at the curve's own magnitude so that the
        interpolation noise of an exactly straight segment (second
        derivative ~1e-13 from rounding) is not read as curvature.
        """
        x = np.linspace(self.lo, self.hi, n)
        d2 = self._d2(x)
        floor = max(float(np.max(np.abs(self._s(x)))), 1.0) / (self.hi - self.lo) ** 2
        scale = max(float(np.max(np.abs(d2))), floor)
        bad = d2 > 1e-8 * scale if concave else d2 < -1e-8 * scale
        if np.any(bad):
            kind = "concave" if concave else "convex"
            where = float(x[np.argmax(bad)])
            raise DomainError(f"{label} is not {kind} (violated near Q={where:.6g})")


@dataclass(frozen=True)
class OperatingPoint:
    """Solution of the constrained activity problem.

    ``mu`` is the money-supply level actually binding at the optimum;
    ``ratio`` is rho = m_e*S_0/T_I and ``slope_factor`` the induced
    first-order condition factor 1/(rho+1) with R' = slope_factor * E' at
    the unconstrained-money optimum.  ``gap_law`` reports the structural
    constraint gap 1/(rho+1) alongside the measured mu_max and mu_min.
    """

    Q_star: float
    lambda_star: float
    mu: float
    R_prime: float
    E_prime: float
    ratio: float
    slope_factor: float
    gap_law: float
    mu_max: float
    mu_min: float | None

    def to_dict(self) -> dict:
        return {
            "Q_star": self.Q_star,
            "lambda_star": self.lambda_star,
            "mu": self.mu,
            "R_prime": self.R_prime,
            "E_prime": self.E_prime,
            "ratio": self.ratio,
            "slope_factor": self.slope_factor,
            "gap_law": self.gap_law,
            "mu_max": self.mu_max,
            "mu_min": self.mu_min,
        }


MU_MAX = "max"  # sentinel: optimize at the largest attainable money-supply level


def _as_curve(f, lo: float, hi: float) -> Curve:
    return f if isinstance(f, Curve) else Curve.from_callable(f, lo, hi)


def _bracket_root(fn: Callable[[float], float], lo: float, hi: float, n: int = 512):
    """First sign-change bracket of fn on [lo, hi], or None."""
    xs = np.linspace(lo, hi, n)
    prev_x, prev_v = xs[0], fn(float(xs[0]))
    for x in xs[1:]:
        v = fn(float(x))
        if prev_v == 0.0:
            return float(prev_x), float(prev_x)
        if prev_v * v < 0.0:
            return float(prev_x), float(x)
        prev_x, prev_v = x, v
    if prev_v == 0.0:
        return float(prev_x), float(prev_x)
    return None


def kuhn_tucker_optimize(
    R,
    E,
    params: EconomyParams,
    mu: float | str = MU_MAX,
    interval: tuple[float, float] = (0.0, 10.0),
) -> OperatingPoint:
    """Maximize revenue subject to the money-supply floor dM(Q) >= mu.

    ``R`` must be concave and ``E`` convex on ``interval`` (checked).  With
    ``mu=MU_MAX`` the floor is tightened to the attainable maximum and the
    operating point sits where dM'(Q) = 0, i.e. R' = E'/(rho+1); the
    multiplier diverges there and is reported as ``inf``.  For numeric mu
    between mu_min (the money level at the revenue maximum) and mu_max, the
    optimum is the upper edge of the feasible set {dM >= mu} and

        lambda* = -m_e*S_0*R'(Q*) / dM'(Q*)  > 0.

    For mu <= mu_min the floor is slack: the revenue maximum itself is
    optimal and lambda* = 0.
    """
    lo, hi = float(interval[0]), float(interval[1])
    Rc = _as_curve(R, lo, hi)
    Ec = _as_curve(E, lo, hi)
    Rc.check_shape(concave=True, label="revenue curve")
    Ec.check_shape(concave=False, label="expense curve")

    mS = params.m_e * params.S_0
    T_I = params.T_I
    rho = params.rho
    slope_factor = 1.0 / (rho + 1.0)

    def dM(q):
        return (mS + T_I) * float(Rc(q)) - T_I * float(Ec(q))

    def dM_prime(q):
        return (mS + T_I) * float(Rc.derivative(q)) - T_I * float(Ec.derivative(q))

    br = _bracket_root(dM_prime, lo, hi)
    if br is None:
        raise BracketingError(
            f"dM'(Q) has no zero on [{lo:g}, {hi:g}]; the money-supply "
            "optimum is not interior to the interval"
        )
    q_m = br[0] if br[0] == br[1] else float(brentq(dM_prime, br[0], br[1], xtol=1e-12))
    mu_max = dM(q_m)

    br_r = _bracket_root(lambda q: float(Rc.derivative(q)), lo, hi)
    if br_r is None:
        q_r = None
        mu_min = None
    else:
        q_r = br_r[0] if br_r[0] == br_r[1] else float(
            brentq(lambda q: float(Rc.derivative(q)), br_r[0], br_r[1], xtol=1e-12)
        )
        mu_min = dM(q_r)

    gap_law = slope_factor

    def finish(q_star: float, lam: float, mu_eff: float) -> OperatingPoint:
        return OperatingPoint(
            Q_star=q_star,
            lambda_star=lam,
            mu=mu_eff,
            R_prime=float(Rc.derivative(q_star)),
            E_prime=float(Ec.derivative(q_star)),
            ratio=rho,
            slope_factor=slope_factor,
            gap_law=gap_law,
            mu_max=mu_max,
            mu_min=mu_min,
        )

    if isinstance(mu, str):
        if mu != MU_MAX:
            raise DomainError(f"mu must be a number or {MU_MAX!r}, got {mu!r}")
        return finish(q_m, math.inf, mu_max)

    mu = float(mu)
    if mu > mu_max:
        raise DomainError(
            f"money-supply floor mu={mu:g} exceeds the attainable maximum "
            f"{mu_max:g}"
        )
    if mu_min is not None and mu <= mu_min:
        return finish(q_r, 0.0, mu_min)
    if q_r is None:
        raise DomainError(
            "revenue has no interior maximum; cannot trade revenue against "
            "a slack money floor"
        )
    # The feasible set's upper edge lies between the money optimum and the
    # revenue optimum; dM is strictly decreasing there.
    a, b = (q_m, q_r) if q_m < q_r else (q_r, q_m)
    q_star = float(brentq(lambda q: dM(q) - mu, a, b, xtol=1e-12))
    lam = -mS * float(Rc.derivative(q_star)) / dM_prime(q_star)
    return finish(q_star, lam, mu)


# ---------------------------------------------------------------------------
# Discounted cashflows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-open piecewise-constant rate: value ``values[k]`` on
    [breaks[k], breaks[k+1]); the final breakpoint may be ``inf``."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.values) + 1:
            raise DomainError("need exactly one more breakpoint than values")
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            if not b > a:
                raise DomainError(f"breakpoints must increase, got {self.breaks}")
        if any(not math.isfinite(v) for v in self.values):
            raise DomainError("rates must be finite")

    @classmethod
    def constant(cls, value: float, t0: float = 0.0, t1: float = math.inf):
        return cls(breaks=(t0, t1), values=(value,))

    def __call__(self, t: float) -> float:
        if t < self.breaks[0] or t >= self.breaks[-1]:
            return 0.0
        for a, b, v in zip(self.breaks[:-1], self.breaks[1:], self.values):
            if a <= t < b:
                return v
        return 0.0

    def integral(self, t0: float, t1: float, nu: float = 0.0) -> float:
        """Exact integral of ``rate(t) * exp(-nu t)`` over [t0, t1]."""
        if t1 < t0:
            raise DomainError(f"reversed integration bounds [{t0}, {t1}]")
        total = 0.0
        for a, b, v in zip(self.breaks[:-1], self.breaks[1:], self.values):
            aa, bb = max(a, t0), min(b, t1)
            if bb <= aa or v == 0.0:
                continue
            if nu == 0.0:
                if math.isinf(bb):
                    raise DomainError(
                        "undiscounted integral of a non-zero rate over an "
                        "infinite horizon diverges"
                    )
                total += v * (bb - aa)
            else:
                upper = 0.0 if math.isinf(bb) else math.exp(-nu * bb)
                total += v * (math.exp(-nu * aa) - upper) / nu
        return total


@dataclass(frozen=True)
class CashflowProfile:
    """Rates R(t), E(t) over the operating horizon [0, T_0] and the
    investment rate I(t) over [0, T_I], with continuous discount rate nu."""

    R: PiecewiseConstant
    E: PiecewiseConstant
    I: PiecewiseConstant
    nu: float
    T_0: float
    T_I: float

    def __post_init__(self):
        if self.nu < 0.0:
            raise DomainError(f"discount rate must be non-negative, got {self.nu}")
        if self.T_0 <= 0.0:
            raise DomainError(f"operating horizon must be positive, got {self.T_0}")
        if self.T_I <= 0.0:
            raise DomainError(f"investment horizon must be positive, got {self.T_I}")

    @classmethod
    def simple(
        cls,
        margin_rate: float,
        total_investment: float,
        nu: float,
        T_0: float = math.inf,
        T_I: float = 1.0,
    ) -> "CashflowProfile":
        """Constant net margin ``R - E = margin_rate`` on [0, T_0] and the
        total investment spread evenly over [0, T_I]."""
        return cls(
            R=PiecewiseConstant.constant(margin_rate, 0.0, T_0),
            E=PiecewiseConstant.constant(0.0, 0.0, T_0),
            I=PiecewiseConstant.constant(total_investment / T_I, 0.0, T_I),
            nu=nu,
            T_0=T_0,
            T_I=T_I,
        )


@dataclass(frozen=True)
class NPVResult:
    npv: float
    dcf: float
    investment: float


def npv(profile: CashflowProfile) -> NPVResult:
    """Net present value and the gross discounted cashflow.

        DCF = Int_0^T0 exp(-nu t) (R - E) dt,    NPV = DCF - Int_0^TI I dt.

    The investment is near-term and enters undiscounted.  A zero discount
    rate over an infinite horizon with non-zero margin raises
    :class:`DomainError` (divergent integral).
    """
    dcf = profile.R.integral(0.0, profile.T_0, profile.nu) - profile.E.integral(
        0.0, profile.T_0, profile.nu
    )
    inv = profile.I.integral(0.0, profile.T_I, 0.0)
    return NPVResult(npv=dcf - inv, dcf=dcf, investment=inv)


@dataclass(frozen=True)
class ConstraintReport:
    """Side-by-side comparison of the money-supply and NPV investment
    constraints for one cashflow profile."""

    R_total: float
    E_total: float
    investment: float
    margin: float
    delta_M_constraint_value: float  # (m_e*S_0/T_I)*R_T - I
    npv_constraint_value: float  # DCF - I
    R_money: float  # (m_e*S_0/T_I) * R_T
    dcf: float
    dcf_stylized: float  # three-factor approximation of DCF
    headroom_money: float  # R_money / I
    headroom_npv: float  # DCF / I
    headroom_ratio: float  # R_money / DCF

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self, path_or_file=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path_or_file is not None:
            if hasattr(path_or_file, "write"):
                path_or_file.write(text)
            else:
                with open(path_or_file, "w") as fh:
                    fh.write(text)
        return text


def constraint_compare(profile: CashflowProfile, params: EconomyParams) -> ConstraintReport:
    """Evaluate both investment constraints on the same profile.

    The money-supply constraint asks ``(m_e*S_0/T_I) * R_T >= I`` where R_T
    is undiscounted total revenue; the NPV constraint asks ``DCF >= I``.
    The report also evaluates the stylized three-factor form

        DCF ~ (T_I/(m_e*S_0)) * margin * (exp(-nu*T_I)/(nu*T_0)) * R_money,

    exact only in the limit nu*T_I -> 0 with a long flat horizon; it is
    reported for comparison, not used in either constraint.
    """
    if math.isinf(profile.T_0):
        raise DomainError("constraint comparison needs a finite operating horizon")
    R_T = profile.R.integral(0.0, profile.T_0, 0.0)
    E_T = profile.E.integral(0.0, profile.T_0, 0.0)
    inv = profile.I.integral(0.0, profile.T_I, 0.0)
    if R_T <= 0.0:
        raise DomainError("total revenue must be positive for the comparison")
    margin = (R_T - E_T) / R_T
    mS = params.m_e * params.S_0
    R_money = (mS / params.T_I) * R_T
    res = npv(profile)
    nu = profile.nu
    if nu <= 0.0:
        raise DomainError("the stylized comparison needs a positive discount rate")
    dcf_stylized = (
        (params.T_I / mS) * margin * (math.exp(-nu * params.T_I) / (nu * profile.T_0)) * R_money
    )
    if inv <= 0.0:
        raise DomainError("total investment must be positive for headroom ratios")
    if res.dcf <= 0.0:
        raise DomainError("discounted cashflow must be positive for headroom ratios")
    return ConstraintReport(
        R_total=R_T,
        E_total=E_T,
        investment=inv,
        margin=margin,
        delta_M_constraint_value=R_money - inv,
        npv_constraint_value=res.npv,
        R_money=R_money,
        dcf=res.dcf,
        dcf_stylized=dcf_stylized,
        headroom_money=R_money / inv,
        headroom_npv=res.dcf / inv,
        headroom_ratio=R_money / res.dcf,
    )
