"""Drift-diffusion dynamics of the action under fast uncorrelated shocks.

When shocks are weak and fast compared to the oscillation, the action P
spreads diffusively while drifting down the local frequency gradient.  The
density f(J, t) obeys the forward equation

    df/dt = d/dJ [ sigma_c * omega(J) * f ] + kappa * d^2 f / dJ^2,

with omega(J) = dH/dJ.  The coefficients come from a single dimensionless
ratio r = T / (J_0 * omega_0):

    nu_c = sqrt(r) * omega_0,   sigma_c = sqrt(r) * J_0,   kappa = nu_c * sigma_c^2.

Because nu_c * sigma_c = T identically, exp(-H(J)/T) is the exact zero-flux
stationary state of the equation above.

Two independent routes are provided: an explicit upwind finite-volume solver
(:func:`fp_solve`) and a direct Euler-Maruyama ensemble of the matching SDE
(:func:`mc_ensemble`).  Each Monte-Carlo path draws from its own RNG stream
keyed by ``(seed, path_index)`` so results are independent of batching or
path count.
"""

from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import HamiltonianModel, PhaseState, action_angle_inverse, integrate_trajectory, oscillation_period
from .errors import DomainError, NumericalError

__all__ = [
    "AdiabaticityWarning",
    "DiffusionParams",
    "DensityGrid",
    "diffusion_scalings",
    "business_cycle_scalings",
    "fp_solve",
    "mc_ensemble",
    "ForecastMode",
    "ForecastResult",
    "forecast",
    "ks_statistic",
]


class AdiabaticityWarning(UserWarning):
    """The shock temperature is large relative to J_0*omega_0; the local
    diffusive approximation is getting marginal."""


@dataclass(frozen=True)
class DiffusionParams:
    """Coefficient bundle for the action diffusion.

    ``kappa`` must equal ``nu_c * sigma_c**2`` (relative tolerance 1e-12);
    use :func:`diffusion_scalings` to build a consistent set from
    ``(T, omega_0, J_0)``.
    """

    nu_c: float
    sigma_c: float
    kappa: float
    T: float
    omega_0: float
    J_0: float

    def __post_init__(self):
        for name in ("nu_c", "sigma_c", "kappa", "T", "omega_0", "J_0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be positive and finite, got {v}")
        if abs(self.kappa - self.nu_c * self.sigma_c**2) > 1e-12 * self.kappa:
            raise DomainError(
                f"kappa={self.kappa!r} is inconsistent with nu_c*sigma_c^2="
                f"{self.nu_c * self.sigma_c ** 2!r}"
            )


def diffusion_scalings(T: float, omega_0: float, J_0: float) -> DiffusionParams:
    """Derive (nu_c, sigma_c, kappa) from the shock temperature and the
    reference scales.

    Requires ``T <= J_0 * omega_0`` (the diffusive picture breaks beyond
    that) and warns once the ratio exceeds 0.1.
    """
    for name, v in (("T", T), ("omega_0", omega_0), ("J_0", J_0)):
        if not (math.isfinite(v) and v > 0.0):
            raise DomainError(f"{name} must be positive and finite, got {v}")
    r = T / (J_0 * omega_0)
    if r > 1.0:
        raise DomainError(
            f"temperature ratio T/(J_0*omega_0) = {r:.4g} exceeds 1; "
            "the diffusive scaling is not applicable"
        )
    if r > 0.1:
        warnings.warn(
            f"temperature ratio T/(J_0*omega_0) = {r:.4g} > 0.1: "
            "diffusion coefficients are only marginally separated from the "
            "oscillation scale",
            AdiabaticityWarning,
            stacklevel=2,
        )
    root = math.sqrt(r)
    nu_c = root * omega_0
    sigma_c = root * J_0
    return DiffusionParams(
        nu_c=nu_c, sigma_c=sigma_c, kappa=nu_c * sigma_c**2, T=T, omega_0=omega_0, J_0=J_0
    )


def business_cycle_scalings(T_e: float, omega_0: float, J_0: float) -> DiffusionParams:
    """Scalings for slow macro shocks with period comparable to 1/nu.

    The self-consistent closure replaces T by the effective temperature
    ``T_eff = T_e^(1/3) * (omega_0*J_0)^(2/3)``, which gives the damping
    rate ``nu_b = (T_e/(omega_0*J_0))^(1/6) * omega_0``.
    """
    for name, v in (("T_e", T_e), ("omega_0", omega_0), ("J_0", J_0)):
        if not (math.isfinite(v) and v > 0.0):
            raise DomainError(f"{name} must be positive and finite, got {v}")
    scale = omega_0 * J_0
    T_eff = T_e ** (1.0 / 3.0) * scale ** (2.0 / 3.0)
    return diffusion_scalings(T_eff, omega_0, J_0)


# ---------------------------------------------------------------------------
# Density grid
# ---------------------------------------------------------------------------


@dataclass
class DensityGrid:
    """Cell-averaged probability density on a uniform grid over [j_min, j_max].

    ``values[i]`` is the density on cell i; total mass (sum * cell width)
    must be 1 within 1e-8.
    """

    j_min: float
    j_max: float
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.ndim != 1 or len(self.values) < 2:
            raise DomainError("density grid needs at least 2 cells")
        if not self.j_max > self.j_min:
            raise DomainError(f"empty grid interval [{self.j_min}, {self.j_max}]")
        if np.any(self.values < -1e-12 * max(1.0, float(np.max(np.abs(self.values))))):
            raise DomainError("density values must be non-negative")
        m = self.mass()
        if abs(m - 1.0) > 1e-8:
            raise DomainError(f"density mass {m!r} is not 1 within 1e-8")

    @property
    def n_cells(self) -> int:
        return len(self.values)

    @property
    def cell_width(self) -> float:
        return (self.j_max - self.j_min) / self.n_cells

    def centers(self) -> np.ndarray:
        h = self.cell_width
        return self.j_min + h * (np.arange(self.n_cells) + 0.5)

    def mass(self) -> float:
        return float(np.sum(self.values)) * self.cell_width

    def mean(self) -> float:
        return float(np.sum(self.values * self.centers())) * self.cell_width

    def cdf(self) -> np.ndarray:
        """Cumulative mass at the right edge of each cell."""
        return np.cumsum(self.values) * self.cell_width

    @classmethod
    def from_function(
        cls, fn: Callable[[np.ndarray], np.ndarray], j_min: float, j_max: float,
        n_cells: int, t: float = 0.0,
    ) -> "DensityGrid":
        h = (j_max - j_min) / n_cells
        x = j_min + h * (np.arange(n_cells) + 0.5)
        v = np.asarray(fn(x), dtype=float)
        if np.any(v < 0.0) or not np.all(np.isfinite(v)):
            raise DomainError("density function must be finite and non-negative")
        s = float(np.sum(v)) * h
        if s <= 0.0:
            raise DomainError("density function integrates to zero")
        return cls(j_min=j_min, j_max=j_max, values=v / s, t=t)

    @classmethod
    def point_mass(cls, j0: float, j_min: float, j_max: float, n_cells: int,
                   t: float = 0.0) -> "DensityGrid":
        h = (j_max - j_min) / n_cells
        i = int(np.clip((j0 - j_min) / h, 0, n_cells - 1))
        v = np.zeros(n_cells)
        v[i] = 1.0 / h
        return cls(j_min=j_min, j_max=j_max, values=v, t=t)

    def to_csv(self, path_or_file) -> None:
        buf = io.StringIO()
        buf.write("j,f\n")
        for x, v in zip(self.centers(), self.values):
            buf.write(f"{float(x)!r},{float(v)!r}\n")
        data = buf.getvalue()
        if hasattr(path_or_file, "write"):
            path_or_file.write(data)
        else:
            with open(path_or_file, "w") as fh:
                fh.write(data)


def _omega_of(H: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Frequency omega = dH/dJ by centered differences (vectorized)."""
    x = np.asarray(x, dtype=float)
    d = 1e-6 * np.maximum(1.0, np.abs(x))
    return (np.asarray(H(x + d)) - np.asarray(H(x - d))) / (2.0 * d)


# ---------------------------------------------------------------------------
# Finite-volume forward solver
# ---------------------------------------------------------------------------


def fp_solve(
    H: Callable[[np.ndarray], np.ndarray],
    params: DiffusionParams,
    f0: DensityGrid,
    t_end: float,
) -> DensityGrid:
    """Advance the density by ``t_end`` under drift -sigma_c*omega(J) and
    diffusion kappa.

    Explicit finite-volume scheme: upwinded advective flux, centered
    diffusive flux, zero-flux (reflecting) boundaries at both edges, and
    automatic sub-stepping within the explicit stability limit.  Mass is
    conserved to machine precision by construction.
    """
    if t_end < 0.0 or not math.isfinite(t_end):
        raise DomainError(f"t_end must be non-negative, got {t_end}")
    out = DensityGrid(f0.j_min, f0.j_max, f0.values, t=f0.t)
    if t_end == 0.0:
        return out
    h = out.cell_width
    if h > params.sigma_c / 4.0:
        raise DomainError(
            f"cell width {h:.4g} exceeds sigma_c/4 = {params.sigma_c / 4.0:.4g}; "
            "refine the grid to resolve the drift scale"
        )

    centers = out.centers()
    H_c = np.asarray(H(centers), dtype=float)
    if H_c.shape != centers.shape or not np.all(np.isfinite(H_c)):
        raise DomainError("H must map the grid to finite values")
    # omega at interior faces from adjacent cell centers (centered difference
    # of H across the face).
    omega_face = np.diff(H_c) / h
    u = -params.sigma_c * omega_face  # advective velocity at interior faces

    kappa = params.kappa
    u_max = float(np.max(np.abs(u))) if len(u) else 0.0
    denom = 2.0 * kappa / (h * h) + u_max / h
    if denom <= 0.0:
        return DensityGrid(out.j_min, out.j_max, out.values, t=out.t + t_end)
    dt_stable = 0.9 / denom

    f = out.values
    up_pos = u > 0.0
    remaining = t_end
    while remaining > 1e-15 * t_end:
        dt = min(dt_stable, remaining)
        f_left = f[:-1]
        f_right = f[1:]
        adv = u * np.where(up_pos, f_left, f_right)
        dif = -kappa * (f_right - f_left) / h
        flux = adv + dif  # interior faces; boundary fluxes are zero
        f[1:-1] -= dt / h * (flux[1:] - flux[:-1])
        f[0] -= dt / h * flux[0]
        f[-1] -= dt / h * (0.0 - flux[-1])
        remaining -= dt

    peak = float(np.max(f))
    if not np.all(np.isfinite(f)) or float(np.min(f)) < -1e-9 * max(peak, 1.0):
        raise NumericalError("finite-volume update became unstable")
    np.clip(f, 0.0, None, out=f)
    return DensityGrid(out.j_min, out.j_max, f, t=out.t + t_end)


# ---------------------------------------------------------------------------
# Monte-Carlo ensemble
# ---------------------------------------------------------------------------

_BATCH = 2048


def _path_noise(seed: int, indices: range, n_steps: int) -> np.ndarray:
    """Stack per-path normal draws; row i comes from stream (seed, path_i)."""
    rows = np.empty((len(indices), n_steps))
    for r, i in enumerate(indices):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        rows[r] = rng.standard_normal(n_steps)
    return rows


def mc_ensemble(
    H: Callable[[np.ndarray], np.ndarray],
    params: DiffusionParams,
    j0: float,
    n_paths: int,
    t_end: float,
    seed: int,
    dt: float | None = None,
) -> np.ndarray:
    """Terminal actions of ``n_paths`` Euler-Maruyama paths of

        dJ = -sigma_c * omega(J) dt + sqrt(2 kappa) dW,

    reflected (mirror rule) at J = 0.  Path i consumes only the stream
    keyed by ``(seed, i)``: results are bit-identical regardless of batch
    size, and a run with more paths extends a run with fewer.
    """
    if n_paths < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")
    if t_end < 0.0:
        raise DomainError(f"t_end must be non-negative, got {t_end}")
    if j0 < 0.0:
        raise DomainError(f"j0 must be non-negative, got {j0}")
    if t_end == 0.0:
        return np.full(n_paths, float(j0))
    if dt is None:
        dt = min(t_end, 1.0 / (200.0 * params.nu_c))
    n_steps = max(1, int(math.ceil(t_end / dt)))
    dt = t_end / n_steps
    amp = math.sqrt(2.0 * params.kappa * dt)

    out = np.empty(n_paths)
    for lo in range(0, n_paths, _BATCH):
        idx = range(lo, min(lo + _BATCH, n_paths))
        noise = _path_noise(seed, idx, n_steps)
        J = np.full(len(idx), float(j0))
        for s in range(n_steps):
            J += -params.sigma_c * _omega_of(H, J) * dt + amp * noise[:, s]
            np.abs(J, out=J)  # mirror reflection at the origin
        out[lo:lo + len(idx)] = J
    return out


def ks_statistic(samples: np.ndarray, grid: DensityGrid) -> float:
    """Kolmogorov-Smirnov distance between an empirical sample and a grid
    density, evaluated at the cell edges."""
    samples = np.sort(np.asarray(samples, dtype=float))
    n = len(samples)
    if n == 0:
        raise DomainError("need at least one sample")
    edges = grid.j_min + grid.cell_width * np.arange(1, grid.n_cells + 1)
    cdf = grid.cdf() / grid.mass()
    ecdf = np.searchsorted(samples, edges, side="right") / n
    return float(np.max(np.abs(ecdf - cdf)))


# ---------------------------------------------------------------------------
# Forecast ensembles
# ---------------------------------------------------------------------------


class ForecastMode(enum.Enum):
    DIFFUSIVE = "diffusive"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class ForecastResult:
    """Ensemble forecast: ``paths[r, k]`` is realization r sampled at
    ``times[k]``."""

    mode: ForecastMode
    times: np.ndarray
    paths: np.ndarray

    def to_csv(self, path_or_file) -> None:
        """Long-format CSV with columns ``realization_id,t,value``."""
        buf = io.StringIO()
        buf.write("realization_id,t,value\n")
        for r in range(self.paths.shape[0]):
            for k in range(self.paths.shape[1]):
                buf.write(f"{r},{float(self.times[k])!r},{float(self.paths[r, k])!r}\n")
        data = buf.getvalue()
        if hasattr(path_or_file, "write"):
            path_or_file.write(data)
        else:
            with open(path_or_file, "w") as fh:
                fh.write(data)


def forecast(
    mode: ForecastMode,
    *,
    start: float,
    horizon: float,
    n_realizations: int,
    seed: int = 0,
    n_samples: int = 512,
    model: HamiltonianModel | None = None,
    params: DiffusionParams | None = None,
    H: Callable[[np.ndarray], np.ndarray] | None = None,
    dt: float | None = None,
) -> ForecastResult:
    """Generate an ensemble forecast from a history-consistent start.

    ``Conservative`` propagates the conservative oscillation exactly: every
    realization shares the observed amplitude (energy) and differs only in
    its unknown phase, drawn uniformly from the stream ``(seed, r)``.
    ``Diffusive`` propagates the action SDE of :func:`mc_ensemble` instead,
    sampling each path at ``n_samples`` intermediate times.
    """
    if horizon <= 0.0 or not math.isfinite(horizon):
        raise DomainError(f"horizon must be positive, got {horizon}")
    if n_realizations < 0:
        raise DomainError(f"n_realizations must be >= 0, got {n_realizations}")
    if n_samples < 2:
        raise DomainError(f"n_samples must be >= 2, got {n_samples}")
    times = np.linspace(0.0, horizon, n_samples)

    if mode is ForecastMode.CONSERVATIVE:
        if model is None:
            raise DomainError("conservative forecast needs a coordinate model")
        E0 = float(model.energy(0.0, start))
        from .dynamics import action_angle  # local to avoid cycle at import
        P0, _ = action_angle(model, PhaseState(q=abs(start), p=0.0))
        period = oscillation_period(model, E0)
        step = period / 256.0
        n_steps = int(math.ceil(horizon / step))
        step = horizon / n_steps
        paths = np.empty((n_realizations, n_samples))
        for r in range(n_realizations):
            rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
            Q0 = rng.uniform(0.0, 2.0 * math.pi)
            st = action_angle_inverse(model, P0, Q0)
            traj = integrate_trajectory(model, st, step, n_steps)
            paths[r] = np.interp(times, traj.t, traj.q)
        return ForecastResult(mode=mode, times=times, paths=paths)

    if mode is ForecastMode.DIFFUSIVE:
        if params is None:
            raise DomainError("diffusive forecast needs DiffusionParams")
        if H is None:
            H = lambda x: x  # noqa: E731 - default landscape H(J) = J
        if start < 0.0:
            raise DomainError(f"start action must be non-negative, got {start}")
        if dt is None:
            dt = min(horizon, 1.0 / (200.0 * params.nu_c))
        n_steps = max(n_samples - 1, int(math.ceil(horizon / dt)))
        # step count divisible by the sample count so marks land exactly
        per = int(math.ceil(n_steps / (n_samples - 1)))
        n_steps = per * (n_samples - 1)
        dt = horizon / n_steps
        amp = math.sqrt(2.0 * params.kappa * dt)
        paths = np.empty((n_realizations, n_samples))
        for lo in range(0, n_realizations, _BATCH):
            idx = range(lo, min(lo + _BATCH, n_realizations))
            noise = _path_noise(seed, idx, n_steps)
            J = np.full(len(idx), float(start))
            block = np.empty((len(idx), n_samples))
            block[:, 0] = J
            for s in range(n_steps):
                J += -params.sigma_c * _omega_of(H, J) * dt + amp * noise[:, s]
                np.abs(J, out=J)
                if (s + 1) % per == 0:
                    block[:, (s + 1) // per] = J
            paths[lo:lo + len(idx)] = block
        return ForecastResult(mode=mode, times=times, paths=paths)

    raise DomainError(f"unknown forecast mode {mode!r}")
