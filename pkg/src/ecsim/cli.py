"""Command-line front end.

Runs ledger scenarios, the control and risk demos, and the valuation
report, writing deterministic CSV/JSON artifacts (same config and seed give
byte-identical files).  Plot emission is data-only; see the README for the
column schemas and a plotting recipe.

Exit codes: 0 success, 2 parse error, 3 domain error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, control, dynamics, ledger, risk
from . import valuation as valuation_mod
from .errors import DomainError, EcsimError, NumericalError, ParseError

ENV_OUT_DIR = "ECSIM_OUT"
TWO_PI = 2.0 * math.pi

__all__ = ["RunConfig", "ControlDemo", "run", "emit_plotdata", "main"]


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str | None = None
    out: Path = Path("out")
    seed: int = 42
    format: str = "csv"
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ControlDemo:
    """Paired uncontrolled/controlled coordinate traces on a shared grid."""

    times: np.ndarray
    q_uncontrolled: np.ndarray
    q_controlled: np.ndarray


def _write_text(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(data)


def emit_plotdata(result, path) -> None:
    """Write a result as a long-format CSV for external plotting.

    Scenario results become the value curve ``t,total_value,ec_supply,liquid``;
    control demos become ``t,q_uncontrolled,q_controlled``; forecast, sweep,
    density and arbitrage results use their natural column sets.  An empty
    result is a domain error.
    """
    path = Path(path)
    if isinstance(result, ledger.ScenarioResult):
        if not result.snapshots:
            raise DomainError("scenario result has no snapshots to plot")
        buf = io.StringIO()
        buf.write("t,total_value,ec_supply,liquid\n")
        for s in result.snapshots:
            buf.write(f"{float(s.t)!r},{s.total_value},{s.ec_supply},{s.liquid_reserves}\n")
        _write_text(path, buf.getvalue())
    elif isinstance(result, ControlDemo):
        if len(result.times) == 0:
            raise DomainError("control demo has no samples to plot")
        buf = io.StringIO()
        buf.write("t,q_uncontrolled,q_controlled\n")
        for t, qu, qc in zip(result.times, result.q_uncontrolled, result.q_controlled):
            buf.write(f"{float(t)!r},{float(qu)!r},{float(qc)!r}\n")
        _write_text(path, buf.getvalue())
    elif isinstance(result, risk.ForecastResult):
        if result.paths.size == 0:
            raise DomainError("forecast result is empty")
        path.parent.mkdir(parents=True, exist_ok=True)
        result.to_csv(path)
    elif isinstance(result, control.ArbitrageResult):
        if len(result.times) == 0:
            raise DomainError("arbitrage result is empty")
        buf = io.StringIO()
        buf.write("t,price_uncontrolled,price_controlled\n")
        for t, pu, pc in zip(
            result.times, result.price_uncontrolled, result.price_controlled
        ):
            buf.write(f"{float(t)!r},{float(pu)!r},{float(pc)!r}\n")
        _write_text(path, buf.getvalue())
    elif isinstance(result, risk.DensityGrid):
        path.parent.mkdir(parents=True, exist_ok=True)
        result.to_csv(path)
    elif isinstance(result, (list, tuple)) and result and all(
        isinstance(p, control.SweepPoint) for p in result
    ):
        path.parent.mkdir(parents=True, exist_ok=True)
        control.sweep_to_csv(result, path)
    elif result is None or (isinstance(result, (list, tuple)) and not result):
        raise DomainError("nothing to plot: result is empty")
    else:
        raise DomainError(f"cannot emit plot data for {type(result).__name__}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_run_scenario(cfg: RunConfig) -> int:
    name = cfg.input or "new-energy"
    if name == "new-energy":
        scenario = ledger.new_energy_scenario()
    else:
        p = Path(name)
        if not p.exists():
            raise ParseError(f"scenario {name!r} is neither built-in nor an existing file")
        scenario = ledger.scenario_from_json(p.read_text())
    result = ledger.run_scenario(scenario)

    _write_text(cfg.out / "metrics.csv", ledger.metrics_to_csv(result.snapshots))
    _write_text(cfg.out / "balances.csv", ledger.balances_to_csv(result))
    emit_plotdata(result, cfg.out / "value_curve.csv")
    if cfg.format == "json":
        doc = [
            {
                "t": s.t,
                "ec_supply": s.ec_supply,
                "liquid_reserves": s.liquid_reserves,
                "capital_reserves": s.capital_reserves,
                "total_value": s.total_value,
                "liquid_ratio": s.liquid_ratio,
                "total_ratio": s.total_ratio,
                "m_e_observed": s.m_e_observed,
                "S0_observed": s.S0_observed,
            }
            for s in result.snapshots
        ]
        _write_text(cfg.out / "metrics.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")

    print(f"scenario {scenario.name!r}: {len(scenario.events)} events, "
          f"{len(result.snapshots)} checkpoints")
    print(f"{'t':>5} {'ec_supply':>12} {'liquid':>12} {'capital':>12} "
          f"{'value':>12} {'liq.ratio':>9} {'tot.ratio':>9}")
    for s in result.snapshots:
        lr = f"{s.liquid_ratio:.4f}" if s.liquid_ratio is not None else "-"
        tr = f"{s.total_ratio:.4f}" if s.total_ratio is not None else "-"
        print(f"{s.t:>5.1f} {s.ec_supply:>12,} {s.liquid_reserves:>12,} "
              f"{s.capital_reserves:>12,} {s.total_value:>12,} {lr:>9} {tr:>9}")
    lrs = [s.liquid_ratio for s in result.snapshots if s.liquid_ratio is not None]
    trs = [s.total_ratio for s in result.snapshots if s.total_ratio is not None]
    if lrs:
        print(f"min liquid ratio {min(lrs):.4f}, min total ratio {min(trs):.4f}")
    if scenario.growth_window is not None:
        fit = ledger.growth_fit(result.snapshots, scenario.growth_window,
                                scenario.cap_table)
        line = f"growth rate {fit.rate:.4f}/yr over t in {list(scenario.growth_window)}"
        if fit.seed_multiple is not None:
            line += (f"; seed x{fit.seed_multiple:,.0f}, listing x{fit.ipo_multiple:,.0f} "
                     "(reconstructed cap table)")
        print(line)
    print(f"wrote metrics.csv, balances.csv, value_curve.csv in {cfg.out}")
    return 0


def _cmd_demo_kapitza(cfg: RunConfig) -> int:
    amplitude = float(cfg.options.get("amplitude", 2.0))
    omega_sp = float(cfg.options.get("omega_sp", 40.0))
    offset = float(cfg.options.get("offset", 0.01))
    periods = float(cfg.options.get("periods", 10.0))

    model = dynamics.pendulum()
    q_star = model.params["unstable_q"]
    start = dynamics.PhaseState(q=q_star + offset, p=0.0)
    duration = periods * TWO_PI

    def run_one(f0: float) -> control.StabilizeResult:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", control.WeakDriveWarning)
            policy = control.ControlPolicy(
                kind=control.PolicyKind.PONDEROMOTIVE, f_0=f0, omega_sp=omega_sp
            )
        return control.stabilize_run(model, policy, start, duration, seed=cfg.seed)

    uncontrolled = run_one(0.0)
    controlled = run_one(amplitude)
    demo = ControlDemo(
        times=controlled.trajectory.t,
        q_uncontrolled=uncontrolled.trajectory.q,
        q_controlled=controlled.trajectory.q,
    )
    emit_plotdata(demo, cfg.out / "kapitza.csv")

    print(f"inverted pendulum, offset {offset:g}, drive frequency {omega_sp:g}, "
          f"{periods:g} natural periods")
    print(f"uncontrolled: verdict {uncontrolled.verdict.value}, "
          f"max final distance {uncontrolled.max_final_distance:.4f} "
          f"(bound {uncontrolled.bound:.4f})")
    print(f"amplitude {amplitude:g}: verdict {controlled.verdict.value}, "
          f"max final distance {controlled.max_final_distance:.4f} "
          f"(bound {controlled.bound:.4f})")
    print(f"wrote kapitza.csv in {cfg.out}")
    return 0


def _cmd_demo_dissipation_sweep(cfg: RunConfig) -> int:
    nu_lo = float(cfg.options.get("nu_min", 0.0))
    nu_hi = float(cfg.options.get("nu_max", 1.0))
    n = int(cfg.options.get("n", 21))
    if n < 2 or not (0.0 <= nu_lo < nu_hi):
        raise DomainError("need n >= 2 sweep points and 0 <= nu_min < nu_max")

    model = dynamics.double_well_action(1.0, 1.0)
    domain = model.params["domain"]
    buf = io.StringIO()
    buf.write("nu,n_equilibria\n")
    rows = []
    for nu in np.linspace(nu_lo, nu_hi, n):
        eq = dynamics.find_equilibria(control.embed_dissipation(model, float(nu)), domain)
        rows.append((float(nu), len(eq)))
        buf.write(f"{float(nu)!r},{len(eq)}\n")
    _write_text(cfg.out / "dissipation_sweep.csv", buf.getvalue())

    nu_cr = control.critical_nu(model, (nu_lo, nu_hi), domain)
    print("equilibrium count vs damping on the double-well action landscape")
    for nu, c in rows:
        print(f"  nu={nu:6.3f}  equilibria={c}")
    print(f"critical damping nu_cr = {nu_cr:.4f} (bisected to 1%)")
    print(f"wrote dissipation_sweep.csv in {cfg.out}")
    return 0


def _cmd_demo_forecast(cfg: RunConfig) -> int:
    horizon = float(cfg.options.get("horizon", 20.0))
    n_real = int(cfg.options.get("realizations", 100))
    n_samples = int(cfg.options.get("samples", 201))

    model = dynamics.pendulum()
    conservative = risk.forecast(
        risk.ForecastMode.CONSERVATIVE,
        start=1.0,
        horizon=horizon,
        n_realizations=n_real,
        seed=cfg.seed,
        n_samples=n_samples,
        model=model,
    )
    params = risk.diffusion_scalings(T=1.0, omega_0=10.0, J_0=10.0)
    diffusive = risk.forecast(
        risk.ForecastMode.DIFFUSIVE,
        start=1.0,
        horizon=horizon,
        n_realizations=n_real,
        seed=cfg.seed,
        n_samples=n_samples,
        params=params,
        H=lambda j: j,
    )
    emit_plotdata(conservative, cfg.out / "forecast_conservative.csv")
    emit_plotdata(diffusive, cfg.out / "forecast_diffusive.csv")

    print(f"{n_real} realizations over horizon {horizon:g}")
    for res in (conservative, diffusive):
        final = res.paths[:, -1]
        print(f"  {res.mode.value:>12}: final mean {final.mean():+.4f}, "
              f"spread (std) {final.std():.4f}")
    print("conservative spread comes from phase only; diffusive spread grows "
          "with the 2*kappa*t law until the boundary binds")
    print(f"wrote forecast_conservative.csv, forecast_diffusive.csv in {cfg.out}")
    return 0


def _cmd_demo_arbitrage(cfg: RunConfig) -> int:
    cycles = float(cfg.options.get("cycles", 8.0))
    res = control.arbitrage_run(seed=cfg.seed, duration=cycles * TWO_PI)
    emit_plotdata(res, cfg.out / "arbitrage.csv")

    buf = io.StringIO()
    buf.write("t,side,price,lots,agent\n")
    for tr in res.trades:
        buf.write(f"{tr.t!r},{tr.side},{tr.price!r},{tr.lots!r},{tr.agent}\n")
    _write_text(cfg.out / "trades.csv", buf.getvalue())

    drop = (1.0 - res.var_controlled / res.var_uncontrolled) if res.var_uncontrolled else 0.0
    print(f"band trading around equilibrium: amplitude {res.amplitude:.4f}, "
          f"{cycles:g} cycles")
    print(f"completed round trips: {res.completed_cycles}, "
          f"profit {res.completed_profit:.4f} "
          f"(state: cash {res.controller_cash:.4f}, "
          f"inventory {res.controller_inventory:g})")
    print(f"price variance: uncontrolled {res.var_uncontrolled:.6f}, "
          f"controlled {res.var_controlled:.6f} ({drop:.1%} lower)")
    print(f"wrote arbitrage.csv, trades.csv in {cfg.out}")
    return 0


def _load_curves(path: str) -> tuple:
    """Optional valuation input: JSON with sampled revenue/expense curves."""
    p = Path(path)
    if not p.exists():
        raise ParseError(f"curve file {path!r} does not exist")
    try:
        doc = json.loads(p.read_text())
        interval = tuple(float(x) for x in doc["interval"])
        r_pts = np.asarray(doc["R"], dtype=float)
        e_pts = np.asarray(doc["E"], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as ex:
        raise ParseError(f"bad curve file {path!r}: {ex}") from ex
    R = valuation_mod.Curve.from_samples(r_pts[:, 0], r_pts[:, 1])
    E = valuation_mod.Curve.from_samples(e_pts[:, 0], e_pts[:, 1])
    return R, E, interval


def _slope_relation(rho: float) -> str:
    """Render R' = E'/(rho+1) with an exact small fraction when one exists."""
    fr = Fraction(rho).limit_denominator(10**9) + 1
    if fr.denominator == 1:
        return f"R' = E'/{fr.numerator}"
    return f"R' = ({fr.denominator}/{fr.numerator})*E'"


def _cmd_valuation(cfg: RunConfig) -> int:
    m_e = float(cfg.options["m_e"])
    s0 = float(cfg.options["s0"])
    ti = float(cfg.options.get("ti", 1.0))
    params = valuation_mod.EconomyParams(m=m_e, S_0=s0, T_I=ti)

    if cfg.input:
        R, E, interval = _load_curves(cfg.input)
    else:
        # Built-in demo pair: concave revenue, convex expense.
        R = lambda q: 4.0 * q - 0.5 * q * q
        E = lambda q: 0.5 * q * q
        interval = (0.0, 6.0)
    point = valuation_mod.kuhn_tucker_optimize(R, E, params, interval=interval)

    rho = params.rho
    ratio = Fraction(rho).limit_denominator(10**9)
    ratio_str = (f"{ratio.numerator}" if ratio.denominator == 1
                 else f"{ratio.numerator}/{ratio.denominator}")
    print(f"money-demand ratio m_e*S_0/T_I = {ratio_str}")
    print(f"slope relation at the money-maximizing point: {_slope_relation(rho)}")
    print(f"operating point: Q* = {point.Q_star:.6f}, "
          f"R' = {point.R_prime:.6f}, E' = {point.E_prime:.6f}")
    lam = "inf" if math.isinf(point.lambda_star) else f"{point.lambda_star:.6f}"
    print(f"shadow price lambda* = {lam} at money floor mu = {point.mu:.6f}")
    mu_min = f"{point.mu_min:.6f}" if point.mu_min is not None else "-"
    print(f"money range: mu_max = {point.mu_max:.6f}, mu_min = {mu_min}; "
          f"structural gap law 1/(rho+1) = {point.gap_law:.6f}")
    if cfg.format == "json":
        doc = dict(point.to_dict(), rho=rho, slope_relation=_slope_relation(rho))
        doc = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
               for k, v in doc.items()}
        _write_text(cfg.out / "valuation.json",
                    json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"wrote valuation.json in {cfg.out}")
    return 0


_COMMANDS = {
    "run-scenario": _cmd_run_scenario,
    "demo-kapitza": _cmd_demo_kapitza,
    "demo-dissipation-sweep": _cmd_demo_dissipation_sweep,
    "demo-forecast": _cmd_demo_forecast,
    "demo-arbitrage": _cmd_demo_arbitrage,
    "valuation": _cmd_valuation,
}


def run(config: RunConfig) -> int:
    """Execute one configured command; returns the process exit status."""
    handler = _COMMANDS.get(config.command)
    if handler is None:
        raise ParseError(f"unknown command {config.command!r}")
    config.out.mkdir(parents=True, exist_ok=True)
    return handler(config)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecsim",
        description="Economy-as-dynamics simulators: ledger scenarios, "
                    "stabilization and diffusion demos, valuation reports.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42,
                        help="random seed (default 42, fixed for reproducibility)")
    common.add_argument("--out", type=Path,
                        default=Path(os.environ.get(ENV_OUT_DIR, "out")),
                        help=f"output directory (default $"
                             f"{ENV_OUT_DIR} or ./out), created if absent")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="report format (csv always written; json adds a "
                             "JSON report)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-scenario", parents=[common],
                       help="replay a ledger scenario and write metric reports")
    p.add_argument("scenario", nargs="?", default="new-energy",
                   help="built-in name ('new-energy') or a scenario JSON file")

    p = sub.add_parser("demo-kapitza", parents=[common],
                       help="drive-stabilize the inverted pendulum")
    p.add_argument("--amplitude", type=float, default=2.0,
                   help="drive amplitude (0 disables the drive)")
    p.add_argument("--omega-sp", type=float, default=40.0, help="drive frequency")
    p.add_argument("--offset", type=float, default=0.01,
                   help="initial angular offset from the inverted point")
    p.add_argument("--periods", type=float, default=10.0,
                   help="run length in natural periods")

    p = sub.add_parser("demo-dissipation-sweep", parents=[common],
                       help="count landscape equilibria as damping increases")
    p.add_argument("--nu-min", type=float, default=0.0)
    p.add_argument("--nu-max", type=float, default=1.0)
    p.add_argument("--n", type=int, default=21, help="number of sweep points")

    p = sub.add_parser("demo-forecast", parents=[common],
                       help="phase-spread vs diffusive ensemble forecasts")
    p.add_argument("--horizon", type=float, default=20.0)
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--samples", type=int, default=201)

    p = sub.add_parser("demo-arbitrage", parents=[common],
                       help="band trader damping a harmonic price cycle")
    p.add_argument("--cycles", type=float, default=8.0)

    p = sub.add_parser("valuation", parents=[common],
                       help="constrained operating point and money-demand ratios")
    p.add_argument("--m-e", type=float, required=True, dest="m_e",
                   help="effective activity multiplier")
    p.add_argument("--s0", type=float, required=True, help="base savings time (years)")
    p.add_argument("--ti", type=float, default=1.0,
                   help="investment recovery horizon (years)")
    p.add_argument("--input", default=None,
                   help="optional JSON file with sampled revenue/expense curves")
    return parser


_OPTION_KEYS = {
    "demo-kapitza": ("amplitude", "omega_sp", "offset", "periods"),
    "demo-dissipation-sweep": ("nu_min", "nu_max", "n"),
    "demo-forecast": ("horizon", "realizations", "samples"),
    "demo-arbitrage": ("cycles",),
    "valuation": ("m_e", "s0", "ti"),
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    options = {k: getattr(args, k) for k in _OPTION_KEYS.get(args.command, ())}
    config = RunConfig(
        command=args.command,
        input=getattr(args, "scenario", None) or getattr(args, "input", None),
        out=args.out,
        seed=args.seed,
        format=args.format,
        options=options,
    )
    try:
        return run(config)
    except EcsimError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return ex.exit_code
    except OSError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
