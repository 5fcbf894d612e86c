"""Deterministic multi-entity double-entry ledger with a scenario language.

All balances are exact integer millions of USD-equivalent — no floats ever
enter an account.  A world holds one currency-issuing firm, any number of
subsidiaries, and external counterparties.  Events expand to balanced
posting sets; after every event the engine re-verifies the accounting
identity per entity and conservation of the issued currency:

    ECInCirculation (on the issuer)  ==  sum of ECHeld over all entities,

which includes the issuer's own vault between issuance and deployment.
Retirement via ``BuyECOpenMarket(retire=True)`` shrinks both sides equally.

Claims of the issuer on its subsidiaries (EC working-capital investments,
acquisition consideration, assumed-debt payoffs) are carried in the
issuer-side ``EC_LOAN_ASSET`` account; group metrics ignore it, treating it
as a consolidation elimination.

The built-in ``new-energy`` scenario replays a sixteen-year growth story in
five staged build-outs and is pinned by golden checkpoints (see
:func:`new_energy_scenario`).
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    EcsimError,
    OverdraftError,
    ParseError,
    UnknownEntityError,
)

__all__ = [
    "Role",
    "AccountClass",
    "Entity",
    "World",
    "EventKind",
    "ScenarioEvent",
    "post",
    "CapTable",
    "Scenario",
    "MetricsSnapshot",
    "ScenarioResult",
    "run_scenario",
    "reserve_ratios",
    "GrowthFit",
    "growth_fit",
    "TargetEnergyComparison",
    "target_energy_compare",
    "new_energy_scenario",
    "scenario_to_json",
    "scenario_from_json",
    "metrics_to_csv",
    "balances_to_csv",
    "balance_report",
]


class Role(enum.Enum):
    CURRENCY_FIRM = "CurrencyFirm"
    SUBSIDIARY = "Subsidiary"
    EXTERNAL = "External"


class AccountClass(enum.Enum):
    CASH_USD = "CashUSD"
    EC_HELD = "ECHeld"
    STRATEGIC_RESERVE = "StrategicReserve"
    TANGIBLE_CAPITAL = "TangibleCapital"
    INTANGIBLE_IP = "IntangibleIP"
    GOODWILL = "Goodwill"
    DEBT_OWED = "DebtOwed"
    EC_IN_CIRCULATION = "ECInCirculation"
    EC_LOAN_ASSET = "ECLoanAsset"
    STOCK_EQUITY = "StockEquity"
    RETAINED_EARNINGS = "RetainedEarnings"


ASSET_CLASSES = frozenset(
    {
        AccountClass.CASH_USD,
        AccountClass.EC_HELD,
        AccountClass.STRATEGIC_RESERVE,
        AccountClass.TANGIBLE_CAPITAL,
        AccountClass.INTANGIBLE_IP,
        AccountClass.GOODWILL,
        AccountClass.EC_LOAN_ASSET,
    }
)
LIABILITY_CLASSES = frozenset({AccountClass.DEBT_OWED, AccountClass.EC_IN_CIRCULATION})
EQUITY_CLASSES = frozenset({AccountClass.STOCK_EQUITY, AccountClass.RETAINED_EARNINGS})
# Issuer-only accounts.
ISSUER_CLASSES = frozenset({AccountClass.EC_IN_CIRCULATION, AccountClass.EC_LOAN_ASSET})


def _money(value, name: str) -> int:
    """Validate an exact integer money amount (millions)."""
    if isinstance(value, bool) or not isinstance(value, int):
        raise DomainError(f"{name} must be an integer amount in millions, got {value!r}")
    return value


def _nonneg(value, name: str) -> int:
    v = _money(value, name)
    if v < 0:
        raise DomainError(f"{name} must be non-negative, got {v}")
    return v


@dataclass
class Entity:
    name: str
    role: Role
    accounts: dict = field(default_factory=dict)

    def balance(self, acct: AccountClass) -> int:
        return self.accounts.get(acct, 0)

    def assets(self) -> int:
        return sum(v for a, v in self.accounts.items() if a in ASSET_CLASSES)

    def liabilities(self) -> int:
        return sum(v for a, v in self.accounts.items() if a in LIABILITY_CLASSES)

    def equity(self) -> int:
        return sum(v for a, v in self.accounts.items() if a in EQUITY_CLASSES)

    def copy(self) -> "Entity":
        return Entity(self.name, self.role, dict(self.accounts))


class World:
    """Immutable-by-convention ledger state; :func:`post` returns a copy."""

    def __init__(self, entities: Iterable[Entity] = (), ec_usd_rate: int = 1):
        self.entities: dict[str, Entity] = {}
        for e in entities:
            if e.name in self.entities:
                raise DomainError(f"duplicate entity name {e.name!r}")
            self.entities[e.name] = e
        firms = [e.name for e in self.entities.values() if e.role is Role.CURRENCY_FIRM]
        if len(firms) > 1:
            raise DomainError(f"at most one currency firm allowed, got {firms}")
        if ec_usd_rate != 1:
            # Hook for a scenario-level exchange-rate series; fixed at par here.
            raise DomainError("only the par EC:USD rate (1) is supported")
        self.ec_usd_rate = ec_usd_rate

    @property
    def currency_firm(self) -> Entity:
        for e in self.entities.values():
            if e.role is Role.CURRENCY_FIRM:
                return e
        raise DomainError("world has no currency firm")

    def entity(self, name: str | None, what: str) -> Entity:
        if name is None:
            raise DomainError(f"event is missing its {what}")
        e = self.entities.get(name)
        if e is None:
            raise UnknownEntityError(f"{what} {name!r} does not exist")
        return e

    def external(self) -> Entity:
        for e in self.entities.values():
            if e.role is Role.EXTERNAL:
                return e
        raise DomainError("world has no external counterparty entity")

    def copy(self) -> "World":
        w = World.__new__(World)
        w.entities = {n: e.copy() for n, e in self.entities.items()}
        w.ec_usd_rate = self.ec_usd_rate
        return w

    def check_invariants(self) -> None:
        circ = 0
        held = 0
        for e in self.entities.values():
            if e.assets() - e.liabilities() - e.equity() != 0:
                raise EcsimError(
                    f"internal imbalance on {e.name!r}: assets {e.assets()} != "
                    f"liabilities {e.liabilities()} + equity {e.equity()}"
                )
            for acct, v in e.accounts.items():
                if acct in ISSUER_CLASSES and e.role is not Role.CURRENCY_FIRM and v != 0:
                    raise DomainError(
                        f"{acct.value} may only appear on the currency firm, "
                        f"found on {e.name!r}"
                    )
                if v < 0 and (acct in ASSET_CLASSES or acct is AccountClass.DEBT_OWED):
                    raise OverdraftError(
                        f"{e.name!r} {acct.value} would go negative ({v})"
                    )
            circ += e.balance(AccountClass.EC_IN_CIRCULATION)
            held += e.balance(AccountClass.EC_HELD)
        if circ != held:
            raise EcsimError(
                f"EC conservation broken: in circulation {circ} != held {held}"
            )


class EventKind(enum.Enum):
    SEED_EQUITY = "SeedEquity"
    SPEND_OPEX = "SpendOpex"
    STOCK_ISSUE = "StockIssue"
    ISSUE_EC = "IssueEC"
    SELL_EC_FOR_CASH = "SellECForCash"
    ACQUIRE_COMPANY = "AcquireCompany"
    PAY_DEBT = "PayDebt"
    INVEST_EC_IN_SUBSIDIARY = "InvestECInSubsidiary"
    OPERATE = "Operate"
    BUILD_CAPITAL = "BuildCapital"  # extension: EC-funded capital formation
    SELL_RESERVE = "SellReserve"
    REMIT_CASH_FOR_EC = "RemitCashForEC"
    BUY_EC_OPEN_MARKET = "BuyECOpenMarket"
    DIVIDEND = "Dividend"
    SEQUESTER = "Sequester"
    REVALUE = "Revalue"


@dataclass(frozen=True)
class ScenarioEvent:
    """One dated ledger event.  Only the fields relevant to ``kind`` are
    read; ``counterparty`` defaults to the world's external entity."""

    time: float
    kind: EventKind
    entity: str | None = None
    amount: int | None = None
    counterparty: str | None = None
    payer: str | None = None
    cash: int | None = None
    intangible: int | None = None
    post_valuation: int | None = None
    price_ec: int | None = None
    price_cash: int | None = None
    debt_assumed: int | None = None
    tangible: int | None = None
    ec_cost: int | None = None
    output_value: int | None = None
    to_reserve: bool = False
    proceeds: int | None = None
    ec_new: int | None = None
    retire: bool = False
    asset: str | None = None
    account: str | None = None
    delta: int | None = None
    memo: str = ""

    def to_dict(self) -> dict:
        out: dict = {"time": self.time, "kind": self.kind.value}
        for name in (
            "entity", "amount", "counterparty", "payer", "cash", "intangible",
            "post_valuation", "price_ec", "price_cash", "debt_assumed",
            "tangible", "ec_cost", "output_value", "proceeds", "ec_new",
            "asset", "account", "delta", "memo",
        ):
            v = getattr(self, name)
            if v is not None and v != "":
                out[name] = v
        if self.to_reserve:
            out["to_reserve"] = True
        if self.retire:
            out["retire"] = True
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioEvent":
        d = dict(d)
        try:
            kind = EventKind(d.pop("kind"))
            time = float(d.pop("time"))
        except (KeyError, ValueError) as ex:
            raise ParseError(f"event needs valid 'kind' and 'time': {ex}") from ex
        allowed = set(cls.__dataclass_fields__) - {"time", "kind"}
        bad = set(d) - allowed
        if bad:
            raise ParseError(f"unknown event field(s) {sorted(bad)} for kind {kind.value}")
        return cls(time=time, kind=kind, **d)


# ---------------------------------------------------------------------------
# Event expansion and posting
# ---------------------------------------------------------------------------

Posting = tuple[str, AccountClass, int]


def _expand(world: World, ev: ScenarioEvent) -> list[Posting]:
    k = ev.kind
    P: list[Posting] = []

    def ext_name() -> str:
        return ev.counterparty if ev.counterparty else world.external().name

    if k is EventKind.SEED_EQUITY:
        e = world.entity(ev.entity, "seeded entity")
        a = _nonneg(ev.amount, "amount")
        P += [(e.name, AccountClass.CASH_USD, a), (e.name, AccountClass.STOCK_EQUITY, a)]
        if ev.counterparty:
            f = world.entity(ev.counterparty, "funding entity")
            P += [(f.name, AccountClass.CASH_USD, -a),
                  (f.name, AccountClass.RETAINED_EARNINGS, -a)]

    elif k in (EventKind.SPEND_OPEX, EventKind.SEQUESTER, EventKind.DIVIDEND):
        e = world.entity(ev.entity, "spending entity")
        a = _nonneg(ev.amount, "amount")
        if a:
            m = world.entity(ext_name(), "counterparty")
            P += [(e.name, AccountClass.CASH_USD, -a),
                  (e.name, AccountClass.RETAINED_EARNINGS, -a),
                  (m.name, AccountClass.CASH_USD, a),
                  (m.name, AccountClass.RETAINED_EARNINGS, a)]

    elif k is EventKind.STOCK_ISSUE:
        e = world.entity(ev.entity, "issuing entity")
        c = _nonneg(ev.cash, "cash")
        i = _nonneg(ev.intangible if ev.intangible is not None else 0, "intangible")
        if ev.post_valuation is not None and _nonneg(ev.post_valuation, "post_valuation") != c + i:
            raise DomainError(
                f"post_valuation {ev.post_valuation} != cash {c} + intangible {i}"
            )
        m = world.entity(ext_name(), "share buyer")
        P += [(e.name, AccountClass.CASH_USD, c),
              (e.name, AccountClass.STOCK_EQUITY, c + i),
              (m.name, AccountClass.CASH_USD, -c),
              (m.name, AccountClass.RETAINED_EARNINGS, -c)]
        if i:
            P.append((e.name, AccountClass.INTANGIBLE_IP, i))

    elif k is EventKind.ISSUE_EC:
        cf = world.currency_firm
        if ev.entity is not None and ev.entity != cf.name:
            raise DomainError(f"only the currency firm may issue EC, not {ev.entity!r}")
        a = _nonneg(ev.amount, "amount")
        P += [(cf.name, AccountClass.EC_HELD, a),
              (cf.name, AccountClass.EC_IN_CIRCULATION, a)]

    elif k is EventKind.SELL_EC_FOR_CASH:
        cf = world.currency_firm
        a = _nonneg(ev.amount, "amount")
        m = world.entity(ext_name(), "EC buyer")
        P += [(cf.name, AccountClass.EC_HELD, -a),
              (cf.name, AccountClass.CASH_USD, a),
              (m.name, AccountClass.EC_HELD, a),
              (m.name, AccountClass.CASH_USD, -a)]

    elif k is EventKind.ACQUIRE_COMPANY:
        cf = world.currency_firm
        t = world.entity(ev.entity, "acquisition target")
        if t.role is not Role.SUBSIDIARY:
            raise DomainError(f"acquisition target {t.name!r} must be a Subsidiary")
        pe = _nonneg(ev.price_ec if ev.price_ec is not None else 0, "price_ec")
        pc = _nonneg(ev.price_cash if ev.price_cash is not None else 0, "price_cash")
        d = _nonneg(ev.debt_assumed if ev.debt_assumed is not None else 0, "debt_assumed")
        tg = _nonneg(ev.tangible, "tangible")
        ig = _nonneg(ev.intangible if ev.intangible is not None else 0, "intangible")
        net_book = tg + ig - d
        goodwill = (pe + pc) - net_book
        if goodwill < 0:
            raise DomainError(
                f"price {pe + pc} below net book {net_book}; bargain purchases "
                "are not supported"
            )
        m = world.entity(ext_name(), "seller")
        P += [(cf.name, AccountClass.EC_HELD, -pe),
              (cf.name, AccountClass.CASH_USD, -pc),
              (cf.name, AccountClass.EC_LOAN_ASSET, net_book),
              (t.name, AccountClass.TANGIBLE_CAPITAL, tg),
              (t.name, AccountClass.DEBT_OWED, d),
              (t.name, AccountClass.STOCK_EQUITY, net_book),
              (m.name, AccountClass.EC_HELD, pe),
              (m.name, AccountClass.CASH_USD, pc),
              (m.name, AccountClass.RETAINED_EARNINGS, pe + pc)]
        if goodwill:
            P.append((cf.name, AccountClass.GOODWILL, goodwill))
        if ig:
            P.append((t.name, AccountClass.INTANGIBLE_IP, ig))

    elif k is EventKind.PAY_DEBT:
        t = world.entity(ev.entity, "debtor")
        a = _nonneg(ev.amount, "amount")
        m = world.entity(ext_name(), "creditor")
        payer = world.entity(ev.payer, "payer") if ev.payer else t
        if payer.name == t.name:
            P += [(t.name, AccountClass.CASH_USD, -a),
                  (t.name, AccountClass.DEBT_OWED, -a)]
        else:
            # The parent settles the subsidiary's debt, increasing its claim.
            P += [(payer.name, AccountClass.CASH_USD, -a),
                  (payer.name, AccountClass.EC_LOAN_ASSET, a),
                  (t.name, AccountClass.DEBT_OWED, -a),
                  (t.name, AccountClass.STOCK_EQUITY, a)]
        P += [(m.name, AccountClass.CASH_USD, a),
              (m.name, AccountClass.RETAINED_EARNINGS, a)]

    elif k is EventKind.INVEST_EC_IN_SUBSIDIARY:
        cf = world.currency_firm
        s = world.entity(ev.entity, "subsidiary")
        if s.role is not Role.SUBSIDIARY:
            raise DomainError(f"EC investments go to subsidiaries, not {s.name!r}")
        a = _nonneg(ev.amount, "amount")
        P += [(cf.name, AccountClass.EC_HELD, -a),
              (cf.name, AccountClass.EC_LOAN_ASSET, a),
              (s.name, AccountClass.EC_HELD, a),
              (s.name, AccountClass.STOCK_EQUITY, a)]

    elif k is EventKind.OPERATE:
        s = world.entity(ev.entity, "operating subsidiary")
        c = _nonneg(ev.ec_cost, "ec_cost")
        v = _nonneg(ev.output_value, "output_value")
        m = world.entity(ext_name(), "market")
        P += [(s.name, AccountClass.EC_HELD, -c),
              (m.name, AccountClass.EC_HELD, c),
              (m.name, AccountClass.RETAINED_EARNINGS, c)]
        if ev.to_reserve:
            # Output goes to inventory at stated market value; the spread to
            # cost is a mark-to-market entry through retained earnings.
            P += [(s.name, AccountClass.STRATEGIC_RESERVE, v),
                  (s.name, AccountClass.RETAINED_EARNINGS, v - c)]
        else:
            P += [(s.name, AccountClass.CASH_USD, v),
                  (s.name, AccountClass.RETAINED_EARNINGS, v - c),
                  (m.name, AccountClass.CASH_USD, -v),
                  (m.name, AccountClass.RETAINED_EARNINGS, -v)]

    elif k is EventKind.BUILD_CAPITAL:
        s = world.entity(ev.entity, "building subsidiary")
        c = _nonneg(ev.ec_cost, "ec_cost")
        if ev.asset not in ("tangible", "ip"):
            raise DomainError(f"asset must be 'tangible' or 'ip', got {ev.asset!r}")
        acct = (AccountClass.TANGIBLE_CAPITAL if ev.asset == "tangible"
                else AccountClass.INTANGIBLE_IP)
        m = world.entity(ext_name(), "contractor market")
        P += [(s.name, AccountClass.EC_HELD, -c),
              (s.name, acct, c),
              (m.name, AccountClass.EC_HELD, c),
              (m.name, AccountClass.RETAINED_EARNINGS, c)]

    elif k is EventKind.SELL_RESERVE:
        s = world.entity(ev.entity, "reserve holder")
        p = _nonneg(ev.proceeds, "proceeds")
        book = s.balance(AccountClass.STRATEGIC_RESERVE)
        if book <= 0:
            raise DomainError(f"{s.name!r} has no strategic reserve to sell")
        m = world.entity(ext_name(), "reserve buyer")
        P += [(s.name, AccountClass.STRATEGIC_RESERVE, -book),
              (s.name, AccountClass.CASH_USD, p),
              (s.name, AccountClass.RETAINED_EARNINGS, p - book),
              (m.name, AccountClass.CASH_USD, -p),
              (m.name, AccountClass.RETAINED_EARNINGS, -p)]

    elif k is EventKind.REMIT_CASH_FOR_EC:
        cf = world.currency_firm
        s = world.entity(ev.entity, "remitting subsidiary")
        c = _nonneg(ev.cash, "cash")
        e_new = _nonneg(ev.ec_new if ev.ec_new is not None else 0, "ec_new")
        P += [(s.name, AccountClass.CASH_USD, -c),
              (s.name, AccountClass.EC_HELD, e_new),
              (s.name, AccountClass.RETAINED_EARNINGS, e_new - c),
              (cf.name, AccountClass.CASH_USD, c),
              (cf.name, AccountClass.EC_IN_CIRCULATION, e_new),
              (cf.name, AccountClass.RETAINED_EARNINGS, c - e_new)]

    elif k is EventKind.BUY_EC_OPEN_MARKET:
        e = world.entity(ev.entity, "EC buyer")
        a = _nonneg(ev.amount, "amount")
        m = world.entity(ext_name(), "EC seller")
        P += [(e.name, AccountClass.CASH_USD, -a),
              (e.name, AccountClass.EC_HELD, a),
              (m.name, AccountClass.CASH_USD, a),
              (m.name, AccountClass.EC_HELD, -a)]
        if ev.retire:
            if e.role is not Role.CURRENCY_FIRM:
                raise DomainError("only the currency firm can retire EC")
            P += [(e.name, AccountClass.EC_HELD, -a),
                  (e.name, AccountClass.EC_IN_CIRCULATION, -a)]

    elif k is EventKind.REVALUE:
        e = world.entity(ev.entity, "revalued entity")
        if ev.delta is None:
            raise DomainError("revaluation needs a delta")
        d = _money(ev.delta, "delta")
        try:
            acct = AccountClass(ev.account)
        except ValueError:
            raise DomainError(f"unknown account class {ev.account!r}") from None
        if acct not in ASSET_CLASSES:
            raise DomainError(f"only asset accounts can be revalued, not {acct.value}")
        P += [(e.name, acct, d), (e.name, AccountClass.RETAINED_EARNINGS, d)]

    else:  # pragma: no cover - enum is exhaustive
        raise DomainError(f"unhandled event kind {k}")

    return P


def post(world: World, event: ScenarioEvent) -> World:
    """Apply one event, returning the new world.

    Expansion is balanced by construction and re-verified: per-entity
    accounting identities and EC conservation must hold afterwards, and no
    asset or debt account may go negative (overdraft).
    """
    postings = _expand(world, event)
    new = world.copy()
    touched_delta: dict[str, int] = {}
    for name, acct, delta in postings:
        ent = new.entities[name]
        ent.accounts[acct] = ent.balance(acct) + delta
        sign = 1 if acct in ASSET_CLASSES else -1
        touched_delta[name] = touched_delta.get(name, 0) + sign * delta
    for name, net in touched_delta.items():
        if net != 0:
            raise EcsimError(
                f"internal error: event {event.kind.value} expands unbalanced "
                f"on {name!r} (net {net})"
            )
    new.check_invariants()
    return new


# ---------------------------------------------------------------------------
# Scenarios, snapshots and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapTable:
    """Reconstructed capitalization history: the seed round and the listing.
    Round multiples are reported against the final sub-economy value."""

    seed_invested: int
    seed_post_valuation: int
    ipo_raised: int
    ipo_post_valuation: int

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            _nonneg(getattr(self, name), name)

    @property
    def seed_fraction(self) -> float:
        return (self.seed_invested / self.seed_post_valuation) * (
            1.0 - self.ipo_raised / self.ipo_post_valuation
        )

    @property
    def ipo_fraction(self) -> float:
        return self.ipo_raised / self.ipo_post_valuation


@dataclass(frozen=True)
class Scenario:
    name: str
    entities: tuple = ()
    events: tuple = ()
    checkpoints: tuple = ()
    growth_window: tuple[float, float] | None = None
    cap_table: CapTable | None = None


@dataclass(frozen=True)
class MetricsSnapshot:
    """Group metrics (currency firm + subsidiaries) at one checkpoint.

    ``ec_supply`` is total EC in circulation; ``liquid_reserves`` is group
    cash plus strategic reserve at market; ``capital_reserves`` is group
    tangible + intangible + goodwill capital plus the subsidiaries' EC
    savings; ``m_e_observed`` divides supply by those primary savings;
    ``S0_observed`` divides primary savings by the EC spending rate of the
    window ending at ``t``.  Ratios are ``None`` when undefined.
    """

    t: float
    ec_supply: int
    liquid_reserves: int
    capital_reserves: int
    total_value: int
    liquid_ratio: float | None
    total_ratio: float | None
    m_e_observed: float | None
    S0_observed: float | None


def _snapshot(world: World, t: float, window_spend: int, window_len: float) -> MetricsSnapshot:
    group = [
        e for e in world.entities.values()
        if e.role in (Role.CURRENCY_FIRM, Role.SUBSIDIARY)
    ]
    subs = [e for e in group if e.role is Role.SUBSIDIARY]
    supply = sum(e.balance(AccountClass.EC_IN_CIRCULATION) for e in group)
    liquid = sum(
        e.balance(AccountClass.CASH_USD) + e.balance(AccountClass.STRATEGIC_RESERVE)
        for e in group
    )
    capital = sum(
        e.balance(AccountClass.TANGIBLE_CAPITAL)
        + e.balance(AccountClass.INTANGIBLE_IP)
        + e.balance(AccountClass.GOODWILL)
        for e in group
    ) + sum(e.balance(AccountClass.EC_HELD) for e in subs)
    savings = sum(e.balance(AccountClass.EC_HELD) for e in subs)
    liquid_ratio = liquid / supply if supply > 0 else None
    total_ratio = (liquid + capital) / supply if supply > 0 else None
    m_e = supply / savings if savings > 0 else None
    s0 = None
    if window_spend > 0 and window_len > 0:
        s0 = savings / (window_spend / window_len)
    return MetricsSnapshot(
        t=t,
        ec_supply=supply,
        liquid_reserves=liquid,
        capital_reserves=capital,
        total_value=liquid + capital,
        liquid_ratio=liquid_ratio,
        total_ratio=total_ratio,
        m_e_observed=m_e,
        S0_observed=s0,
    )


@dataclass
class ScenarioResult:
    scenario: Scenario
    snapshots: list[MetricsSnapshot]
    balances: dict  # t -> {entity -> {AccountClass -> int}}
    final_world: World

    def snapshot_at(self, t: float) -> MetricsSnapshot:
        for s in self.snapshots:
            if s.t == t:
                return s
        raise DomainError(f"no snapshot at t={t}")


def run_scenario(scenario: Scenario) -> ScenarioResult:
    """Replay a scenario, snapshotting metrics and balance sheets at each
    checkpoint.  Deterministic: identical scenarios yield identical bytes in
    every report."""
    entities = [Entity(name, Role(role)) for name, role in scenario.entities]
    world = World(entities)
    events = sorted(scenario.events, key=lambda e: e.time)
    for a, b in zip(events[:-1], events[1:]):
        if b.time < a.time:  # pragma: no cover - sort guarantees order
            raise DomainError("events must be time-ordered")
    checkpoints = list(scenario.checkpoints)
    if not checkpoints:
        checkpoints = [0.0]

    snapshots: list[MetricsSnapshot] = []
    balances: dict = {}
    i = 0
    prev_t = checkpoints[0]
    window_spend = 0
    for cp in checkpoints:
        while i < len(events) and events[i].time <= cp:
            ev = events[i]
            world = post(world, ev)
            if ev.kind in (EventKind.OPERATE, EventKind.BUILD_CAPITAL):
                window_spend += ev.ec_cost or 0
            i += 1
        snapshots.append(_snapshot(world, cp, window_spend, cp - prev_t))
        balances[cp] = {
            e.name: {a: v for a, v in e.accounts.items() if v != 0}
            for e in world.entities.values()
        }
        prev_t = cp
        window_spend = 0
    while i < len(events):
        world = post(world, events[i])
        i += 1
    return ScenarioResult(
        scenario=scenario, snapshots=snapshots, balances=balances, final_world=world
    )


def reserve_ratios(world: World) -> tuple[float, float]:
    """Liquid and total reserve backing per unit of issued currency."""
    snap = _snapshot(world, t=math.nan, window_spend=0, window_len=0.0)
    if snap.ec_supply <= 0:
        raise DomainError("reserve ratios are undefined with zero EC supply")
    return snap.liquid_ratio, snap.total_ratio


@dataclass(frozen=True)
class GrowthFit:
    rate: float  # continuous growth rate, 1/years
    n_points: int
    seed_multiple: float | None = None
    ipo_multiple: float | None = None


def growth_fit(
    snapshots: Sequence[MetricsSnapshot],
    window: tuple[float, float] | None = None,
    cap_table: CapTable | None = None,
) -> GrowthFit:
    """Least-squares continuous growth rate of ln(total_value) over time.

    Uses snapshots with positive total value inside ``window`` (all when
    omitted).  At least three points are required, except that a constant
    value series of two or more points trivially fits rate 0.  When a cap
    table is supplied, the seed and listing round multiples are evaluated
    against the final snapshot's total value.
    """
    pts = [
        s for s in snapshots
        if s.total_value > 0
        and (window is None or window[0] <= s.t <= window[1])
    ]
    values = [s.total_value for s in pts]
    if len(pts) >= 2 and len(set(values)) == 1:
        rate = 0.0
    elif len(pts) < 3:
        raise DomainError(
            f"growth fit needs at least 3 snapshots with positive value, got {len(pts)}"
        )
    else:
        t = np.array([s.t for s in pts])
        y = np.log(np.array(values, dtype=float))
        rate = float(np.polyfit(t, y, 1)[0])

    seed_mult = ipo_mult = None
    if cap_table is not None and pts:
        final = pts[-1].total_value
        seed_mult = cap_table.seed_fraction * final / cap_table.seed_invested
        ipo_mult = cap_table.ipo_fraction * final / cap_table.ipo_raised
    return GrowthFit(rate=rate, n_points=len(pts), seed_multiple=seed_mult,
                     ipo_multiple=ipo_mult)


# ---------------------------------------------------------------------------
# The built-in growth scenario
# ---------------------------------------------------------------------------

NEW_ENERGY = "NewEnergy"
OPEN_MARKET = "OpenMarket"
NM_HC = "NMHydrocarbons"
NM_H2 = "NMHydrogen"
US_HC = "USHydrocarbons"
US_H2 = "USHydrogen"


def new_energy_scenario() -> Scenario:
    """Sixteen-year staged build-out of a currency-issuing energy group.

    Reconstructed event-by-event so that every aggregate checkpoint lands
    exactly: year 8 — group cash 135,500, capital 87,000 (of which
    intangible 13,000), EC issued 125,500, total value 222,500; year 14 —
    EC 1,667,500, value 2,124,500, cash 742,500, capital 1,382,000 (all
    millions).  Liquidity backing never drops below 10% of issued EC and
    total backing stays above 100% at every checkpoint.
    """
    E = ScenarioEvent
    K = EventKind
    events = (
        # Founding: an outside world with deep pockets, then the firm itself.
        E(0.0, K.SEED_EQUITY, entity=OPEN_MARKET, amount=50_000_000,
          memo="outside-world endowment"),
        E(0.0, K.SEED_EQUITY, entity=NEW_ENERGY, amount=20,
          counterparty=OPEN_MARKET, memo="seed round"),
        E(1.0, K.SPEND_OPEX, entity=NEW_ENERGY, amount=14,
          memo="technology development"),
        E(2.0, K.STOCK_ISSUE, entity=NEW_ENERGY, cash=3000, intangible=12000,
          post_valuation=15000, memo="public listing"),
        # Stage 1a: first acquisition, first issuance (years 2-4).
        E(2.5, K.SPEND_OPEX, entity=NEW_ENERGY, amount=6,
          memo="remaining seed spent on operations"),
        E(3.0, K.ISSUE_EC, amount=31000),
        E(3.0, K.SELL_EC_FOR_CASH, amount=8500),
        E(3.1, K.ACQUIRE_COMPANY, entity=NM_HC, price_ec=22500, price_cash=2500,
          debt_assumed=5000, tangible=30000, memo="hydrocarbon assets at book"),
        E(3.2, K.PAY_DEBT, entity=NM_HC, amount=5000, payer=NEW_ENERGY,
          memo="assumed debt retired"),
        E(3.3, K.ISSUE_EC, amount=25000),
        E(3.3, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_HC, amount=25000,
          memo="working capital"),
        E(3.5, K.ISSUE_EC, amount=13500),
        E(3.5, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_H2, amount=10000,
          memo="hydrogen venture working capital"),
        E(3.5, K.SELL_EC_FOR_CASH, amount=3500),
        # Stage 1b: production into reserve, facility build-out (years 4-6).
        E(5.0, K.OPERATE, entity=NM_HC, ec_cost=20000, output_value=18000,
          to_reserve=True, memo="produce to strategic reserve, marked to market"),
        E(5.1, K.BUILD_CAPITAL, entity=NM_HC, ec_cost=5000, asset="tangible",
          memo="reserve and pipeline facilities"),
        E(5.2, K.BUILD_CAPITAL, entity=NM_H2, ec_cost=1000, asset="ip",
          memo="electrolysis process development"),
        E(5.3, K.BUILD_CAPITAL, entity=NM_H2, ec_cost=9000, asset="tangible",
          memo="hydrogen production facility"),
        E(5.5, K.ISSUE_EC, amount=30000),
        E(5.5, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_HC, amount=20000),
        E(5.5, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_H2, amount=10000),
        # Stage 1c: reserve sale and first remittances (years 6-8).
        E(7.0, K.SELL_RESERVE, entity=NM_HC, proceeds=60000,
          memo="reserve sold into a tight market"),
        E(7.1, K.OPERATE, entity=NM_HC, ec_cost=20000, output_value=60000,
          memo="production sold at market"),
        E(7.2, K.REMIT_CASH_FOR_EC, entity=NM_HC, cash=120000, ec_new=20000,
          memo="profits remitted; working capital refreshed"),
        E(7.3, K.OPERATE, entity=NM_H2, ec_cost=6000, output_value=8000,
          memo="first hydrogen sales"),
        E(7.4, K.REMIT_CASH_FOR_EC, entity=NM_H2, cash=8000, ec_new=6000),
        # Stage 2a: the larger acquisition (years 8-10).
        E(9.0, K.ISSUE_EC, amount=90000),
        E(9.0, K.ACQUIRE_COMPANY, entity=US_HC, price_ec=90000, price_cash=30000,
          debt_assumed=15000, tangible=135000, memo="larger hydrocarbon operator"),
        E(9.1, K.PAY_DEBT, entity=US_HC, amount=15000, payer=NEW_ENERGY),
        E(9.2, K.ISSUE_EC, amount=80000),
        E(9.2, K.INVEST_EC_IN_SUBSIDIARY, entity=US_HC, amount=80000),
        E(9.3, K.ISSUE_EC, amount=500000),
        E(9.3, K.INVEST_EC_IN_SUBSIDIARY, entity=US_H2, amount=500000,
          memo="flagship hydrogen build-out funding"),
        # Stage 2b: parallel production and construction (years 10-12).
        E(11.0, K.OPERATE, entity=US_HC, ec_cost=70000, output_value=60000,
          to_reserve=True),
        E(11.1, K.BUILD_CAPITAL, entity=US_HC, ec_cost=10000, asset="tangible"),
        E(11.2, K.BUILD_CAPITAL, entity=US_H2, ec_cost=450000, asset="tangible",
          memo="hydrogen plants under construction"),
        E(11.5, K.ISSUE_EC, amount=400000),
        E(11.5, K.INVEST_EC_IN_SUBSIDIARY, entity=US_HC, amount=80000),
        E(11.5, K.INVEST_EC_IN_SUBSIDIARY, entity=US_H2, amount=320000),
        E(11.6, K.OPERATE, entity=NM_HC, ec_cost=20000, output_value=16000,
          to_reserve=True),
        E(11.7, K.OPERATE, entity=NM_H2, ec_cost=6000, output_value=6000),
        E(11.8, K.REMIT_CASH_FOR_EC, entity=NM_H2, cash=6000, ec_new=6000),
        E(11.9, K.ISSUE_EC, amount=20000),
        E(11.9, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_HC, amount=20000),
        # Stage 2c: monetization at scale (years 12-14).
        E(13.0, K.SELL_RESERVE, entity=US_HC, proceeds=210000),
        E(13.1, K.OPERATE, entity=US_HC, ec_cost=70000, output_value=210000),
        E(13.2, K.REMIT_CASH_FOR_EC, entity=US_HC, cash=420000, ec_new=70000),
        E(13.3, K.SELL_RESERVE, entity=NM_HC, proceeds=60000),
        E(13.4, K.OPERATE, entity=NM_HC, ec_cost=20000, output_value=60000),
        E(13.5, K.REMIT_CASH_FOR_EC, entity=NM_HC, cash=120000, ec_new=20000),
        E(13.6, K.OPERATE, entity=US_H2, ec_cost=100000, output_value=100000,
          memo="first hydrogen revenue at scale"),
        E(13.7, K.BUILD_CAPITAL, entity=US_H2, ec_cost=250000, asset="tangible"),
        E(13.8, K.REMIT_CASH_FOR_EC, entity=US_H2, cash=100000, ec_new=350000,
          memo="construction funding converted to working capital"),
        E(13.85, K.OPERATE, entity=NM_H2, ec_cost=6000, output_value=6000),
        E(13.9, K.REMIT_CASH_FOR_EC, entity=NM_H2, cash=6000, ec_new=6000),
        # Stage 3: steady state - buybacks, dividend, sequestration (years 14-16).
        E(15.0, K.OPERATE, entity=US_HC, ec_cost=70000, output_value=210000),
        E(15.05, K.REMIT_CASH_FOR_EC, entity=US_HC, cash=140000, ec_new=0),
        E(15.1, K.BUY_EC_OPEN_MARKET, entity=US_HC, amount=70000,
          memo="working capital re-bought on the open market"),
        E(15.15, K.ISSUE_EC, amount=40000),
        E(15.15, K.INVEST_EC_IN_SUBSIDIARY, entity=US_HC, amount=40000),
        E(15.2, K.SEQUESTER, entity=NEW_ENERGY, amount=430000,
          memo="negative-emissions program"),
        E(15.25, K.DIVIDEND, entity=NEW_ENERGY, amount=160000),
        E(15.3, K.OPERATE, entity=US_H2, ec_cost=150000, output_value=150000),
        E(15.35, K.BUILD_CAPITAL, entity=US_H2, ec_cost=220000, asset="tangible"),
        E(15.4, K.BUY_EC_OPEN_MARKET, entity=US_H2, amount=150000),
        E(15.45, K.ISSUE_EC, amount=250000),
        E(15.45, K.INVEST_EC_IN_SUBSIDIARY, entity=US_H2, amount=250000),
        E(15.5, K.OPERATE, entity=NM_H2, ec_cost=6000, output_value=8000),
        E(15.55, K.BUY_EC_OPEN_MARKET, entity=NM_H2, amount=4000),
        E(15.6, K.REMIT_CASH_FOR_EC, entity=NM_H2, cash=4000, ec_new=0),
        E(15.65, K.ISSUE_EC, amount=7000),
        E(15.65, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_H2, amount=7000),
        E(15.7, K.OPERATE, entity=NM_HC, ec_cost=20000, output_value=60000),
        E(15.75, K.BUY_EC_OPEN_MARKET, entity=NM_HC, amount=20000),
        E(15.8, K.REMIT_CASH_FOR_EC, entity=NM_HC, cash=40000, ec_new=0),
        E(15.85, K.ISSUE_EC, amount=10000),
        E(15.85, K.INVEST_EC_IN_SUBSIDIARY, entity=NM_HC, amount=10000),
    )
    return Scenario(
        name="new-energy",
        entities=(
            (NEW_ENERGY, Role.CURRENCY_FIRM.value),
            (NM_HC, Role.SUBSIDIARY.value),
            (NM_H2, Role.SUBSIDIARY.value),
            (US_HC, Role.SUBSIDIARY.value),
            (US_H2, Role.SUBSIDIARY.value),
            (OPEN_MARKET, Role.EXTERNAL.value),
        ),
        events=events,
        checkpoints=(0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0),
        growth_window=(2.0, 16.0),
        cap_table=CapTable(
            seed_invested=20,
            seed_post_valuation=60,
            ipo_raised=3000,
            ipo_post_valuation=15000,
        ),
    )


# ---------------------------------------------------------------------------
# Built-in comparison against a conventional high-velocity retailer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetEnergyComparison:
    """Four-year economics of the first hydrocarbon subsidiary next to a
    conventional big-box retailer of comparable enterprise value.

    The retailer's constants (activity, profit, savings velocity 20/yr)
    are fixed inputs; the subsidiary's side is measured off the scenario
    journal over the window."""

    window: tuple[float, float]
    activity_sub: int
    activity_retailer: int
    profit_sub: int
    profit_retailer: int
    savings_sub: int
    turnover_sub_years: float
    turnover_retailer_days: float

    @property
    def activity_ratio(self) -> float:
        return self.activity_sub / self.activity_retailer

    @property
    def profit_ratio(self) -> float:
        return self.profit_sub / self.profit_retailer

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "activity_sub": self.activity_sub,
            "activity_retailer": self.activity_retailer,
            "activity_ratio": self.activity_ratio,
            "profit_sub": self.profit_sub,
            "profit_retailer": self.profit_retailer,
            "profit_ratio": self.profit_ratio,
            "savings_sub": self.savings_sub,
            "turnover_sub_years": self.turnover_sub_years,
            "turnover_retailer_days": self.turnover_retailer_days,
        }


_RETAILER_ACTIVITY_4Y = 16000  # millions over four years
_RETAILER_PROFIT_4Y = 11000
_RETAILER_VELOCITY = 20.0  # savings turnovers per year


def target_energy_compare(
    scenario: Scenario | None = None,
    entity: str = NM_HC,
    window: tuple[float, float] = (4.0, 8.0),
) -> TargetEnergyComparison:
    """Measure the subsidiary's four-year activity, profit and savings
    turnover from the scenario journal and set them against the retailer
    constants."""
    scenario = scenario or new_energy_scenario()
    t0, t1 = window
    activity = 0
    revenue = 0
    production_spend = 0
    for ev in scenario.events:
        if ev.entity != entity or not (t0 < ev.time <= t1):
            continue
        if ev.kind is EventKind.OPERATE:
            activity += ev.ec_cost or 0
            production_spend += ev.ec_cost or 0
            if not ev.to_reserve:
                revenue += ev.output_value or 0
        elif ev.kind is EventKind.BUILD_CAPITAL:
            activity += ev.ec_cost or 0
        elif ev.kind is EventKind.SELL_RESERVE:
            revenue += ev.proceeds or 0
    result = run_scenario(scenario)
    savings = result.balances[t1][entity].get(AccountClass.EC_HELD, 0)
    if production_spend <= 0:
        raise DomainError(f"{entity!r} has no production spending in {window}")
    turnover_years = savings / (production_spend / (t1 - t0))
    return TargetEnergyComparison(
        window=window,
        activity_sub=activity,
        activity_retailer=_RETAILER_ACTIVITY_4Y,
        profit_sub=revenue - activity,
        profit_retailer=_RETAILER_PROFIT_4Y,
        savings_sub=savings,
        turnover_sub_years=turnover_years,
        turnover_retailer_days=365.0 / _RETAILER_VELOCITY,
    )


# ---------------------------------------------------------------------------
# Serialization and reports
# ---------------------------------------------------------------------------


def scenario_to_json(scenario: Scenario) -> str:
    doc = {
        "name": scenario.name,
        "entities": [{"name": n, "role": r} for n, r in scenario.entities],
        "events": [e.to_dict() for e in scenario.events],
        "checkpoints": list(scenario.checkpoints),
        "growth_window": list(scenario.growth_window) if scenario.growth_window else None,
        "cap_table": (
            {
                "seed_invested": scenario.cap_table.seed_invested,
                "seed_post_valuation": scenario.cap_table.seed_post_valuation,
                "ipo_raised": scenario.cap_table.ipo_raised,
                "ipo_post_valuation": scenario.cap_table.ipo_post_valuation,
            }
            if scenario.cap_table
            else None
        ),
    }
    return json.dumps(doc, indent=2) + "\n"


def scenario_from_json(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as ex:
        raise ParseError(f"scenario is not valid JSON: {ex}") from ex
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    try:
        entities = tuple(
            (d["name"], Role(d["role"]).value) for d in doc.get("entities", [])
        )
    except (KeyError, ValueError, TypeError) as ex:
        raise ParseError(f"bad entity declaration: {ex}") from ex
    events = tuple(ScenarioEvent.from_dict(d) for d in doc.get("events", []))
    cap = doc.get("cap_table")
    window = doc.get("growth_window")
    return Scenario(
        name=str(doc.get("name", "scenario")),
        entities=entities,
        events=events,
        checkpoints=tuple(float(t) for t in doc.get("checkpoints", [])),
        growth_window=tuple(window) if window else None,
        cap_table=CapTable(**cap) if cap else None,
    )


def _fmt_opt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def metrics_to_csv(snapshots: Sequence[MetricsSnapshot]) -> str:
    buf = io.StringIO()
    buf.write(
        "t,ec_supply,liquid_reserves,capital_reserves,total_value,"
        "liquid_ratio,total_ratio,m_e_observed,S0_observed\n"
    )
    for s in snapshots:
        buf.write(
            f"{float(s.t)!r},{s.ec_supply},{s.liquid_reserves},"
            f"{s.capital_reserves},{s.total_value},{_fmt_opt(s.liquid_ratio)},"
            f"{_fmt_opt(s.total_ratio)},{_fmt_opt(s.m_e_observed)},"
            f"{_fmt_opt(s.S0_observed)}\n"
        )
    return buf.getvalue()


def balances_to_csv(result: ScenarioResult) -> str:
    """Long-format balance sheets: one row per (checkpoint, entity, account)."""
    buf = io.StringIO()
    buf.write("t,entity,account,value\n")
    for t in sorted(result.balances):
        sheet = result.balances[t]
        for name in sorted(sheet):
            for acct in AccountClass:
                v = sheet[name].get(acct, 0)
                if v != 0:
                    buf.write(f"{float(t)!r},{name},{acct.value},{v}\n")
    return buf.getvalue()


def balance_report(world: World) -> str:
    """Human-readable per-entity balance sheets."""
    lines = []
    for e in world.entities.values():
        lines.append(f"== {e.name} ({e.role.value}) ==")
        for section, classes in (
            ("assets", ASSET_CLASSES),
            ("liabilities", LIABILITY_CLASSES),
            ("equity", EQUITY_CLASSES),
        ):
            rows = [
                (a.value, v) for a, v in sorted(
                    e.accounts.items(), key=lambda kv: kv[0].value
                ) if a in classes and v != 0
            ]
            total = {"assets": e.assets(), "liabilities": e.liabilities(),
                     "equity": e.equity()}[section]
            lines.append(f"  {section} (total {total:,}):")
            for name, v in rows:
                lines.append(f"    {name:<18} {v:>15,}")
        lines.append("")
    return "\n".join(lines)
