"""Score-driven trading simulation, portfolio weighting and Monte Carlo.

Accounting is plain Python arithmetic so that exact number types
(``fractions.Fraction``) pass through unchanged; this is how the
reconciliation properties are tested without rounding.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .stats import sharpe

BUY, SELL, HOLD = "BUY", "SELL", "HOLD"
KINDS = ("fifty_fifty", "sixty_forty", "hold_signal", "hold_period")
CLI_STRATEGIES = {"5050": "fifty_fifty", "6040": "sixty_forty", "hold1": "hold_signal",
                  "hold2": "hold_period"}


class DataError(ValueError):
    """Invalid market data (for example a non-positive price)."""


class AlignmentError(ValueError):
    """Scores, prices or ledgers do not line up by date."""


@dataclass
class StrategyConfig:
    kind: str = "fifty_fifty"
    buy_threshold: Optional[float] = None
    sell_threshold: Optional[float] = None
    transaction_cost_rate: float = 0.003
    shares: int = 100
    start_date: Optional[date] = None
    end_date: Optional[date] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        default_buy, default_sell = (0.6, 0.4) if self.kind == "sixty_forty" else (0.5, 0.5)
        if self.buy_threshold is None:
            self.buy_threshold = default_buy
        if self.sell_threshold is None:
            self.sell_threshold = default_sell
        if not 0 <= self.sell_threshold <= self.buy_threshold <= 1:
            raise ValueError("need 0 <= sell_threshold <= buy_threshold <= 1")
        if self.transaction_cost_rate < 0:
            raise ValueError("transaction cost rate must be >= 0")
        if self.shares < 1:
            raise ValueError("shares must be >= 1")

    @classmethod
    def from_cli(cls, name: str, **kw) -> "StrategyConfig":
        return cls(kind=CLI_STRATEGIES.get(name, name), **kw)


def signal(score: float, config: StrategyConfig) -> str:
    """SELL below the sell threshold, BUY at or above the buy threshold, else HOLD."""
    if score < config.sell_threshold:
        return SELL
    if score >= config.buy_threshold:
        return BUY
    return HOLD


def daily_return(p_t, p_prev):
    if p_t <= 0 or p_prev <= 0:
        raise DataError("prices must be positive")
    return p_t / p_prev - 1


def weighted_return(w_prev, r_t):
    if not 0 <= w_prev <= 1:
        raise ValueError("weight must be in [0, 1]")
    return w_prev * r_t


@dataclass
class LedgerEvent:
    date: date
    action: str
    price: float
    cost: float
    position: int
    cash_delta: float
    signal: str = HOLD
    forced_close: bool = False


@dataclass
class TradeLedger:
    events: List[LedgerEvent]
    shares: int
    initial_cash: float = 0
    daily_returns: List[float] = field(default_factory=list)
    weighted_returns: List[float] = field(default_factory=list)
    dates: List[date] = field(default_factory=list)

    @property
    def fills(self) -> List[LedgerEvent]:
        return [e for e in self.events if e.action != HOLD]

    @property
    def n_trades(self) -> int:
        return len(self.fills)

    @property
    def final_cash(self):
        cash = self.initial_cash
        for e in self.events:
            cash = cash + e.cash_delta
        return cash

    @property
    def profit(self):
        """Sum over fills of sale proceeds minus purchase outlays minus costs."""
        total = 0
        for e in self.fills:
            notional = e.price * self.shares
            total = total + (notional if e.action == SELL else -notional) - e.cost
        return total

    @property
    def forced_close(self) -> bool:
        return any(e.forced_close for e in self.events)

    def round_trips(self):
        """(buy event, sell event) pairs in order."""
        fills = self.fills
        return list(zip(fills[0::2], fills[1::2]))

    @property
    def trade_returns(self) -> List[float]:
        """Net profit of each round trip over its purchase notional."""
        out = []
        for b, s in self.round_trips():
            notional = b.price * self.shares
            out.append((s.price * self.shares - notional - b.cost - s.cost) / notional)
        return out

    @property
    def cumulative_trade_return(self):
        acc = 1
        for r in self.trade_returns:
            acc = acc * (1 + r)
        return acc - 1

    @property
    def cumulative_daily_return(self):
        acc = 1
        for r in self.weighted_returns:
            acc = acc * (1 + r)
        return acc - 1

    def summary(self) -> dict:
        rets = [float(r) for r in self.weighted_returns]
        sr = sharpe(rets) if len(rets) >= 2 else None
        return {
            "profit": float(self.profit),
            "return": float(self.cumulative_trade_return),
            "return_per_trade_mean": float(np.mean(self.trade_returns)) if self.trade_returns else None,
            "return_daily_cumulative": float(self.cumulative_daily_return),
            "E(R)": float(np.mean(rets)) if rets else None,
            "Std(R)": float(np.std(rets, ddof=1)) if len(rets) >= 2 else None,
            "sharpe": sr,
            "sharpe_pct": None if sr is None else f"{100 * sr:.2f}%",
            "n_trades": self.n_trades,
            "forced_close": self.forced_close,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Date", "Action", "Price", "Cost", "Position", "CashDelta"])
            for e in self.events:
                w.writerow([e.date.isoformat(), e.action, repr(float(e.price)), repr(float(e.cost)),
                            e.position, repr(float(e.cash_delta))])

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _window(dates: Sequence[date], config: StrategyConfig):
    lo = 0
    hi = len(dates)
    if config.start_date is not None:
        while lo < hi and dates[lo] < config.start_date:
            lo += 1
    if config.end_date is not None:
        while hi > lo and dates[hi - 1] > config.end_date:
            hi -= 1
    return lo, hi


def _actions(sigs: Sequence[str], config: StrategyConfig) -> List[str]:
    """Desired action per day for the hold strategies; plain signals otherwise."""
    n = len(sigs)
    if config.kind == "hold_period":
        acts = [HOLD] * n
        if n:
            acts[0] = BUY
        if n > 1:
            acts[-1] = SELL
        return acts
    if config.kind == "hold_signal":
        acts = [HOLD] * n
        first_buy = next((i for i, s in enumerate(sigs) if s == BUY), None)
        if first_buy is None:
            return acts
        acts[first_buy] = BUY
        last_sell = next((i for i in range(n - 1, first_buy, -1) if sigs[i] == SELL), None)
        if last_sell is not None:
            acts[last_sell] = SELL
        return acts
    return list(sigs)


def simulate(dates: Sequence[date], prices: Sequence, scores: Optional[Sequence[float]],
             config: StrategyConfig, signals: Optional[Sequence[str]] = None) -> TradeLedger:
    """Walk the trading days in order and fill at each day's adjusted close.

    Either ``scores`` (mapped through :func:`signal`) or precomputed
    ``signals`` drive the trades.  A BUY fills only when flat and a SELL only
    when long, so positions alternate.  A position still open on the last day
    of the window is closed at that day's price and flagged ``forced_close``;
    a BUY on that last day is ignored.
    """
    if len(dates) != len(prices):
        raise AlignmentError("dates and prices differ in length")
    if signals is None:
        if scores is None or len(scores) != len(dates):
            raise AlignmentError("a score is required for every trading day")
        signals = [signal(s, config) for s in scores]
    elif len(signals) != len(dates):
        raise AlignmentError("a signal is required for every trading day")
    for p in prices:
        if p <= 0:
            raise DataError("prices must be positive")
    lo, hi = _window(dates, config)
    dates, prices, signals = list(dates[lo:hi]), list(prices[lo:hi]), list(signals[lo:hi])
    acts = _actions(signals, config)
    rate, shares = config.transaction_cost_rate, config.shares
    position = 0
    events, daily, weighted = [], [], []
    for i, (d, p, a) in enumerate(zip(dates, prices, acts)):
        if i > 0:
            r = daily_return(p, prices[i - 1])
            daily.append(r)
            weighted.append(weighted_return(1 if position else 0, r))
        forced = False
        if i == len(dates) - 1:
            if position and a != SELL:
                a, forced = SELL, True
            elif not position and a == BUY:
                # an entry on the final day could only be closed at the same price
                a = HOLD
        notional = p * shares
        if a == BUY and not position:
            cost = rate * notional
            position = shares
            events.append(LedgerEvent(d, BUY, p, cost, position, -notional - cost, signals[i]))
        elif a == SELL and position:
            cost = rate * notional
            position = 0
            events.append(LedgerEvent(d, SELL, p, cost, position, notional - cost, signals[i], forced))
        else:
            events.append(LedgerEvent(d, HOLD, p, 0, position, 0, signals[i]))
    return TradeLedger(events, shares, 0, daily, weighted, dates)


def market_weights(prices: Sequence[float]) -> List[float]:
    """w_i = p_i / sum_j p_j."""
    if not len(prices):
        raise DataError("no prices")
    if any(p <= 0 for p in prices):
        raise DataError("prices must be positive")
    total = sum(prices)
    return [p / total for p in prices]


def equal_weights(n: int) -> List[float]:
    return [1.0 / n] * n


@dataclass
class PortfolioStats:
    expected_return: float
    std_return: float
    total_profit: float
    combined_returns: List[float]


def portfolio_stats(ledgers: Sequence[TradeLedger], weights: Sequence[float]) -> PortfolioStats:
    """E(R) = sum_i w_i mean(R_i); Std(R) from the weighted daily combination."""
    if len(ledgers) != len(weights):
        raise AlignmentError("one weight per ledger")
    if not ledgers:
        raise AlignmentError("no ledgers")
    ref = ledgers[0].dates
    for lg in ledgers[1:]:
        if lg.dates != ref:
            raise AlignmentError("ledgers cover different dates")
    if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
        raise ValueError("weights must be non-negative and sum to 1")
    mats = np.array([[float(r) for r in lg.weighted_returns] for lg in ledgers], dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    combined = w @ mats if mats.size else np.zeros(0)
    er = float(sum(wi * float(np.mean(row)) for wi, row in zip(w, mats))) if mats.shape[1] else 0.0
    sd = float(np.std(combined, ddof=1)) if combined.size >= 2 else float("nan")
    profit = float(sum(float(lg.profit) for lg in ledgers))
    return PortfolioStats(er, sd, profit, combined.tolist())


@dataclass
class TickerData:
    dates: List[date]
    prices: List[float]
    scores: List[float]


def monte_carlo(universe: Mapping[str, TickerData], config: StrategyConfig, runs: int = 100,
                pick: int = 6, seed: int = 0) -> List[dict]:
    """Profit of ``runs`` random ``pick``-ticker portfolios.

    Each run draws tickers without replacement from the sorted universe with
    its own generator spawned from ``seed``, so any run can be replayed alone.
    """
    names = sorted(universe)
    if len(names) < pick:
        raise ValueError(f"universe of {len(names)} tickers is smaller than pick={pick}")
    if runs < 1 or pick < 1:
        raise ValueError("runs and pick must be >= 1")
    cache: Dict[str, TradeLedger] = {}

    def ledger(name):
        if name not in cache:
            t = universe[name]
            cache[name] = simulate(t.dates, t.prices, t.scores, config)
        return cache[name]

    out = []
    for run, child in enumerate(np.random.SeedSequence(seed).spawn(runs)):
        rng = np.random.default_rng(child)
        chosen = sorted(names[i] for i in rng.choice(len(names), size=pick, replace=False))
        profit = sum(float(ledger(n).profit) for n in chosen)
        out.append({"run": run, "tickers": chosen, "profit": profit})
    return out


def write_monte_carlo(path, results: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Run", "Tickers", "Profit"])
        for r in results:
            w.writerow([r["run"], " ".join(r["tickers"]), repr(r["profit"])])
