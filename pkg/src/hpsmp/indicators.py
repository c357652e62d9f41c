"""SMA and MACD baselines and their crossover signals."""

import csv
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

BUY, SELL, HOLD = "BUY", "SELL", "HOLD"


def sma(prices: Sequence[float], window: int = 5) -> List[Optional[float]]:
    """Trailing mean; the first ``window - 1`` positions are None.

    Returns an empty list (with a warning) when the series is shorter than
    the window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    p = np.asarray(prices, dtype=np.float64)
    if window > p.size:
        warnings.warn(f"series of length {p.size} is shorter than window {window}")
        return []
    means = np.lib.stride_tricks.sliding_window_view(p, window).mean(axis=1)
    return [None] * (window - 1) + means.tolist()


def ema(prices: Sequence[float], period: int) -> List[float]:
    """e_0 = p_0; e_t = a p_t + (1 - a) e_{t-1} with a = 2 / (period + 1)."""
    if period < 1:
        raise ValueError("period must be >= 1")
    alpha = 2.0 / (period + 1.0)
    out = []
    for p in prices:
        out.append(float(p) if not out else alpha * p + (1.0 - alpha) * out[-1])
    return out


@dataclass
class MacdState:
    fast: int = 12
    slow: int = 26
    signal_period: int = 9
    value: List[float] = field(default_factory=list)
    signal: List[float] = field(default_factory=list)
    divergence: List[float] = field(default_factory=list)
    actions: List[str] = field(default_factory=list)


def macd(prices: Sequence[float], a: int = 12, b: int = 26, c: int = 9) -> MacdState:
    """MACD value, signal and divergence series with crossover actions.

    BUY when the divergence moves from <= 0 to > 0, SELL when it moves from
    > 0 to <= 0.
    """
    if min(a, b, c) < 1 or a >= b:
        raise ValueError("need 1 <= a < b and c >= 1")
    if len(prices) <= b:
        raise ValueError(f"series of length {len(prices)} is too short for slow period {b}")
    fast, slow = ema(prices, a), ema(prices, b)
    value = [f - s for f, s in zip(fast, slow)]
    sig = ema(value, c)
    div = [v - s for v, s in zip(value, sig)]
    actions = [HOLD]
    for prev, cur in zip(div, div[1:]):
        if prev <= 0 < cur:
            actions.append(BUY)
        elif cur <= 0 < prev:
            actions.append(SELL)
        else:
            actions.append(HOLD)
    return MacdState(a, b, c, value, sig, div, actions)


def sma_signal(prices: Sequence[float], window: int = 5) -> List[str]:
    """BUY when price crosses above its SMA, SELL when it crosses below.

    A crossing needs a defined SMA on both days, so the first ``window``
    positions are always HOLD.
    """
    avg = sma(prices, window)
    if not avg:
        return []
    out = [HOLD] * len(prices)
    for t in range(window, len(prices)):
        prev = prices[t - 1] - avg[t - 1]
        cur = prices[t] - avg[t]
        if prev <= 0 < cur:
            out[t] = BUY
        elif cur < 0 <= prev:
            out[t] = SELL
    return out


def write_macd(path, dates, state: MacdState) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Date", "Value", "Signal", "Divergence", "Action"])
        for row in zip(dates, state.value, state.signal, state.divergence, state.actions):
            w.writerow([row[0].isoformat(), repr(row[1]), repr(row[2]), repr(row[3]), row[4]])


def write_sma(path, dates, avg: Sequence[Optional[float]], actions: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Date", "SMA", "Action"])
        for d, v, act in zip(dates, avg, actions):
            w.writerow([d.isoformat(), "" if v is None else repr(v), act])
