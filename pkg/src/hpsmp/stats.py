"""Sharpe ratio and Welch's t-test with a Student-t CDF built on the
regularized incomplete beta function."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special


def sharpe(returns: Sequence[float], risk_free: float = 0.0) -> Optional[float]:
    """mean(returns - risk_free) / sample std(returns); None when undefined."""
    r = np.asarray(returns, dtype=np.float64)
    if r.size < 2:
        return None
    sd = r.std(ddof=1)
    if not sd > 0:
        return None
    return float((r - risk_free).mean() / sd)


def t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    x = df / (df + t * t)
    tail = 0.5 * special.betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t >= 0 else tail


def t_sf(t: float, df: float) -> float:
    """P(T > t), computed without cancellation in the upper tail."""
    x = df / (df + t * t)
    tail = 0.5 * special.betainc(df / 2.0, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


def t_quantile(q: float, df: float) -> float:
    """Inverse of :func:`t_cdf` by bracketed root finding."""
    if not 0 < q < 1:
        raise ValueError("q must be in (0, 1)")
    if q == 0.5:
        return 0.0
    hi = 1.0
    while (t_cdf(hi, df) - q) * (t_cdf(-hi, df) - q) > 0:
        hi *= 2.0
    return optimize.brentq(lambda t: t_cdf(t, df) - q, -hi, hi, xtol=1e-14, rtol=1e-14)


def critical_value(alpha: float, df: float, two_sided: bool = True) -> float:
    return t_quantile(1.0 - (alpha / 2.0 if two_sided else alpha), df)


@dataclass
class TTestResult:
    t_value: Optional[float]
    p_value: Optional[float]
    df: Optional[float]
    reject_at_95: bool
    alternative: str = "two-sided"

    @property
    def defined(self) -> bool:
        return self.t_value is not None


def welch_df(va: float, na: int, vb: float, nb: int) -> float:
    qa, qb = va / na, vb / nb
    return (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))


def p_value(t: float, df: float, alternative: str = "two-sided") -> float:
    if alternative == "two-sided":
        return min(1.0, 2.0 * t_sf(abs(t), df))
    if alternative == "greater":
        return t_sf(t, df)
    if alternative == "less":
        return t_cdf(t, df)
    raise ValueError(f"unknown alternative {alternative!r}")


def t_test(returns_a: Sequence[float], returns_b: Sequence[float],
           alternative: str = "two-sided", alpha: float = 0.05) -> TTestResult:
    """Welch's unequal-variance two-sample t-test of mean(a) vs mean(b).

    The degrees of freedom follow Welch-Satterthwaite.  When both samples have
    zero variance the statistic is undefined (t and p are None).
    """
    a = np.asarray(returns_a, dtype=np.float64)
    b = np.asarray(returns_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    se2 = va / a.size + vb / b.size
    if not se2 > 0:
        return TTestResult(None, None, None, False, alternative)
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    df = welch_df(va, a.size, vb, b.size)
    p = p_value(t, df, alternative)
    return TTestResult(t, p, df, bool(p < alpha), alternative)
