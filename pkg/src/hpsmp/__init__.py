"""Hybrid text-and-price stock movement prediction with strategy backtesting."""

__version__ = "0.1.0"
