"""Labeled cortical distance maps: distance fields, pooled-distance statistics,
and Monte Carlo size/power studies."""

from lcdm.npstats import Alternative, TestResult

__all__ = ["Alternative", "TestResult"]

__version__ = "0.1.0"
