"""Directed Delayed Q-learning with E-value exploration bonuses, baselines and exact DP oracles."""

__version__ = "0.1.0"
