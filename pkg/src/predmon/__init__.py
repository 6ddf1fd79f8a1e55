"""Forecast-driven multi-agent DQN monitoring."""

__version__ = "0.1.0"
