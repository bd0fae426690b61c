"""Adaptive message passing (GSAMP) and adaptive-GSP baselines for online
estimation of time-varying graph signals."""

__version__ = "0.1.0"
