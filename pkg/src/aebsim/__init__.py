"""Closed-loop AEB/FCW consumer-test simulator and evaluation harness."""

__version__ = "0.1.0"
