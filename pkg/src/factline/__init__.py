"""Fact-checked story analysis: harmonize, represent, cluster, classify, compare sites."""

__version__ = "0.1.0"
