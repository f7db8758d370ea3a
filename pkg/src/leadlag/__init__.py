"""Lead-lag analysis of multi-maturity futures tick data."""

__version__ = "0.1.0"
