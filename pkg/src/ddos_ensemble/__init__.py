"""Self-attention CNN weighted-ensemble toolkit for DDoS flow classification."""

__version__ = "0.1.0"
