"""ptlab: prescribed-time control laboratory."""

__version__ = "0.1.0"
