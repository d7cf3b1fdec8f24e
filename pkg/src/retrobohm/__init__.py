"""Two-time conditional currents and retrocausal flow lines in 1+1 dimensions."""

__version__ = "0.1.0"
