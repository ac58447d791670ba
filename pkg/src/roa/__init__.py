"""Region-of-attraction estimation with verified Lyapunov functions."""

__version__ = "0.1.0"
