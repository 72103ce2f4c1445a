"""Wiener randomization, modulation-space norms and probabilistic Strichartz checks on a periodic box."""

__version__ = "0.1.0"
