"""Non-equilibrium Caldeira-Leggett toolkit."""

__version__ = "0.1.0"
