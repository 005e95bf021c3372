"""singular.mcmc."""

__version__ = "0.1.0"
