"""Coverage-directed generation as noisy derivative-free optimization."""

__version__ = "0.1.0"
