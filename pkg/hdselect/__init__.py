"""High-dimensional sparse regression: penalized estimation and post-selection inference."""

__version__ = "0.1.0"
