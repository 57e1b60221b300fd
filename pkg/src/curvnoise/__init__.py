"""curvnoise: exact information matrices, noisy-quadratic dynamics, and
generalization-gap criteria for small model families."""

__version__ = "0.1.0"
