"""Neural-network solvers for continuous-time macro-finance models."""

__version__ = "0.1.0"
