"""Core domain logic: models, moment dynamics, ensembles, robustness, optimization."""
