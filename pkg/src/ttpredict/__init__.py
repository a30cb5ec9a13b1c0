"""Causal inference by predictive imputation of a hypothetical randomized target trial."""

__version__ = "0.1.0"
