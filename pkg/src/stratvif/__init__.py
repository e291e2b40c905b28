"""Variance inflation from covariate adjustment in stratified two-arm trials."""
__version__ = "0.1.0"
