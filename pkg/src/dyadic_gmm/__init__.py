"""Semiparametric GMM estimation of fixed effects in dyadic network formation models."""

__version__ = "0.1.0"
