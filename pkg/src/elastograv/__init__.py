"""Elastic-wave / gravity-perturbation forward model and moment-tensor inversion."""

__version__ = "0.1.0"
