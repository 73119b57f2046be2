"""Equilibrium solvers for the learning-by-doing, switching-cost and predation models."""

from .params import LbdParams, PredationParams, SwitchingParams

__all__ = ['LbdParams', 'SwitchingParams', 'PredationParams']
