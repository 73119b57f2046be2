"""
Oligodyn: Markov-perfect equilibria of dynamic duopoly pricing models.

Solvers for learning by doing, switching costs and predatory pricing,
with comparative-statics sweeps and Monte Carlo simulation behind one CLI.
"""

__version__ = "1.0.0"
