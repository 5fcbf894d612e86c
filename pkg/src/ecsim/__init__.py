"""Electronic-currency sub-economy simulation toolkit.

Modules
-------
dynamics   conservative phase-space models, action/angle maps, equilibria
risk       drift-diffusion action dynamics: scalings, grid solver, sampling
control    stabilization policies, dissipation embedding, gain/arbitrage demos
valuation  currency demand, operating-point optimization, NPV comparisons
ledger     integer double-entry scenario engine and the built-in growth story
cli        command-line front end (`ecsim`)
"""

__version__ = "0.1.0"
