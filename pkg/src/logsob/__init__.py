"""Numerical laboratory for logarithmic Sobolev-norm growth.

A driven anharmonic oscillator pumps energy like log^2(t); transporting
coherent states along it makes quantum Sobolev norms grow like
log^r(2+t) inside an hbar-dependent time window.  The subpackages
verify every quantitative step of that chain: the classical energy
ledger, the variational flow bounds, the closed-form Gaussian
propagation, the grid Schrodinger solver, and the growth laws
themselves.
"""

__version__ = "0.1.0"
