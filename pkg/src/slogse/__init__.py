"""Simulation and numerical certification for the stochastic logarithmic
Schrodinger equation driven by saturated Marcus-type Levy noise."""

__version__ = "0.1.0"
