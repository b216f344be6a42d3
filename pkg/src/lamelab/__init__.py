"""Finite-difference laboratory for the thermoelastic Lamé system with
nonlinear damping: operators, integrator, Lyapunov diagnostics and
attractor experiments."""

__version__ = "0.1.0"
