"""Discrete quaternionic m-Hessian operators, capacities and energies."""
from __future__ import annotations

__version__ = "0.1.0"
