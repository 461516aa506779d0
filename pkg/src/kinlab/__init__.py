"""Numerical laboratory for kinetic Fokker-Planck regularity experiments."""

__version__ = "0.1.0"

from . import geometry, gridfn, kernel, covering, solvers, degiorgi

__all__ = ["geometry", "gridfn", "kernel", "covering", "solvers", "degiorgi",
           "__version__"]
