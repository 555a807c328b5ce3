"""
ghartree-lab
Pseudospectral toolkit for the generalized Hartree equation
"""

__version__ = "0.1.0"
