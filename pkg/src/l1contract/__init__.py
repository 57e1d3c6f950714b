"""Monotone schemes, dual kernels and L1-contraction checks for degenerate convection-diffusion equations in 1-D."""

from . import dual, grid, levy, scheme, verify
from .errors import L1ContractError

__all__ = ["dual", "grid", "levy", "scheme", "verify", "L1ContractError"]
__version__ = "0.1.0"
