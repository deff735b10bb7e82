"""Epsilon-drawdown detection, power-law tail fitting and dragon-king tests."""

from epsdd._kernel import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
