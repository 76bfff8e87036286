"""Toy radiograph diffusion, super-resolution and evaluation.

Images are float64 numpy arrays of shape (H, W) or (H, W, C) holding
intensities in [0, 1]. Errors surface as subclasses of ValueError, OSError,
ArithmeticError or RuntimeError.
"""

from ._core import *  # noqa: F401,F403

__version__ = "0.1.0"
