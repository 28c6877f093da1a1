"""
Shared array aliases for kinspec.
"""

from typing import Callable, TypeAlias

import numpy as np

# One value per velocity node, shape (n,)
Vector: TypeAlias = np.ndarray

# Dense operator on the velocity grid, shape (n, n)
Matrix: TypeAlias = np.ndarray

# Stack of points in R^d, shape (m, d)
Points: TypeAlias = np.ndarray

# Angular factor b(cos theta) of the collision kernel, vectorized over c
AngularFunction: TypeAlias = Callable[[np.ndarray], np.ndarray]
