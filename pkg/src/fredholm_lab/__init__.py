"""Finite-lattice laboratory for bulk and edge Fredholm indices of 2D insulators."""

__version__ = "0.1.0"
