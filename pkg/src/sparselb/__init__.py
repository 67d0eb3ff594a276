"""Sparse-geometry D3Q19 lattice Boltzmann solver for vascular flow."""

__version__ = "0.1.0"
