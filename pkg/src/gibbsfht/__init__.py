"""Gibbs sampling for lattice Ginzburg-Landau models with ensemble AIS, and
density estimation with functional hierarchical tensors fitted by sketching."""

__version__ = "0.1.0"
