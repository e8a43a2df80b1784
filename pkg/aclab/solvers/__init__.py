"""Computational chains: cones, Jacobi spectra, grid minimizers, sweeps."""
