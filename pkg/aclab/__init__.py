"""Numerical laboratory for one-phase Alt-Caffarelli minimizers."""
