"""Node wrappers for the solver chains, one per CLI command."""
