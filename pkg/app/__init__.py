"""FitzHugh-Nagumo mean-field simulator package."""
