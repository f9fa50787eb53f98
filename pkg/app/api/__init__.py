"""Simulation, distance and metrics services package."""
