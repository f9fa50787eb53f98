"""Command Line Interface package."""
