"""Run output storage package."""
