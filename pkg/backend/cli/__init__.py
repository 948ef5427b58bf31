"""Command-line package."""
