"""Feeder model and parser package."""
