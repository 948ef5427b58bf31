"""Loss accounting package."""
