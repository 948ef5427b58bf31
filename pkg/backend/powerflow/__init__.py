"""Power flow package."""
