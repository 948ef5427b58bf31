"""DG planning package."""
