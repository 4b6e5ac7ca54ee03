"""Social-graph invariant learning for recommendation."""
__version__ = "0.1.0"
