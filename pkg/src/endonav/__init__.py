"""Contact-aided endoscope navigation in a deformable cavity."""

__version__ = "0.1.0"
