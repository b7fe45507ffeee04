"""Joint normal/emergency scheduling of reconfigurable active distribution networks."""

__version__ = "0.1.0"
