"""Single particle battery model with a voltage + expansion state observer."""

__version__ = "0.1.0"
