"""Direct position determination of wideband emitters from phased-array stations."""

__version__ = "0.1.0"
