"""Generic critical-point properties of structured semi-algebraic problems under tilt and shift."""

__version__ = "0.1.0"
