"""Energy-stable simulation of compressible, partially miscible two-phase flow."""

__version__ = "0.1.0"
