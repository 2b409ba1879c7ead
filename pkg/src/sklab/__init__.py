"""Shannon-Kotel'nikov mapping toolkit: geometry, distortion, asymptotics and simulation."""

__version__ = "0.1.0"
