"""Integral-equation solver for the c-vector polarization fields of a dispersive
dielectric object coupled to the quantized electromagnetic field."""

__version__ = "0.1.0"
