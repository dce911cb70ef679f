"""Quasi-periodic WaveNet vocoder with pitch-dependent dilated convolutions."""

__version__ = "0.1.0"
