"""Stochastic modelling of PCC voltage under rooftop PV, and tap-changer control built on it."""

__version__ = "0.1.0"
