"""Spectral Monge-Ampere type flows on flat tori and numerical checks of their a priori estimates."""

__version__ = "0.1.0"
