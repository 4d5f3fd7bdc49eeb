"""Terahertz hybrid MIMO channel simulation, sparse Bayesian channel
estimation and beamspace-driven hybrid transceiver design."""

__version__ = "0.1.0"
