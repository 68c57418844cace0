"""Causal structure discovery for binary variables under a discrete latent class."""

__version__ = "0.1.0"
