"""Deep kernelized autoencoders with kernel PCA and pre-image baselines."""

__version__ = "0.1.0"
