""" Sub-sampled k-NN estimation and inference for conditional moment models """

__version__ = "0.1.0"
