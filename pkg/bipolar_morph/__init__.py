"""Bipolar morphological neural networks.

Max-plus approximations of convolutional and fully connected layers that
replace every multiplication with additions, maxima and elementwise exp/ln,
together with weight conversion from trained networks and layer-by-layer
fine-tuning.
"""

__version__ = "0.1.0"
__author__ = "Your Name"

from bipolar_morph import config

__all__ = ["config"]
