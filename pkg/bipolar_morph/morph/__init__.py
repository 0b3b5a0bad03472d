"""Bipolar morphological layer and its table-driven activations."""

from bipolar_morph.morph.bm import (
    BMWeights,
    ConvGeometry,
    FCGeometry,
    KFactorReport,
    SaturationMonitor,
    SignPaths,
    bm_dot,
    bm_forward,
    convert_weights,
    k_factor,
    maxplus_correlate,
    sign_path_decompose,
)
from bipolar_morph.morph.lut import LutActivations, make_exp_ln_lut

__all__ = [
    "BMWeights",
    "ConvGeometry",
    "FCGeometry",
    "KFactorReport",
    "LutActivations",
    "SaturationMonitor",
    "SignPaths",
    "bm_dot",
    "bm_forward",
    "convert_weights",
    "k_factor",
    "make_exp_ln_lut",
    "maxplus_correlate",
    "sign_path_decompose",
]
