"""Minimal tensor and reverse-mode differentiation engine."""

from bipolar_morph.autograd import ops
from bipolar_morph.autograd.gradcheck import grad_check
from bipolar_morph.autograd.tensor import Graph, Tensor, backward, no_grad

__all__ = ["Graph", "Tensor", "backward", "grad_check", "no_grad", "ops"]
