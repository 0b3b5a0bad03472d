"""Tests for table-driven exp/ln."""

import numpy as np
import pytest

from bipolar_morph.errors import DomainError
from bipolar_morph.morph.lut import make_exp_ln_lut


@pytest.fixture(scope="module")
def fine_lut():
    """2^20-bin tables over [-30, 30]."""
    return make_exp_ln_lut(1 << 20, 30.0)


def test_exp_relative_error(fine_lut):
    """Max relative error of exp on [-10, 10] is below 1e-4."""
    x = np.linspace(-10.0, 10.0, 200_001)
    error = np.abs(fine_lut.exp(x) - np.exp(x)) / np.exp(x)
    assert error.max() < 1e-4


def test_ln_absolute_error(fine_lut):
    """ln is accurate across magnitudes thanks to mantissa/exponent reduction."""
    x = np.exp(np.linspace(-10.0, 10.0, 100_001))
    assert np.abs(fine_lut.ln(x) - np.log(x)).max() < 1e-5


def test_ln_zero_is_neg_inf(fine_lut):
    """ln(0) is NEG_INF."""
    assert fine_lut.ln(np.array([0.0]))[0] == -np.inf


def test_exp_neg_inf_is_zero(fine_lut):
    """exp(NEG_INF) is exactly 0."""
    assert fine_lut.exp(np.array([-np.inf]))[0] == 0.0


def test_ln_negative_is_domain_error(fine_lut):
    """Negative inputs are outside the table domain."""
    with pytest.raises(DomainError):
        fine_lut.ln(np.array([-1.0]))


def test_out_of_range_inputs_clamp():
    """Inputs beyond the range read the end bins."""
    lut = make_exp_ln_lut(16, 5.0)

    assert lut.exp(np.array([100.0]))[0] == lut.exp_table[-1]
    assert lut.exp(np.array([-100.0]))[0] == lut.exp_table[0]
    assert lut.ln(np.array([1e300]))[0] == pytest.approx(5.0, abs=1.0)


@pytest.mark.parametrize(("n_bins", "value_range"), [(1, 10.0), (16, 0.0), (16, np.inf)])
def test_invalid_tables(n_bins, value_range):
    """At least two bins over a positive finite range."""
    with pytest.raises(ValueError):
        make_exp_ln_lut(n_bins, value_range)
