"""Table-driven exp/ln for inference.

exp is sampled at bin midpoints on [-R, R]. ln reduces x = m * 2**e with
``np.frexp`` and looks up ln(m) for the mantissa in [0.5, 1) plus e * ln 2 from
a small exponent table, so the relative precision does not depend on the
magnitude of x. Inputs outside the table range clamp to the end bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bipolar_morph.errors import DomainError


@dataclass(frozen=True)
class LutActivations:
    """Piecewise-constant exp and ln tables over a symmetric range."""

    n_bins: int
    value_range: float
    exp_table: np.ndarray
    ln_mantissa_table: np.ndarray
    ln_exponent_table: np.ndarray
    min_exponent: int

    @property
    def exp_bin_width(self) -> float:
        return 2.0 * self.value_range / self.n_bins

    def exp(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        index = np.floor((x + self.value_range) / self.exp_bin_width)
        index = np.clip(np.nan_to_num(index, neginf=0.0), 0, self.n_bins - 1).astype(np.intp)
        out = self.exp_table[index]
        return np.where(np.isneginf(x), 0.0, out)

    def ln(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if (x < 0).any():
            raise DomainError("ln table is defined on x >= 0 only")
        clipped = np.clip(x, np.exp(-self.value_range), np.exp(self.value_range))
        mantissa, exponent = np.frexp(clipped)

        m_index = np.floor((mantissa - 0.5) * 2.0 * self.n_bins).astype(np.intp)
        m_index = np.clip(m_index, 0, self.n_bins - 1)
        e_index = np.clip(exponent - self.min_exponent, 0, self.ln_exponent_table.size - 1)

        out = self.ln_mantissa_table[m_index] + self.ln_exponent_table[e_index]
        return np.where(x == 0, -np.inf, out)


def make_exp_ln_lut(n_bins: int, value_range: float) -> LutActivations:
    """Build exp/ln tables with ``n_bins`` entries each.

    Args:
        n_bins: Table size for exp and for the ln mantissa
        value_range: R; exp covers [-R, R] and ln covers [exp(-R), exp(R)]

    Returns:
        LutActivations usable as ``bm_forward(..., activations=...)``
    """
    if n_bins < 2:
        raise ValueError(f"n_bins must be at least 2, got {n_bins}")
    if not np.isfinite(value_range) or value_range <= 0:
        raise ValueError(f"value_range must be positive and finite, got {value_range}")

    edges = np.linspace(-value_range, value_range, n_bins + 1)
    exp_table = np.exp(0.5 * (edges[:-1] + edges[1:]))

    m_edges = np.linspace(0.5, 1.0, n_bins + 1)
    ln_mantissa_table = np.log(0.5 * (m_edges[:-1] + m_edges[1:]))

    _, low = np.frexp(np.exp(-value_range))
    _, high = np.frexp(np.exp(value_range))
    exponents = np.arange(int(low), int(high) + 1)

    return LutActivations(
        n_bins=n_bins,
        value_range=float(value_range),
        exp_table=exp_table,
        ln_mantissa_table=ln_mantissa_table,
        ln_exponent_table=exponents * np.log(2.0),
        min_exponent=int(low),
    )
