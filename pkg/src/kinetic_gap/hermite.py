"""Orthonormal probabilists' Hermite polynomials and the weighted velocity basis.

All velocity-space functions are expanded as f_i(v) = M_i^{1/2}(v) p_i(v) with
p_i a polynomial; the basis functions are

    e_{alpha,i}(v) = M_i^{1/2}(v) H_alpha(v) / rho_i^{1/2}
                   = (2*pi)^{-3/4} exp(-|v|^2/4) H_alpha(v),

where H_alpha is the tensor product of 1-D polynomials h_k orthonormal with
respect to the standard Gaussian weight (2*pi)^{-1/2} exp(-x^2/2).  The
species weight cancels, so every species shares one orthonormal family and
the discrete L^2_v Gram is the identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["hermite_table_1d", "multi_indices", "hermite_table_3d", "HermiteBasis"]


def hermite_table_1d(x, deg: int) -> np.ndarray:
    """Values h_0(x)..h_deg(x) of the orthonormal probabilists' Hermite family.

    Recurrence: h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1), h_0 = 1,
    h_1 = x.  Returns an array of shape x.shape + (deg+1,).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (deg + 1,))
    out[..., 0] = 1.0
    if deg >= 1:
        out[..., 1] = x
    for k in range(1, deg):
        out[..., k + 1] = (x * out[..., k] - math.sqrt(k) * out[..., k - 1]) \
            / math.sqrt(k + 1)
    return out


@lru_cache(maxsize=None)
def multi_indices(N: int) -> np.ndarray:
    """All 3-D multi-indices alpha with |alpha| <= N, graded lexicographic."""
    idx = []
    for total in range(N + 1):
        for a in range(total, -1, -1):
            for b in range(total - a, -1, -1):
                idx.append((a, b, total - a - b))
    arr = np.array(idx, dtype=np.intp)
    arr.setflags(write=False)
    return arr


def hermite_table_3d(points: np.ndarray, N: int) -> np.ndarray:
    """Tensor Hermite values H_alpha(points) for all |alpha| <= N.

    ``points`` has shape (m, 3); the result has shape (m, nb) with
    nb = C(N+3, 3), ordered as :func:`multi_indices`.
    """
    points = np.asarray(points, dtype=float)
    idx = multi_indices(N)
    t0 = hermite_table_1d(points[:, 0], N)
    t1 = hermite_table_1d(points[:, 1], N)
    t2 = hermite_table_1d(points[:, 2], N)
    out = t0[:, idx[:, 0]] * t1[:, idx[:, 1]]
    out *= t2[:, idx[:, 2]]
    return out


@dataclass(frozen=True)
class HermiteBasis:
    """Truncated weighted Hermite basis shared by all species.

    Coefficient layout is species-major: entry (i, a) of a coefficient
    vector sits at index i * per_species_size + a.
    """
    N: int
    n_species: int

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("truncation degree N must be >= 0")
        if self.n_species < 1:
            raise ValueError("need at least one species")

    @property
    def indices(self) -> np.ndarray:
        return multi_indices(self.N)

    @property
    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    @property
    def per_species_size(self) -> int:
        return math.comb(self.N + 3, 3)

    @property
    def total_size(self) -> int:
        return self.n_species * self.per_species_size

    def species_slice(self, i: int) -> slice:
        nb = self.per_species_size
        return slice(i * nb, (i + 1) * nb)

    def eval_polynomials(self, points: np.ndarray) -> np.ndarray:
        """H_alpha at the given velocity points, shape (m, per_species_size)."""
        return hermite_table_3d(points, self.N)

    def degree_mask(self, max_degree: int) -> np.ndarray:
        """Boolean mask over the full coefficient layout, |alpha| <= max_degree."""
        per = self.degrees <= max_degree
        return np.tile(per, self.n_species)
