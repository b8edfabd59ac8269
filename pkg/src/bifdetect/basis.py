"""Constant-free monomial dictionaries and their Jacobians."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class PolyBasis:
    """Monomials of total degree ``1..d`` in ``n`` variables.

    Ordering is graded: all degree-1 monomials first in coordinate order, then
    degree 2, and so on; within a degree the exponent tuples descend
    lexicographically, e.g. ``x1^2, x1 x2, x2^2``.
    """

    n: int
    d: int
    exponents: tuple

    @property
    def N(self) -> int:
        return len(self.exponents)

    @cached_property
    def _exp(self):
        return np.array(self.exponents, dtype=np.intp).reshape(self.N, self.n)

    def _powers(self, x):
        # table[..., p, r] = x_r ** p for p = 0..d
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise InvalidInputError(f"expected states with {self.n} coordinates")
        table = np.empty(x.shape[:-1] + (self.d + 1, self.n))
        table[..., 0, :] = 1.0
        for p in range(1, self.d + 1):
            table[..., p, :] = table[..., p - 1, :] * x
        return table

    def eval(self, x) -> np.ndarray:
        """Feature vector(s): ``(..., n) -> (..., N)``."""
        table = self._powers(x)
        cols = np.arange(self.n)
        return np.prod(table[..., self._exp, cols], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        """``d phi / d x``: ``(..., n) -> (..., N, n)``."""
        table = self._powers(x)
        E = self._exp
        cols = np.arange(self.n)
        factors = table[..., E, cols]  # (..., N, n)
        out = np.empty(factors.shape)
        lowered = table[..., np.maximum(E - 1, 0), cols] * E
        for r in range(self.n):
            f = factors.copy()
            f[..., r] = lowered[..., r]
            out[..., r] = np.prod(f, axis=-1)
        return out

    def identity_embedding(self) -> np.ndarray:
        """Coefficients with the degree-1 block equal to the identity."""
        Theta = np.zeros((self.N, self.n))
        Theta[: self.n] = np.eye(self.n)
        return Theta


def build_basis(n: int, d: int) -> PolyBasis:
    if n < 1:
        raise InvalidInputError("dimension must be at least 1")
    if d < 1:
        raise InvalidInputError("degree must be at least 1; a constant-only dictionary is useless")
    exps = []
    for deg in range(1, d + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            e = [0] * n
            for r in combo:
                e[r] += 1
            exps.append(tuple(e))
    return PolyBasis(n, d, tuple(exps))


def eval_basis(b: PolyBasis, x) -> np.ndarray:
    return b.eval(x)


def basis_jacobian(b: PolyBasis, x) -> np.ndarray:
    return b.jacobian(x)
