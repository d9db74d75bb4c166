"""Truncated Taylor-series (jet) arithmetic over the complex numbers.

A jet stores the coefficients of a power series in a local variable
``d = variable - base`` up to a fixed order.  Arithmetic is closed at that
order, so products of transfer-matrix entries, exponentials of affine
functions and quotients with non-vanishing constant term can be propagated
exactly (no quadrature, no finite differences).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Jet"]


class Jet:
    """Truncated power series ``sum_j coeffs[j] * d**j`` with ``d = var - base``."""

    __slots__ = ("base", "coeffs")

    def __init__(self, base: complex, coeffs) -> None:
        self.base = complex(base)
        self.coeffs = np.asarray(coeffs, dtype=complex)
        if self.coeffs.ndim != 1 or self.coeffs.size < 1:
            raise ValueError("jet coefficients must be a non-empty 1-d sequence")

    @classmethod
    def constant(cls, value: complex, order: int, base: complex = 0.0) -> "Jet":
        c = np.zeros(order + 1, dtype=complex)
        c[0] = value
        return cls(base, c)

    @classmethod
    def variable(cls, base: complex, order: int) -> "Jet":
        """The identity function ``var = base + d`` as a jet at ``base``."""
        if order < 1:
            raise ValueError("variable jet needs order >= 1")
        c = np.zeros(order + 1, dtype=complex)
        c[0] = base
        c[1] = 1.0
        return cls(base, c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def derivative(self, n: int) -> complex:
        """n-th derivative at the base point: ``coeffs[n] * n!``."""
        if n > self.order:
            raise ValueError(f"jet of order {self.order} has no derivative {n}")
        return complex(self.coeffs[n]) * math.factorial(n)

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.order != self.order or other.base != self.base:
                raise ValueError("jet base/order mismatch")
            return other
        return Jet.constant(complex(other), self.order, self.base)

    def __add__(self, other) -> "Jet":
        o = self._coerce(other)
        return Jet(self.base, self.coeffs + o.coeffs)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(self.base, -self.coeffs)

    def __sub__(self, other) -> "Jet":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Jet":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.base, self.coeffs * complex(other))
        o = self._coerce(other)
        n = self.order + 1
        full = np.convolve(self.coeffs, o.coeffs)
        return Jet(self.base, full[:n])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.base, self.coeffs / complex(other))
        o = self._coerce(other)
        if o.coeffs[0] == 0:
            raise ZeroDivisionError("jet division by series with zero constant term")
        n = self.order + 1
        out = np.zeros(n, dtype=complex)
        for j in range(n):
            acc = self.coeffs[j]
            if j:
                acc = acc - np.dot(o.coeffs[1 : j + 1], out[j - 1 :: -1][:j])
            out[j] = acc / o.coeffs[0]
        return Jet(self.base, out)

    def shift_down(self) -> "Jet":
        """Divide by the local variable ``d``; constant term must vanish."""
        c = np.zeros_like(self.coeffs)
        c[:-1] = self.coeffs[1:]
        return Jet(self.base, c)

    def exp(self) -> "Jet":
        """Exponential via the recurrence ``E' = E f'`` (exact at this order)."""
        n = self.order + 1
        out = np.zeros(n, dtype=complex)
        out[0] = np.exp(self.coeffs[0])
        for j in range(1, n):
            out[j] = np.dot(np.arange(1, j + 1) * self.coeffs[1 : j + 1], out[j - 1 :: -1][:j]) / j
        return Jet(self.base, out)

    def __repr__(self) -> str:
        return f"Jet(base={self.base!r}, coeffs={self.coeffs!r})"
