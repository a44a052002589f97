"""Forward-mode dual numbers and backend-dispatching elementary functions.

A :class:`Dual` carries a value and a derivative ("infinitesimal") part.  The
derivative part may be a float or an array of independent channels.  Both
parts may also be JAX tracers, which lets the same closed-form expressions be
compiled with ``jax.jit`` for the simulation loop.

The free functions (``sin``, ``atan2``, ``sqrt`` ...) accept floats, numpy
arrays, JAX arrays or duals, so model/guidance code is written once.
"""

from __future__ import annotations

import math
from typing import Any, Callable, Sequence

import numpy as np

_NUMPY_TYPES = (float, int, np.floating, np.integer, np.ndarray)


def _xp(x: Any):
    """Array namespace for a non-dual operand."""
    if isinstance(x, _NUMPY_TYPES):
        return np
    import jax.numpy as jnp

    return jnp


def _xp2(a: Any, b: Any):
    if isinstance(a, _NUMPY_TYPES) and isinstance(b, _NUMPY_TYPES):
        return np
    import jax.numpy as jnp

    return jnp


class Dual:
    """Dual number ``value + deriv * eps`` with ``eps**2 = 0``."""

    __slots__ = ("value", "deriv")
    __array_priority__ = 1000  # numpy scalars defer to our reflected operators

    def __init__(self, value: Any, deriv: Any = 0.0) -> None:
        self.value = value
        self.deriv = deriv

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.deriv!r})"

    # arithmetic
    def __add__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other: Any) -> "Dual":
        return Dual(other - self.value, -self.deriv)

    def __neg__(self) -> "Dual":
        return Dual(-self.value, -self.deriv)

    def __pos__(self) -> "Dual":
        return self

    def __mul__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.deriv * other.value + self.value * other.deriv,
            )
        return Dual(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(q, (self.deriv - q * other.deriv) / other.value)
        return Dual(self.value / other, self.deriv / other)

    def __rtruediv__(self, other: Any) -> "Dual":
        q = other / self.value
        return Dual(q, -q * self.deriv / self.value)

    def __pow__(self, n: Any) -> "Dual":
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        if n == 2:
            return self * self
        return Dual(self.value**n, n * self.value ** (n - 1) * self.deriv)

    # comparisons act on the value part only
    def __lt__(self, other: Any) -> Any:
        return self.value < value_of(other)

    def __le__(self, other: Any) -> Any:
        return self.value <= value_of(other)

    def __gt__(self, other: Any) -> Any:
        return self.value > value_of(other)

    def __ge__(self, other: Any) -> Any:
        return self.value >= value_of(other)

    def __float__(self) -> float:
        return float(self.value)


def value_of(x: Any) -> Any:
    return x.value if isinstance(x, Dual) else x


def deriv_of(x: Any) -> Any:
    return x.deriv if isinstance(x, Dual) else 0.0


# elementary functions
def sin(x: Any) -> Any:
    if isinstance(x, Dual):
        xp = _xp(x.value)
        return Dual(xp.sin(x.value), xp.cos(x.value) * x.deriv)
    return _xp(x).sin(x)


def cos(x: Any) -> Any:
    if isinstance(x, Dual):
        xp = _xp(x.value)
        return Dual(xp.cos(x.value), -xp.sin(x.value) * x.deriv)
    return _xp(x).cos(x)


def tan(x: Any) -> Any:
    if isinstance(x, Dual):
        t = _xp(x.value).tan(x.value)
        return Dual(t, (1.0 + t * t) * x.deriv)
    return _xp(x).tan(x)


def exp(x: Any) -> Any:
    if isinstance(x, Dual):
        e = _xp(x.value).exp(x.value)
        return Dual(e, e * x.deriv)
    return _xp(x).exp(x)


def log(x: Any) -> Any:
    if isinstance(x, Dual):
        return Dual(_xp(x.value).log(x.value), x.deriv / x.value)
    return _xp(x).log(x)


def sqrt(x: Any) -> Any:
    if isinstance(x, Dual):
        s = _xp(x.value).sqrt(x.value)
        return Dual(s, 0.5 * x.deriv / s)
    return _xp(x).sqrt(x)


def atan(x: Any) -> Any:
    if isinstance(x, Dual):
        v = x.value
        return Dual(_xp(v).arctan(v), x.deriv / (1.0 + v * v))
    return _xp(x).arctan(x)


def atan2(y: Any, x: Any) -> Any:
    if isinstance(y, Dual) or isinstance(x, Dual):
        yv, xv = value_of(y), value_of(x)
        r2 = xv * xv + yv * yv
        d = (xv * deriv_of(y) - yv * deriv_of(x)) / r2
        return Dual(_xp2(yv, xv).arctan2(yv, xv), d)
    return _xp2(y, x).arctan2(y, x)


def clamp_min(x: Any, lo: float) -> Any:
    """``max(x, lo)``; the derivative is zero where the floor is active."""
    if isinstance(x, Dual):
        xp = _xp(x.value)
        active = x.value < lo
        return Dual(xp.where(active, lo, x.value), xp.where(active, 0.0 * x.deriv, x.deriv))
    return _xp(x).maximum(x, lo)


def where(cond: Any, a: Any, b: Any) -> Any:
    """Elementwise select that keeps dual parts consistent."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        av, bv = value_of(a), value_of(b)
        xp = _xp2(av, bv)
        return Dual(xp.where(cond, av, bv), xp.where(cond, deriv_of(a), deriv_of(b)))
    return _xp2(a, b).where(cond, a, b)


def wrap_angle(x: Any) -> Any:
    """Wrap to (-pi, pi]; the derivative passes through unchanged."""
    if isinstance(x, Dual):
        return Dual(wrap_angle(x.value), x.deriv)
    xp = _xp(x)
    return -(xp.mod(-x + math.pi, 2.0 * math.pi) - math.pi)


def derivative(f: Callable[[Dual], Any], x0: float) -> float:
    """d f / d x at ``x0`` for a scalar function."""
    out = f(Dual(x0, 1.0))
    return deriv_of(out)


def gradient(f: Callable[..., Any], args: Sequence[float]) -> np.ndarray:
    """Gradient of a scalar function of ``len(args)`` scalars, one channel per pass."""
    n = len(args)
    grad = np.empty(n)
    for i in range(n):
        seeded = [Dual(a, 1.0 if j == i else 0.0) for j, a in enumerate(args)]
        grad[i] = deriv_of(f(*seeded))
    return grad
