"""Forward-mode automatic differentiation on scalars and numpy arrays.

A Dual carries a value and a tangent of identical shape, so every numpy
broadcasting rule that applies to the value applies unchanged to the
tangent. Duals nest (val/dot may themselves be Duals), which gives exact
second derivatives; the flux kernels are written against the dispatching
math functions below so the same code runs on plain arrays, on Duals for
source-term Jacobians, and on nested Duals for manufactured-solution
source generation.
"""

import numpy as np


class Dual:
    __slots__ = ("val", "dot")
    __array_priority__ = 100.0  # keep numpy from hijacking ndarray <op> Dual

    def __init__(self, val, dot=None):
        self.val = val
        self.dot = dot if dot is not None else np.zeros_like(np.asarray(val, dtype=float))

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        return Dual(self.val + other, self.dot + _zero(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.dot - other.dot)
        return Dual(self.val - other, self.dot - _zero(other))

    def __rsub__(self, other):
        return Dual(other - self.val, _zero(other) - self.dot)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.dot * other.val + self.val * other.dot)
        return Dual(self.val * other, self.dot * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv, (self.dot - self.val * inv * other.dot) * inv)
        return Dual(self.val / other, self.dot / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        return Dual(other * inv, -other * inv * inv * self.dot)

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        return Dual(self.val ** n, n * self.val ** (n - 1) * self.dot)

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __pos__(self):
        return self

    def __abs__(self):
        s = sign(self.val)
        return Dual(self.val * s, self.dot * s)

    # -- comparisons act on values and return plain booleans -----------
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    # -- array-ish behaviour --------------------------------------------
    def __getitem__(self, idx):
        return Dual(self.val[idx], self.dot[idx])

    @property
    def shape(self):
        return np.shape(self.val)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.dot!r})"


def _zero(x):
    """Additive zero compatible with x's shape, for mixed Dual/plain sums."""
    return np.zeros_like(np.asarray(value(x), dtype=float)) if np.ndim(value(x)) else 0.0


def seed(val, dot=1.0):
    """Wrap val as the independent variable with tangent dot."""
    v = np.asarray(val, dtype=float) if np.ndim(val) else val
    d = np.full_like(np.asarray(v, dtype=float), dot) if np.ndim(v) else dot
    return Dual(v, d)


def lift(x):
    """Wrap x as a constant of a new outermost dual layer.

    Needed when nesting passes: an inner seed and a bare outer Dual are
    indistinguishable in arithmetic, so every non-seeded coordinate that
    already carries a layer must be lifted to keep the tangents separate.
    """
    return Dual(x, _zero(x)) if isinstance(x, Dual) else x


def value(x):
    """Strip all dual layers, returning the underlying value."""
    while isinstance(x, Dual):
        x = x.val
    return x


def derivative(x):
    """First tangent of x (zero if x is not a Dual)."""
    if isinstance(x, Dual):
        return x.dot
    return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0


def sign(x):
    return np.sign(value(x))


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, x.dot * e)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.val), x.dot / x.val)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.val)
        return Dual(r, x.dot * 0.5 / r)
    return np.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.val), x.dot * cos(x.val))
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.val), -x.dot * sin(x.val))
    return np.cos(x)


def absolute(x):
    if isinstance(x, Dual):
        return abs(x)
    return np.abs(x)


def where(cond, a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        av, ad = (a.val, a.dot) if isinstance(a, Dual) else (a, _zero(a))
        bv, bd = (b.val, b.dot) if isinstance(b, Dual) else (b, _zero(b))
        return Dual(where(cond, av, bv), where(cond, ad, bd))
    return np.where(cond, a, b)


def maximum(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        return where(value(a) >= value(b), a, b)
    return np.maximum(a, b)


def minimum(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        return where(value(a) <= value(b), a, b)
    return np.minimum(a, b)


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def stack(parts, axis=0):
    if any(isinstance(p, Dual) for p in parts):
        vals = [value_one(p) for p in parts]
        dots = [dot_one(p) for p in parts]
        return Dual(stack(vals, axis), stack(dots, axis))
    return np.stack(parts, axis=axis)


def dsum(x, axis=None):
    if isinstance(x, Dual):
        return Dual(dsum(x.val, axis), dsum(x.dot, axis))
    return np.sum(x, axis=axis)


def value_one(x):
    """Strip exactly one dual layer (value side)."""
    return x.val if isinstance(x, Dual) else x


def dot_one(x):
    """Strip exactly one dual layer (tangent side)."""
    if isinstance(x, Dual):
        return x.dot
    v = value(x)
    return np.zeros_like(np.asarray(v, dtype=float)) if np.ndim(v) else 0.0
