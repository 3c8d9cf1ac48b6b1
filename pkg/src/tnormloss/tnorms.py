"""Gödel, Łukasiewicz and product t-norms, their t-conorms, and strong negation.

Scalar functions operate on Python floats (double precision); the ``*_array``
variants are the element-wise kernels used by the batch loss code and keep
the dtype of their inputs.
"""

from __future__ import annotations

import enum
from functools import reduce
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """A truth value lies outside [0, 1] in strict mode."""


class TNormKind(str, enum.Enum):
    GODEL = "godel"
    LUKASIEWICZ = "lukasiewicz"
    PRODUCT = "product"

    @classmethod
    def parse(cls, value: "TNormKind | str") -> "TNormKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"gödel": "godel", "łukasiewicz": "lukasiewicz", "luk": "lukasiewicz", "prod": "product"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown t-norm {value!r}; expected one of {choices}") from None


def _unit(a: float, strict: bool) -> float:
    a = float(a)
    if 0.0 <= a <= 1.0:
        return a
    if strict or a != a:
        raise DomainError(f"truth value {a!r} outside [0, 1]")
    return min(max(a, 0.0), 1.0)


def tnorm(kind: TNormKind | str, a: float, b: float, strict: bool = True) -> float:
    kind = TNormKind.parse(kind)
    a, b = _unit(a, strict), _unit(b, strict)
    if kind is TNormKind.GODEL:
        return min(a, b)
    if kind is TNormKind.LUKASIEWICZ:
        return max(a + b - 1.0, 0.0)
    return a * b


def tconorm(kind: TNormKind | str, a: float, b: float, strict: bool = True) -> float:
    kind = TNormKind.parse(kind)
    a, b = _unit(a, strict), _unit(b, strict)
    if kind is TNormKind.GODEL:
        return max(a, b)
    if kind is TNormKind.LUKASIEWICZ:
        return min(a + b, 1.0)
    return 1.0 - (1.0 - a) * (1.0 - b)


def neg(a: float, strict: bool = True) -> float:
    return 1.0 - _unit(a, strict)


def tconorm_fold(kind: TNormKind | str, values: Sequence[float], strict: bool = True) -> float:
    """Left fold of the t-conorm over ``values`` in the given order.

    An empty disjunction is rejected rather than mapped to the identity 0.
    """
    if len(values) == 0:
        raise ValueError("t-conorm fold over an empty sequence")
    kind = TNormKind.parse(kind)
    first = _unit(values[0], strict)
    return reduce(lambda acc, v: tconorm(kind, acc, v, strict), values[1:], first)


def tnorm_array(kind: TNormKind | str, a, b, out=None):
    kind = TNormKind.parse(kind)
    if kind is TNormKind.GODEL:
        return np.minimum(a, b, out=out)
    if kind is TNormKind.LUKASIEWICZ:
        r = np.add(a, b, out=out)
        r -= 1
        return np.maximum(r, 0, out=r)
    return np.multiply(a, b, out=out)


def tconorm_array(kind: TNormKind | str, a, b, out=None):
    """Element-wise t-conorm with broadcasting; ``out`` may alias ``a``."""
    kind = TNormKind.parse(kind)
    if kind is TNormKind.GODEL:
        return np.maximum(a, b, out=out)
    if kind is TNormKind.LUKASIEWICZ:
        r = np.add(a, b, out=out)
        return np.minimum(r, 1, out=r)
    # 1 - (1-a)(1-b); evaluated in that order so dense and sparse paths round identically
    r = np.subtract(1, a, out=out)
    r *= 1 - b
    return np.subtract(1, r, out=r)


def check_unit_interval(x: np.ndarray, strict: bool = True, name: str = "input") -> np.ndarray:
    """Raise on values outside [0, 1] (strict) or return a clipped copy (lenient)."""
    if x.size == 0:
        return x
    if np.isnan(x).any():
        raise DomainError(f"{name} contains NaN")
    lo, hi = x.min(), x.max()
    if lo >= 0 and hi <= 1:
        return x
    if strict:
        raise DomainError(f"{name} has values outside [0, 1] (min {lo!r}, max {hi!r})")
    return np.clip(x, 0, 1)
