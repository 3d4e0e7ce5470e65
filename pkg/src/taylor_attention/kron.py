"""Kronecker powers of vectors and the decomposed inner-product identity.

The flat layout is row-major multi-index (leftmost factor varies slowest), so
kron_power(v, n) == kron(kron_power(v, n-1), v) and successive orders can be
built incrementally in O(d^n) per step. The identity

    kron_power(a, n) . kron_power(b, n) == (a . b)^n

is what lets an exponentiated inner product be split into a query part and a
key part; decomposed_inner_power materializes the left side specifically so
the identity can be tested against the scalar right side.
"""

from __future__ import annotations

import numpy as np

from .core import MAX_ELEMENTS, ResourceLimitError


def _guard(d: int, n: int, e: int = 1) -> None:
    if d < 1:
        raise ValueError("vector must be nonempty")
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    size = d**n * e
    if size > MAX_ELEMENTS:
        raise ResourceLimitError(
            f"d^n*e = {d}^{n}*{e} = {size} elements exceeds guard {MAX_ELEMENTS}")


def kron_power(v: np.ndarray, n: int) -> np.ndarray:
    """n-fold Kronecker power of a vector, length d^n; n = 0 gives [1.0].

    Entry at flat index sum_k i_k * d^(n-k) is the product prod_k v[i_k].
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got ndim={v.ndim}")
    _guard(v.size, n)
    out = np.ones(1, dtype=np.float64)
    for _ in range(n):
        out = np.multiply.outer(out, v).reshape(-1)
    return out


def decomposed_inner_power(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """Inner product of the n-th Kronecker powers; equals (a . b)^n."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must share one length, got {a.shape} vs {b.shape}")
    return float(np.dot(kron_power(a, n), kron_power(b, n)))


def kron_outer_accumulate(state: np.ndarray, k: np.ndarray, v: np.ndarray,
                          order: int) -> None:
    """state += outer(kron_power(k, order), v), in place.

    state must be d^order x e; this is one timestep of the order-`order`
    hidden-state recurrence.
    """
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if k.ndim != 1 or v.ndim != 1:
        raise ValueError("k and v must be vectors")
    _guard(k.size, order, v.size)
    expected = (k.size**order, v.size)
    if state.shape != expected:
        raise ValueError(f"state shape {state.shape} != required {expected}")
    state += np.multiply.outer(kron_power(k, order), v)
