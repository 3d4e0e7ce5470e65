"""Deterministic input generation, tensor file IO, and shared numeric helpers.

Everything here is plumbing: a bit-exact PRNG so instances can be regenerated
identically on any platform, a small binary tensor format for the CLI, and the
factorial-weight table used by every truncated-exponential code path.
"""

from __future__ import annotations

import struct

import numpy as np

MASK64 = (1 << 64) - 1

# Resource guard: reject Kronecker/state configurations above this many f64
# elements (~512 MB of state keeps desk-scale runs safe).
MAX_ELEMENTS = 1 << 26

# Below this magnitude a normalizer is treated as degenerate.
DENOM_FLOOR = 1e-300


class TensorFormatError(ValueError):
    """Raised when a tensor file is malformed or holds non-finite values."""


class ResourceLimitError(RuntimeError):
    """Raised when a requested Kronecker order would exceed the element guard."""


# ---------------------------------------------------------------------------
# SplitMix64
# ---------------------------------------------------------------------------

class SplitMix64:
    """SplitMix64 generator; bit-identical in any language, used for fixtures.

    f64 values use the top 53 bits: (z >> 11) * 2**-53, uniform in [0, 1).
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def fill(self, shape: tuple[int, ...], scale: float) -> np.ndarray:
        """Row-major array with entries (u*2 - 1)*scale, i.e. [-scale, scale)."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = (self.next_unit() * 2.0 - 1.0) * scale
        return out.reshape(shape)


def generate_inputs(seed: int, N: int, M: int, d: int, e: int,
                    scale: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (Q, K, V) with entries uniform in [-scale, scale).

    One SplitMix64 stream fills Q (N x d), then K (M x d), then V (M x e),
    row-major. Identical arguments give byte-identical tensors.
    """
    if N < 1 or M < 1 or d < 1 or e < 1:
        raise ValueError(f"dimensions must be >= 1, got N={N} M={M} d={d} e={e}")
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    rng = SplitMix64(seed)
    q = rng.fill((N, d), scale)
    k = rng.fill((M, d), scale)
    v = rng.fill((M, e), scale)
    return q, k, v


# ---------------------------------------------------------------------------
# TNSR v1 binary format
# ---------------------------------------------------------------------------

_MAGIC = b"TNSR"
_VERSION = 1


def tensor_write(path, t: np.ndarray) -> None:
    """Write a 1-D/2-D f64 array as TNSR v1 (little-endian, row-major)."""
    t = np.ascontiguousarray(t, dtype=np.float64)
    if t.ndim not in (1, 2):
        raise ValueError(f"only 1-D/2-D tensors supported, got ndim={t.ndim}")
    if not np.all(np.isfinite(t)):
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, t.ndim))
        for extent in t.shape:
            fh.write(struct.pack("<Q", extent))
        fh.write(t.astype("<f8").tobytes(order="C"))


def tensor_read(path) -> np.ndarray:
    """Read a TNSR v1 file; round trip with tensor_write is bit-exact."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise TensorFormatError(f"{path}: bad magic")
    version, ndim = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if ndim not in (1, 2):
        raise TensorFormatError(f"{path}: ndim must be 1 or 2, got {ndim}")
    header = 12 + 8 * ndim
    if len(raw) < header:
        raise TensorFormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 12)
    count = 1
    for extent in shape:
        count *= extent
    if len(raw) != header + 8 * count:
        raise TensorFormatError(
            f"{path}: payload holds {(len(raw) - header) // 8} values, shape needs {count}")
    data = np.frombuffer(raw, dtype="<f8", offset=header).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise TensorFormatError(f"{path}: non-finite payload values")
    return data.reshape(shape)


# ---------------------------------------------------------------------------
# Shared numerics
# ---------------------------------------------------------------------------

def clamp_logit(x, bound: float | None):
    """min(max(x, -bound), +bound); identity when bound is None.

    Works elementwise on arrays as well as on scalars.
    """
    if bound is None:
        return x
    if bound < 0:
        raise ValueError(f"clamp bound must be >= 0, got {bound}")
    return np.minimum(np.maximum(x, -bound), bound)


def taylor_weights(order: int) -> np.ndarray:
    """[1/0!, 1/1!, ..., 1/order!] built iteratively to avoid n! overflow."""
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    w = np.empty(order + 1, dtype=np.float64)
    w[0] = 1.0
    for m in range(1, order + 1):
        w[m] = w[m - 1] / m
    return w


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """max over entries of |a-b| / max(|a|, |b|, 1e-8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
