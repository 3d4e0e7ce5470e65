"""Attention configuration vocabulary shared by every compute path.

Feature maps live here next to their enum so the forward transform and its
vector-Jacobian product cannot drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Mode(str, Enum):
    CAUSAL = "causal"
    BIDIRECTIONAL = "bidirectional"


class FeatureMapKind(str, Enum):
    IDENTITY = "identity"
    ELU_PLUS_ONE = "elu_plus_one"
    RELU = "relu"
    COSINE = "cosine"  # unit-normalize each row; zero rows stay zero


class DenomKind(str, Enum):
    NONE = "none"
    EXACT = "exact"
    SEQ_NORM = "seq_norm"
    GATE = "gate"
    L2_NORM = "l2_norm"
    RMS_NORM = "rms_norm"
    LAYER_NORM = "layer_norm"
    L2_PLUS_SEQ = "l2_plus_seq"


@dataclass(frozen=True)
class DenominatorMode:
    """One normalizer variant; seq_normalized adds the 1/t factor to gate mode."""

    kind: DenomKind
    seq_normalized: bool = False

    def __post_init__(self):
        if self.seq_normalized and self.kind is not DenomKind.GATE:
            raise ValueError("seq_normalized applies to gate mode only")

    @property
    def needs_gates(self) -> bool:
        return self.kind is DenomKind.GATE

    def label(self) -> str:
        if self.kind is DenomKind.GATE and self.seq_normalized:
            return "gate_seq"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "DenominatorMode":
        if text == "gate_seq":
            return cls(DenomKind.GATE, seq_normalized=True)
        try:
            return cls(DenomKind(text))
        except ValueError:
            raise ValueError(f"unknown denominator mode {text!r}") from None


NONE = DenominatorMode(DenomKind.NONE)
EXACT = DenominatorMode(DenomKind.EXACT)
SEQ_NORM = DenominatorMode(DenomKind.SEQ_NORM)
GATE = DenominatorMode(DenomKind.GATE)
GATE_SEQ = DenominatorMode(DenomKind.GATE, seq_normalized=True)
L2_NORM = DenominatorMode(DenomKind.L2_NORM)
RMS_NORM = DenominatorMode(DenomKind.RMS_NORM)
LAYER_NORM = DenominatorMode(DenomKind.LAYER_NORM)
L2_PLUS_SEQ = DenominatorMode(DenomKind.L2_PLUS_SEQ)

# Every mode instance; gate appears in both flavors.
ALL_DENOMINATOR_MODES = (
    NONE, EXACT, SEQ_NORM, GATE, GATE_SEQ, L2_NORM, RMS_NORM, LAYER_NORM, L2_PLUS_SEQ,
)

MAX_ORDER = 30  # 1/30! is still a normal f64


@dataclass(frozen=True)
class AttentionConfig:
    """Truncation order, visibility mode, normalizer, feature maps, clamp."""

    order: int
    mode: Mode = Mode.CAUSAL
    denominator: DenominatorMode = EXACT
    query_map: FeatureMapKind = FeatureMapKind.IDENTITY
    key_map: FeatureMapKind = FeatureMapKind.IDENTITY
    clamp: float | None = None

    def __post_init__(self):
        if not 0 <= self.order <= MAX_ORDER:
            raise ValueError(f"order must be in [0, {MAX_ORDER}], got {self.order}")
        if self.clamp is not None and self.clamp < 0:
            raise ValueError(f"clamp must be >= 0, got {self.clamp}")

    def label(self) -> str:
        parts = [f"order={self.order}", self.mode.value, f"denom={self.denominator.label()}"]
        if self.query_map is not FeatureMapKind.IDENTITY or self.key_map is not FeatureMapKind.IDENTITY:
            parts.append(f"qmap={self.query_map.value}")
            parts.append(f"kmap={self.key_map.value}")
        if self.clamp is not None:
            parts.append(f"clamp={self.clamp}")
        return " ".join(parts)


@dataclass(frozen=True)
class GatePair:
    """Per-position gates in [0,1]: g_in over the N queries, g_out over the M keys.

    g_in scales output rows, g_out scales the accumulated values; the fused and
    factored gated forms agree under exactly this wiring.
    """

    g_in: np.ndarray
    g_out: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g_in", np.asarray(self.g_in, dtype=np.float64))
        object.__setattr__(self, "g_out", np.asarray(self.g_out, dtype=np.float64))
        for name, g in (("g_in", self.g_in), ("g_out", self.g_out)):
            if g.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            if g.size and (np.min(g) < 0.0 or np.max(g) > 1.0):
                raise ValueError(f"{name} entries must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------

def apply_feature_map(rows: np.ndarray, kind: FeatureMapKind) -> np.ndarray:
    """Apply a feature map row-wise; always returns a fresh array."""
    rows = np.asarray(rows, dtype=np.float64)
    if kind is FeatureMapKind.IDENTITY:
        return rows.copy()
    if kind is FeatureMapKind.RELU:
        return np.maximum(rows, 0.0)
    if kind is FeatureMapKind.ELU_PLUS_ONE:
        # elu(x) + 1: x + 1 on the positive side, e^x on the other
        return np.where(rows > 0.0, rows + 1.0, np.exp(rows))
    if kind is FeatureMapKind.COSINE:
        norms = np.linalg.norm(rows, axis=-1, keepdims=True)
        safe = np.where(norms == 0.0, 1.0, norms)
        return rows / safe
    raise ValueError(f"unknown feature map {kind!r}")


def feature_map_vjp(rows: np.ndarray, kind: FeatureMapKind,
                    cotangent: np.ndarray) -> np.ndarray:
    """Pull a cotangent w.r.t. the mapped rows back to the raw rows."""
    rows = np.asarray(rows, dtype=np.float64)
    g = np.asarray(cotangent, dtype=np.float64)
    if kind is FeatureMapKind.IDENTITY:
        return g.copy()
    if kind is FeatureMapKind.RELU:
        return g * (rows > 0.0)
    if kind is FeatureMapKind.ELU_PLUS_ONE:
        return g * np.where(rows > 0.0, 1.0, np.exp(rows))
    if kind is FeatureMapKind.COSINE:
        out = np.zeros_like(rows)
        norms = np.linalg.norm(rows, axis=-1)
        for i in np.ndindex(norms.shape):
            r = norms[i]
            if r == 0.0:
                continue  # zero rows map to zero rows; take the zero subgradient
            unit = rows[i] / r
            out[i] = (g[i] - np.dot(g[i], unit) * unit) / r
        return out
    raise ValueError(f"unknown feature map {kind!r}")
