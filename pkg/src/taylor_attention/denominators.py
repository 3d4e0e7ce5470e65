"""Normalizer application for one output row.

The softmax denominator's reciprocal can be kept exact, replaced by a
sequence-length division, replaced by an external gate (optionally with the
1/t factor), or replaced by a vector norm of the numerator. Both the direct
and the recurrent paths funnel their numerators through this one function;
what differs between them is how the numerator (and, for exact mode, the
reconstructed denominator) was produced.
"""

from __future__ import annotations

import numpy as np

from .config import DenomKind, DenominatorMode
from .core import DENOM_FLOOR


def finalize_numerator_row(num: np.ndarray, mode: DenominatorMode, visible: int,
                           gate: float | None = None,
                           exact_den: float | None = None) -> np.ndarray:
    """Turn one numerator row into an output row under the given mode.

    visible is the number of positions the query sees (t in causal mode, M in
    bidirectional mode). exact_den must be supplied for exact mode; gate for
    gate mode.
    """
    kind = mode.kind
    if kind is DenomKind.NONE:
        return num.copy()
    if kind is DenomKind.EXACT:
        if exact_den is None:
            raise ValueError("exact mode needs the reconstructed denominator")
        if abs(exact_den) < DENOM_FLOOR:
            raise ValueError(f"degenerate exact denominator {exact_den!r}")
        return num / exact_den
    if kind is DenomKind.SEQ_NORM:
        return num / visible
    if kind is DenomKind.GATE:
        if gate is None:
            raise ValueError("gate mode needs a gate value")
        out = num * gate
        if mode.seq_normalized:
            out = out / visible
        return out
    if kind is DenomKind.L2_NORM:
        r = float(np.linalg.norm(num))
        return np.zeros_like(num) if r < DENOM_FLOOR else num / r
    if kind is DenomKind.RMS_NORM:
        r = float(np.sqrt(np.mean(num * num)))
        return np.zeros_like(num) if r < DENOM_FLOOR else num / r
    if kind is DenomKind.LAYER_NORM:
        centered = num - np.mean(num)
        s = float(np.sqrt(np.mean(centered * centered)))
        return np.zeros_like(num) if s < DENOM_FLOOR else centered / s
    if kind is DenomKind.L2_PLUS_SEQ:
        r = float(np.linalg.norm(num))
        return np.zeros_like(num) if r < DENOM_FLOOR else num / (r * visible)
    raise ValueError(f"unknown denominator mode {mode!r}")
