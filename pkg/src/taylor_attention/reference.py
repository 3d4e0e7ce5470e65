"""Quadratic-time oracles: direct softmax, direct truncated-exponential
attention, masked matrix-form linear attention, and the gated matrix identity.

These evaluate every query-key pair explicitly and are the ground truth the
recurrent implementations are verified against. softmax_attention and
taylor_attention_direct process query rows in blocks: memory stays O(block*M)
while the pairwise work runs through matrix products, so the bench harness
can drive them to large N and still see clean quadratic scaling.

The normalizer handling here is vectorized and deliberately separate from the
per-row helper the recurrent readout uses; the equivalence grid cross-checks
the two.
"""

from __future__ import annotations

import numpy as np

from .config import (AttentionConfig, DenomKind, DenominatorMode,
                     FeatureMapKind, GatePair, Mode, apply_feature_map)
from .core import DENOM_FLOOR, clamp_logit, taylor_weights

ROW_BLOCK = 128


def check_shapes(Q: np.ndarray, K: np.ndarray, V: np.ndarray, mode: Mode) -> tuple[int, int, int, int]:
    """Validate (N,d)/(M,d)/(M,e) shapes; causal mode additionally needs N == M."""
    if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
        raise ValueError("Q, K, V must be 2-D")
    N, d = Q.shape
    M, dk = K.shape
    Mv, e = V.shape
    if dk != d:
        raise ValueError(f"K feature dim {dk} != Q feature dim {d}")
    if Mv != M:
        raise ValueError(f"V rows {Mv} != K rows {M}")
    if N == 0 or M == 0 or d == 0 or e == 0:
        raise ValueError("empty sequence or zero feature dimension")
    if mode is Mode.CAUSAL and N != M:
        raise ValueError(f"causal mode needs N == M, got N={N} M={M}")
    return N, M, d, e


def _visible(t: int, M: int, mode: Mode) -> int:
    return t + 1 if mode is Mode.CAUSAL else M


def _future_mask(t0: int, t1: int, M: int) -> np.ndarray:
    """Boolean (t1-t0, M) block marking key positions s > t."""
    return np.arange(M)[None, :] > np.arange(t0, t1)[:, None]


def softmax_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                      mode: Mode = Mode.CAUSAL) -> np.ndarray:
    """Exponential-kernel attention with true normalization.

    Row t is the softmax(Q_t . K_s) weighted average of the visible value
    rows; per-row max subtraction keeps the exponentials in range.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    N, M, _, e = check_shapes(Q, K, V, mode)
    out = np.empty((N, e), dtype=np.float64)
    for t0 in range(0, N, ROW_BLOCK):
        t1 = min(t0 + ROW_BLOCK, N)
        scores = Q[t0:t1] @ K.T
        if mode is Mode.CAUSAL:
            scores[_future_mask(t0, t1, M)] = -np.inf
        w = np.exp(scores - np.max(scores, axis=1, keepdims=True))
        out[t0:t1] = (w @ V) / np.sum(w, axis=1, keepdims=True)
    return out


def truncated_exp(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_m x^m / m! up to len(weights)-1, accumulated in ascending order."""
    acc = np.full_like(x, weights[0])
    p = np.ones_like(x)
    for m in range(1, len(weights)):
        p = p * x
        acc = acc + weights[m] * p
    return acc


def _finalize_rows(num: np.ndarray, mode: DenominatorMode, visible: np.ndarray,
                   gate: np.ndarray | None = None,
                   exact_den: np.ndarray | None = None) -> np.ndarray:
    """Vectorized normalizer for a block of numerator rows."""
    kind = mode.kind
    if kind is DenomKind.NONE:
        return num
    if kind is DenomKind.EXACT:
        small = np.abs(exact_den) < DENOM_FLOOR
        if np.any(small):
            raise ValueError(
                f"degenerate exact denominator {exact_den[small][0]!r}")
        return num / exact_den[:, None]
    if kind is DenomKind.SEQ_NORM:
        return num / visible[:, None]
    if kind is DenomKind.GATE:
        out = num * gate[:, None]
        if mode.seq_normalized:
            out = out / visible[:, None]
        return out
    if kind is DenomKind.L2_NORM:
        r = np.linalg.norm(num, axis=1, keepdims=True)
        return np.where(r < DENOM_FLOOR, 0.0, num / np.where(r == 0.0, 1.0, r))
    if kind is DenomKind.RMS_NORM:
        r = np.sqrt(np.mean(num * num, axis=1, keepdims=True))
        return np.where(r < DENOM_FLOOR, 0.0, num / np.where(r == 0.0, 1.0, r))
    if kind is DenomKind.LAYER_NORM:
        centered = num - np.mean(num, axis=1, keepdims=True)
        s = np.sqrt(np.mean(centered * centered, axis=1, keepdims=True))
        return np.where(s < DENOM_FLOOR, 0.0, centered / np.where(s == 0.0, 1.0, s))
    if kind is DenomKind.L2_PLUS_SEQ:
        r = np.linalg.norm(num, axis=1, keepdims=True)
        scaled = num / visible[:, None]
        return np.where(r < DENOM_FLOOR, 0.0, scaled / np.where(r == 0.0, 1.0, r))
    raise ValueError(f"unknown denominator mode {mode!r}")


def taylor_attention_direct(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                            config: AttentionConfig,
                            gates: GatePair | None = None) -> np.ndarray:
    """Per-pair truncated-exponential attention.

    Each score is f(x) = sum_{m<=order} x^m/m! of the (clamped) mapped inner
    product; the numerator rows then go through the configured normalizer.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    N, M, _, e = check_shapes(Q, K, V, config.mode)
    if config.denominator.needs_gates:
        if gates is None:
            raise ValueError("gate denominator mode needs a GatePair")
        if gates.g_in.size != N:
            raise ValueError(f"g_in length {gates.g_in.size} != N={N}")
    Qm = apply_feature_map(Q, config.query_map)
    Km = apply_feature_map(K, config.key_map)
    weights = taylor_weights(config.order)
    exact = config.denominator.kind is DenomKind.EXACT
    out = np.empty((N, e), dtype=np.float64)
    for t0 in range(0, N, ROW_BLOCK):
        t1 = min(t0 + ROW_BLOCK, N)
        x = clamp_logit(Qm[t0:t1] @ Km.T, config.clamp)
        f = truncated_exp(x, weights)
        if config.mode is Mode.CAUSAL:
            f[_future_mask(t0, t1, M)] = 0.0
            visible = np.arange(t0 + 1, t1 + 1, dtype=np.float64)
        else:
            visible = np.full(t1 - t0, float(M))
        out[t0:t1] = _finalize_rows(
            f @ V, config.denominator, visible,
            gate=gates.g_in[t0:t1] if gates is not None and config.denominator.needs_gates else None,
            exact_den=np.sum(f, axis=1) if exact else None)
    return out


def masked_score_matrix(scores: np.ndarray, mode: Mode) -> np.ndarray:
    """Zero out entries above the diagonal in causal mode (masked entries are 0)."""
    if mode is Mode.CAUSAL:
        return np.tril(scores)
    return scores.copy()


def linear_attention_matrix(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                            query_map: FeatureMapKind = FeatureMapKind.IDENTITY,
                            key_map: FeatureMapKind = FeatureMapKind.IDENTITY,
                            mode: Mode = Mode.CAUSAL) -> np.ndarray:
    """Decomposable-kernel attention by explicit masked matrix products."""
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    check_shapes(Q, K, V, mode)
    scores = apply_feature_map(Q, query_map) @ apply_feature_map(K, key_map).T
    return masked_score_matrix(scores, mode) @ V


def gated_attention_matrix(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                           gates: GatePair,
                           mode: Mode = Mode.CAUSAL) -> tuple[np.ndarray, np.ndarray]:
    """Input/output-gated unnormalized attention, both factorizations.

    Fused: gates multiplied into the masked score matrix (g_in over rows,
    g_out over columns). Factored: g_out folded into V before the product,
    g_in applied after. The two are algebraically identical; both are
    returned so callers can assert it.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    N, M, _, _ = check_shapes(Q, K, V, mode)
    if gates.g_in.size != N:
        raise ValueError(f"g_in length {gates.g_in.size} != N={N}")
    if gates.g_out.size != M:
        raise ValueError(f"g_out length {gates.g_out.size} != M={M}")
    E = masked_score_matrix(np.exp(Q @ K.T), mode)
    fused = (gates.g_in[:, None] * E * gates.g_out[None, :]) @ V
    factored = gates.g_in[:, None] * (E @ (gates.g_out[:, None] * V))
    return factored, fused
