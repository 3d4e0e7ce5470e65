"""Softmax attention as a stack of recurrences.

The exponentiated inner product e^{q.k} expands into sum_m (q.k)^m/m!, and
each power splits into Kronecker factors: (q.k)^m = q_kron_m . k_kron_m. The
order-m term is therefore a linear recurrence with hidden state
H^m = sum_s outer(k_s_kron_m, v_s) (d^m x e) plus a denominator state
D^m = sum_s k_s_kron_m, and attention truncated at order n is n+1 such
recurrences read out together. State size depends on d and n, never on the
sequence length.

Summation order is fixed (ascending timestep, ascending order, ascending flat
index) so a causal scan and a bidirectional pass produce bitwise-identical
rows wherever they see the same positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (AttentionConfig, DenomKind, FeatureMapKind, GatePair,
                     Mode, apply_feature_map)
from .core import MAX_ELEMENTS, ResourceLimitError, taylor_weights
from .denominators import finalize_numerator_row
from .reference import check_shapes


def state_elements(d: int, e: int, order: int) -> int:
    """Total stored f64 elements: sum_{m=0..order} d^m * (e+1)."""
    return sum(d**m * (e + 1) for m in range(order + 1))


@dataclass
class RecurrentState:
    """Per-order hidden matrices H^m (d^m x e), denominator vectors D^m (d^m),
    and the count of absorbed key/value pairs."""

    d: int
    e: int
    order: int
    hidden: list[np.ndarray] = field(default_factory=list)
    denom: list[np.ndarray] = field(default_factory=list)
    t: int = 0


def state_init(d: int, e: int, order: int) -> RecurrentState:
    """Zeroed state with the correct per-order shapes."""
    if d < 1 or e < 1:
        raise ValueError(f"d and e must be >= 1, got d={d} e={e}")
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    total = state_elements(d, e, order)
    if total > MAX_ELEMENTS:
        raise ResourceLimitError(
            f"state would hold {total} elements (d={d}, e={e}, order={order}), "
            f"guard is {MAX_ELEMENTS}")
    state = RecurrentState(d=d, e=e, order=order)
    for m in range(order + 1):
        state.hidden.append(np.zeros((d**m, e), dtype=np.float64))
        state.denom.append(np.zeros(d**m, dtype=np.float64))
    return state


def state_update(state: RecurrentState, k: np.ndarray, v: np.ndarray,
                 gate_in: float | None = None) -> None:
    """Absorb one key/value pair: H^m += g*outer(k_kron_m, v), D^m += g*k_kron_m.

    Kronecker powers are built incrementally, order m from m-1. gate_in, when
    given, scales the whole contribution (an LSTM-style input gate in [0,1]).
    """
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if k.shape != (state.d,):
        raise ValueError(f"key shape {k.shape} != ({state.d},)")
    if v.shape != (state.e,):
        raise ValueError(f"value shape {v.shape} != ({state.e},)")
    g = 1.0
    if gate_in is not None:
        if not 0.0 <= gate_in <= 1.0:
            raise ValueError(f"gate_in must lie in [0, 1], got {gate_in}")
        g = float(gate_in)
    p = np.ones(1, dtype=np.float64)
    for m in range(state.order + 1):
        state.hidden[m] += np.multiply.outer(g * p, v)
        state.denom[m] += g * p
        if m < state.order:
            p = np.multiply.outer(p, k).reshape(-1)
    state.t += 1


def readout(state: RecurrentState, q: np.ndarray, config: AttentionConfig,
            gate_out: float | None = None) -> np.ndarray:
    """Output row for one query against the current state.

    numerator = sum_m (1/m!) q_kron_m . H^m; the normalizer uses the
    reconstructed denominator sum_m (1/m!) q_kron_m . D^m (exact mode), the
    absorbed count state.t (sequence modes), gate_out, or a vector norm.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (state.d,):
        raise ValueError(f"query shape {q.shape} != ({state.d},)")
    if state.t < 1:
        raise ValueError("readout before any update")
    if config.order != state.order:
        raise ValueError(f"config order {config.order} != state order {state.order}")
    weights = taylor_weights(state.order)
    exact = config.denominator.kind is DenomKind.EXACT
    num = np.zeros(state.e, dtype=np.float64)
    den = 0.0
    p = np.ones(1, dtype=np.float64)
    for m in range(state.order + 1):
        num = num + weights[m] * (p @ state.hidden[m])
        if exact:
            den += weights[m] * float(p @ state.denom[m])
        if m < state.order:
            p = np.multiply.outer(p, q).reshape(-1)
    return finalize_numerator_row(num, config.denominator, state.t,
                                  gate=gate_out, exact_den=den if exact else None)


def _mapped_inputs(Q: np.ndarray, K: np.ndarray,
                   config: AttentionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Apply feature maps, then realize the clamp by pre-scaling.

    Per-pair clamping is impossible in a recurrence (pairs never materialize),
    so when the largest |mapped logit| over all N*M pairs exceeds the bound,
    the mapped queries are scaled down so every logit lands inside it. The max
    is taken over all pairs in both modes, keeping causal and bidirectional
    scans bitwise-consistent.
    """
    Qm = apply_feature_map(Q, config.query_map)
    Km = apply_feature_map(K, config.key_map)
    if config.clamp is not None:
        maxabs = 0.0
        for t in range(Qm.shape[0]):
            maxabs = max(maxabs, float(np.max(np.abs(Km @ Qm[t]))))
        if maxabs > config.clamp:
            Qm *= 0.0 if config.clamp == 0.0 else config.clamp / maxabs
    return Qm, Km


def _check_gates(gates: GatePair | None, config: AttentionConfig, N: int) -> None:
    if config.denominator.needs_gates:
        if gates is None:
            raise ValueError("gate denominator mode needs a GatePair")
        if gates.g_in.size != N:
            raise ValueError(f"g_in length {gates.g_in.size} != N={N}")


def recurrent_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                        config: AttentionConfig,
                        gates: GatePair | None = None) -> np.ndarray:
    """Single left-to-right scan: absorb (K_t, V_t), then read out Q_t.

    Work per step and state memory are independent of the sequence length.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if config.mode is not Mode.CAUSAL:
        raise ValueError("recurrent_attention is the causal scan; "
                         "use bidirectional_recurrent_attention instead")
    N, _, d, e = check_shapes(Q, K, V, config.mode)
    _check_gates(gates, config, N)
    Qm, Km = _mapped_inputs(Q, K, config)
    state = state_init(d, e, config.order)
    out = np.empty((N, e), dtype=np.float64)
    use_gate = config.denominator.needs_gates
    for t in range(N):
        state_update(state, Km[t], V[t])
        out[t] = readout(state, Qm[t], config,
                         gate_out=float(gates.g_in[t]) if use_gate else None)
    return out


def bidirectional_recurrent_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                                      config: AttentionConfig,
                                      gates: GatePair | None = None) -> np.ndarray:
    """Absorb all M key/value pairs once, then read out every query row.

    N and M may differ; each output row sees the whole sequence.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if config.mode is not Mode.BIDIRECTIONAL:
        raise ValueError("config.mode must be bidirectional")
    N, M, d, e = check_shapes(Q, K, V, config.mode)
    _check_gates(gates, config, N)
    Qm, Km = _mapped_inputs(Q, K, config)
    state = state_init(d, e, config.order)
    for s in range(M):
        state_update(state, Km[s], V[s])
    out = np.empty((N, e), dtype=np.float64)
    use_gate = config.denominator.needs_gates
    for t in range(N):
        out[t] = readout(state, Qm[t], config,
                         gate_out=float(gates.g_in[t]) if use_gate else None)
    return out


def linear_attention_recurrent(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                               query_map: FeatureMapKind = FeatureMapKind.IDENTITY,
                               key_map: FeatureMapKind = FeatureMapKind.IDENTITY) -> np.ndarray:
    """First-order-term-only recurrence: H_t = H_{t-1} + outer(k_t, v_t),
    O_t = q_t . H_t. This is classic linear attention, without the order-0 term."""
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    N, _, d, e = check_shapes(Q, K, V, Mode.CAUSAL)
    Qm = apply_feature_map(Q, query_map)
    Km = apply_feature_map(K, key_map)
    H = np.zeros((d, e), dtype=np.float64)
    out = np.empty((N, e), dtype=np.float64)
    for t in range(N):
        H += np.multiply.outer(Km[t], V[t])
        out[t] = Qm[t] @ H
    return out


def quadratic_attention_recurrent(Q: np.ndarray, K: np.ndarray,
                                  V: np.ndarray) -> np.ndarray:
    """Second-order-term-only recurrence with H in R^{d^2 x e}:
    O_t = kron(q_t, q_t) . H_t = sum_{s<=t} (q_t . k_s)^2 v_s."""
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    N, _, d, e = check_shapes(Q, K, V, Mode.CAUSAL)
    if d * d * e > MAX_ELEMENTS:
        raise ResourceLimitError(f"d^2*e = {d * d * e} exceeds guard {MAX_ELEMENTS}")
    H = np.zeros((d * d, e), dtype=np.float64)
    out = np.empty((N, e), dtype=np.float64)
    for t in range(N):
        H += np.multiply.outer(np.multiply.outer(K[t], K[t]).reshape(-1), V[t])
        out[t] = np.multiply.outer(Q[t], Q[t]).reshape(-1) @ H
    return out
