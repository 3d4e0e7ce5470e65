"""Hand-derived reverse-mode gradients, validated by central finite differences.

Two analytic programs compute the same gradient of truncated-exponential
attention: `recurrent_attention_backward` differentiates the per-pair direct
form (O(N^2 d), the public path), while `recurrent_attention_backward_scan`
reverse-propagates through the materialized Kronecker states. They must agree
to float precision because the forwards are the same function; the scan
version exists to check the direct one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import (MAX_ORDER, AttentionConfig, DenomKind, DenominatorMode,
                     Mode, apply_feature_map, feature_map_vjp)
from .core import DENOM_FLOOR, MAX_ELEMENTS, ResourceLimitError, clamp_logit, taylor_weights
from .recurrent import state_elements
from .reference import check_shapes, truncated_exp, _visible

# the scan backward materializes per-order states, so it keeps a tight cap;
# the direct-form backward is a scalar series and accepts any config order
GRAD_MAX_ORDER = 6
GRAD_DENOMINATORS = (DenomKind.NONE, DenomKind.SEQ_NORM, DenomKind.EXACT, DenomKind.L2_NORM)


@dataclass
class GradTriple:
    """Cotangents w.r.t. Q, K, V for a given output cotangent."""

    dQ: np.ndarray
    dK: np.ndarray
    dV: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"q": self.dQ, "k": self.dK, "v": self.dV}


@dataclass
class GradReport:
    """Finite-difference comparison summary for one configuration."""

    path: str
    config: str
    h: float
    tolerance: float
    max_rel_err: float
    max_abs_err: float
    passed: bool
    per_input: dict[str, dict[str, float]]

    def to_json_dict(self) -> dict:
        return {
            "path": self.path,
            "config": self.config,
            "h": self.h,
            "max_rel_err": self.max_rel_err,
            "max_abs_err": self.max_abs_err,
            "pass": self.passed,
        }


def softmax_attention_backward(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                               dO: np.ndarray, mode: Mode = Mode.CAUSAL) -> GradTriple:
    """Exact gradients of softmax attention.

    Per row: with w = softmax(x), dx = w * (dw - <w, dw>), then the bilinear
    pieces distribute onto Q, K, V.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    dO = np.asarray(dO, dtype=np.float64)
    N, M, _, e = check_shapes(Q, K, V, mode)
    if dO.shape != (N, e):
        raise ValueError(f"dO shape {dO.shape} != ({N}, {e})")
    dQ = np.zeros_like(Q)
    dK = np.zeros_like(K)
    dV = np.zeros_like(V)
    for t in range(N):
        vis = _visible(t, M, mode)
        x = K[:vis] @ Q[t]
        w = np.exp(x - np.max(x))
        w /= np.sum(w)
        dV[:vis] += np.multiply.outer(w, dO[t])
        dw = V[:vis] @ dO[t]
        dx = w * (dw - float(np.dot(w, dw)))
        dQ[t] = dx @ K[:vis]
        dK[:vis] += np.multiply.outer(dx, Q[t])
    return GradTriple(dQ, dK, dV)


def _normalizer_vjp(num: np.ndarray, mode: DenominatorMode, visible: int,
                    dO_row: np.ndarray,
                    exact_den: float | None = None) -> tuple[np.ndarray, float]:
    """Cotangents (d numerator, d exact-denominator) of one finalized row."""
    kind = mode.kind
    if kind is DenomKind.NONE:
        return dO_row.copy(), 0.0
    if kind is DenomKind.SEQ_NORM:
        return dO_row / visible, 0.0
    if kind is DenomKind.EXACT:
        if abs(exact_den) < DENOM_FLOOR:
            raise ValueError(f"degenerate exact denominator {exact_den!r}")
        du = dO_row / exact_den
        dden = -float(np.dot(dO_row, num)) / exact_den**2
        return du, dden
    if kind is DenomKind.L2_NORM:
        r = float(np.linalg.norm(num))
        if r < DENOM_FLOOR:
            return np.zeros_like(num), 0.0  # zero-row branch: zero subgradient
        o = num / r
        return (dO_row - float(np.dot(dO_row, o)) * o) / r, 0.0
    raise ValueError(
        f"denominator mode {mode.label()!r} has no gradient support "
        f"(supported: none, seq_norm, exact, l2_norm)")


def _check_grad_config(config: AttentionConfig, max_order: int) -> None:
    if config.denominator.kind not in GRAD_DENOMINATORS:
        raise ValueError(
            f"denominator mode {config.denominator.label()!r} has no gradient "
            f"support (supported: none, seq_norm, exact, l2_norm)")
    if config.order > max_order:
        raise ValueError(
            f"this gradient path supports order <= {max_order}, got {config.order}")


def recurrent_attention_backward(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                                 dO: np.ndarray,
                                 config: AttentionConfig) -> GradTriple:
    """Gradients of truncated-exponential attention via the per-pair form.

    Uses the scalar chain rule on f(x) = sum_m x^m/m!, whose derivative is the
    same series shifted down one order. Matches the per-pair clamp semantics
    of taylor_attention_direct (saturated pairs get zero gradient).
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    dO = np.asarray(dO, dtype=np.float64)
    N, M, _, e = check_shapes(Q, K, V, config.mode)
    _check_grad_config(config, MAX_ORDER)
    if dO.shape != (N, e):
        raise ValueError(f"dO shape {dO.shape} != ({N}, {e})")
    Qm = apply_feature_map(Q, config.query_map)
    Km = apply_feature_map(K, config.key_map)
    weights = taylor_weights(config.order)
    exact = config.denominator.kind is DenomKind.EXACT
    dQm = np.zeros_like(Qm)
    dKm = np.zeros_like(Km)
    dV = np.zeros_like(V)
    for t in range(N):
        vis = _visible(t, M, config.mode)
        x_raw = Km[:vis] @ Qm[t]
        x = clamp_logit(x_raw, config.clamp)
        f = truncated_exp(x, weights)
        fprime = truncated_exp(x, weights[:-1]) if config.order >= 1 else np.zeros_like(x)
        num = f @ V[:vis]
        du, dden = _normalizer_vjp(num, config.denominator, vis, dO[t],
                                   exact_den=float(np.sum(f)) if exact else None)
        dx = fprime * (V[:vis] @ du + dden)
        if config.clamp is not None:
            dx = dx * (np.abs(x_raw) <= config.clamp)
        dV[:vis] += np.multiply.outer(f, du)
        dQm[t] = dx @ Km[:vis]
        dKm[:vis] += np.multiply.outer(dx, Qm[t])
    return GradTriple(feature_map_vjp(Q, config.query_map, dQm),
                      feature_map_vjp(K, config.key_map, dKm),
                      dV)


def _sym_contract(pow_lower: np.ndarray, h: np.ndarray, m: int, d: int) -> np.ndarray:
    """d/dv of kron_power(v, m) . h for symmetric h: m * (v_kron_{m-1} @ H)
    with h reshaped to (d^{m-1}, d)."""
    return m * (pow_lower @ h.reshape(d ** (m - 1), d))


def recurrent_attention_backward_scan(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                                      dO: np.ndarray,
                                      config: AttentionConfig) -> GradTriple:
    """Second gradient program: reverse pass through the Kronecker-state scan.

    Stores the state after every causal step (verification-scale memory) and
    walks back through readouts and updates. The hidden/denominator cotangent
    blocks stay symmetric in their Kronecker indices, so d/dq of q_kron_m . h
    is the m-fold contraction against q_kron_{m-1}. Clamp is not supported:
    its recurrence realization (input pre-scaling) is data-dependent.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    dO = np.asarray(dO, dtype=np.float64)
    N, M, d, e = check_shapes(Q, K, V, config.mode)
    _check_grad_config(config, GRAD_MAX_ORDER)
    if config.clamp is not None:
        raise ValueError("scan backward does not support clamp")
    if dO.shape != (N, e):
        raise ValueError(f"dO shape {dO.shape} != ({N}, {e})")
    order = config.order
    weights = taylor_weights(order)
    exact = config.denominator.kind is DenomKind.EXACT
    causal = config.mode is Mode.CAUSAL
    if causal and (M + 1) * state_elements(d, e, order) > MAX_ELEMENTS:
        raise ResourceLimitError("stored scan states would exceed the element guard")

    Qm = apply_feature_map(Q, config.query_map)
    Km = apply_feature_map(K, config.key_map)
    kpow = [[np.ones(1, dtype=np.float64)] for _ in range(M)]
    qpow = [[np.ones(1, dtype=np.float64)] for _ in range(N)]
    for s in range(M):
        for m in range(1, order + 1):
            kpow[s].append(np.multiply.outer(kpow[s][m - 1], Km[s]).reshape(-1))
    for t in range(N):
        for m in range(1, order + 1):
            qpow[t].append(np.multiply.outer(qpow[t][m - 1], Qm[t]).reshape(-1))

    # forward scan, keeping the state after every absorbed position
    hidden = [np.zeros((d**m, e)) for m in range(order + 1)]
    denom = [np.zeros(d**m) for m in range(order + 1)]
    snapshots = []
    for s in range(M):
        for m in range(order + 1):
            hidden[m] = hidden[m] + np.multiply.outer(kpow[s][m], V[s])
            denom[m] = denom[m] + kpow[s][m]
        if causal:
            snapshots.append(([h.copy() for h in hidden], [dn.copy() for dn in denom]))

    def state_at(t: int):
        return snapshots[t] if causal else (hidden, denom)

    def visible(t: int) -> int:
        return _visible(t, M, config.mode)

    dHid = [np.zeros((d**m, e)) for m in range(order + 1)]
    dDen = [np.zeros(d**m) for m in range(order + 1)]
    dQm = np.zeros_like(Qm)
    dKm = np.zeros_like(Km)
    dV = np.zeros_like(V)

    def readout_backward(t: int) -> None:
        hid_t, den_t = state_at(t)
        num = np.zeros(e)
        den_val = 0.0
        for m in range(order + 1):
            num = num + weights[m] * (qpow[t][m] @ hid_t[m])
            if exact:
                den_val += weights[m] * float(qpow[t][m] @ den_t[m])
        du, dden = _normalizer_vjp(num, config.denominator, visible(t), dO[t],
                                   exact_den=den_val if exact else None)
        for m in range(order + 1):
            dHid[m] += weights[m] * np.multiply.outer(qpow[t][m], du)
            if exact:
                dDen[m] += (weights[m] * dden) * qpow[t][m]
            if m >= 1:
                h = hid_t[m] @ du
                if exact:
                    h = h + dden * den_t[m]
                dQm[t] += weights[m] * _sym_contract(qpow[t][m - 1], h, m, d)

    def update_backward(s: int) -> None:
        for m in range(order + 1):
            dV[s] += kpow[s][m] @ dHid[m]
            if m >= 1:
                g = dHid[m] @ V[s] + dDen[m]
                dKm[s] += _sym_contract(kpow[s][m - 1], g, m, d)

    if causal:
        for t in range(N - 1, -1, -1):
            readout_backward(t)
            update_backward(t)
    else:
        for t in range(N - 1, -1, -1):
            readout_backward(t)
        for s in range(M - 1, -1, -1):
            update_backward(s)

    return GradTriple(feature_map_vjp(Q, config.query_map, dQm),
                      feature_map_vjp(K, config.key_map, dKm),
                      dV)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def finite_diff_grads(forward, inputs: dict[str, np.ndarray], dO: np.ndarray,
                      h: float = 1e-4) -> dict[str, np.ndarray]:
    """Central differences of <forward(inputs), dO> w.r.t. every coordinate.

    Perturbation order is deterministic: inputs in dict order, coordinates in
    flat row-major order.
    """
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    dO = np.asarray(dO, dtype=np.float64)
    work = {name: np.array(arr, dtype=np.float64) for name, arr in inputs.items()}

    def loss() -> float:
        out = np.asarray(forward(work), dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite forward value during perturbation")
        return float(np.sum(out * dO))

    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss()
            flat[i] = orig - h
            lm = loss()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
        grads[name] = g
    return grads


def finite_diff_check(forward, inputs: dict[str, np.ndarray], dO: np.ndarray,
                      analytic: GradTriple | dict[str, np.ndarray],
                      h: float = 1e-4, tolerance: float = 1e-5,
                      path: str = "", config: str = "") -> GradReport:
    """Compare an analytic gradient against central finite differences.

    Relative error per coordinate is |a-f| / max(|a|, |f|, 1e-8).
    """
    if isinstance(analytic, GradTriple):
        analytic = analytic.as_dict()
    fd = finite_diff_grads(forward, inputs, dO, h)
    per_input = {}
    max_rel = 0.0
    max_abs = 0.0
    for name in inputs:
        a = np.asarray(analytic[name], dtype=np.float64)
        f = fd[name]
        abs_err = np.abs(a - f)
        rel = abs_err / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
        per_input[name] = {"max_rel_err": float(np.max(rel)),
                           "max_abs_err": float(np.max(abs_err))}
        max_rel = max(max_rel, per_input[name]["max_rel_err"])
        max_abs = max(max_abs, per_input[name]["max_abs_err"])
    return GradReport(path=path, config=config, h=h, tolerance=tolerance,
                      max_rel_err=max_rel, max_abs_err=max_abs,
                      passed=max_rel <= tolerance, per_input=per_input)
