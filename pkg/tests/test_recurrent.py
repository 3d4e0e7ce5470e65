import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taylor_attention import config as cfg
from taylor_attention.config import (AttentionConfig, FeatureMapKind, GatePair,
                                     Mode)
from taylor_attention.core import (ResourceLimitError, SplitMix64,
                                   generate_inputs, rel_err, taylor_weights)
from taylor_attention.recurrent import (bidirectional_recurrent_attention,
                                        linear_attention_recurrent,
                                        quadratic_attention_recurrent,
                                        readout, recurrent_attention,
                                        state_elements, state_init,
                                        state_update)
from taylor_attention.reference import (linear_attention_matrix,
                                        taylor_attention_direct)


def test_state_init_shapes():
    state = state_init(2, 3, 2)
    assert [h.shape for h in state.hidden] == [(1, 3), (2, 3), (4, 3)]
    assert [d.size for d in state.denom] == [1, 2, 4]
    assert state.t == 0
    assert all(not h.any() for h in state.hidden)


def test_state_init_d1_collapse():
    state = state_init(1, 1, 5)
    assert len(state.hidden) == 6
    assert all(h.shape == (1, 1) for h in state.hidden)


def test_state_init_resource_guard():
    with pytest.raises(ResourceLimitError):
        state_init(4, 4, 20)


def test_single_update_readout_two_terms():
    # order 1, no normalizer: readout is v + (q.k) v
    k = np.array([0.5, -1.0])
    v = np.array([2.0, 3.0, -1.0])
    q = np.array([1.5, 0.25])
    state = state_init(2, 3, 1)
    state_update(state, k, v)
    out = readout(state, q, AttentionConfig(order=1, denominator=cfg.NONE))
    assert np.allclose(out, v + float(q @ k) * v, rtol=1e-15)


def test_zero_gate_freezes_state():
    state = state_init(2, 2, 2)
    k, v = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    state_update(state, k, v, gate_in=0.0)
    assert state.t == 1
    assert all(not h.any() for h in state.hidden)
    assert all(not d.any() for d in state.denom)


def test_update_linearity():
    k, v = np.array([0.5, -0.25]), np.array([1.0, -2.0])
    once = state_init(2, 2, 3)
    state_update(once, k, v)
    twice = state_init(2, 2, 3)
    state_update(twice, k, v)
    state_update(twice, k, v)
    for m in range(4):
        assert np.array_equal(twice.hidden[m], 2.0 * once.hidden[m])
        assert np.array_equal(twice.denom[m], 2.0 * once.denom[m])


def test_update_validation():
    state = state_init(2, 2, 1)
    with pytest.raises(ValueError):
        state_update(state, np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        state_update(state, np.ones(2), np.ones(1))
    with pytest.raises(ValueError):
        state_update(state, np.ones(2), np.ones(2), gate_in=1.5)


def test_readout_order0():
    _, K, V = generate_inputs(21, 5, 5, 2, 3, 1.0)
    state = state_init(2, 3, 0)
    total = np.zeros(3)
    for t in range(5):
        state_update(state, K[t], V[t])
        total = total + V[t]
        got = readout(state, np.ones(2), AttentionConfig(order=0, denominator=cfg.NONE))
        assert np.array_equal(got, total)
        mean = readout(state, np.ones(2), AttentionConfig(order=0, denominator=cfg.EXACT))
        assert np.allclose(mean, total / (t + 1), rtol=1e-15)


def test_readout_validation():
    state = state_init(2, 2, 1)
    c = AttentionConfig(order=1, denominator=cfg.NONE)
    with pytest.raises(ValueError, match="before any update"):
        readout(state, np.ones(2), c)
    state_update(state, np.ones(2), np.ones(2))
    with pytest.raises(ValueError, match="order"):
        readout(state, np.ones(2), AttentionConfig(order=2, denominator=cfg.NONE))
    with pytest.raises(ValueError, match="gate"):
        readout(state, np.ones(2), AttentionConfig(order=1, denominator=cfg.GATE))


def test_readout_degenerate_exact_denominator():
    # d=1: after one update with k=[1], q=[-1] the order-1 denominator is 1 + q.k = 0
    state = state_init(1, 1, 1)
    state_update(state, np.array([1.0]), np.array([2.0]))
    with pytest.raises(ValueError, match="degenerate"):
        readout(state, np.array([-1.0]), AttentionConfig(order=1, denominator=cfg.EXACT))


def test_degenerate_denominator_matches_direct_path():
    # the same inputs make the direct path raise too: the paths agree on the
    # contracted error, not just on defined outputs (d=1 cosine sign-product case)
    Q = np.array([[-2.0]])
    K = np.array([[3.0]])
    V = np.array([[1.0]])
    c = AttentionConfig(order=1, denominator=cfg.EXACT,
                        query_map=FeatureMapKind.COSINE, key_map=FeatureMapKind.COSINE)
    with pytest.raises(ValueError, match="degenerate"):
        taylor_attention_direct(Q, K, V, c)
    with pytest.raises(ValueError, match="degenerate"):
        recurrent_attention(Q, K, V, c)


def test_recurrent_matches_direct_seed11():
    Q, K, V = generate_inputs(11, 16, 16, 3, 2, 0.5)
    c = AttentionConfig(order=4, denominator=cfg.EXACT)
    assert rel_err(recurrent_attention(Q, K, V, c),
                   taylor_attention_direct(Q, K, V, c)) <= 1e-10


def test_recurrent_single_token():
    Q, K, V = generate_inputs(22, 1, 1, 3, 2, 1.0)
    for denom in (cfg.NONE, cfg.EXACT, cfg.SEQ_NORM, cfg.L2_NORM):
        c = AttentionConfig(order=3, denominator=denom)
        got = recurrent_attention(Q, K, V, c)
        want = taylor_attention_direct(Q, K, V, c)
        assert rel_err(got, want) <= 1e-14


def test_recurrent_rejects_bidirectional_config():
    Q, K, V = generate_inputs(23, 4, 4, 2, 2, 1.0)
    c = AttentionConfig(order=1, mode=Mode.BIDIRECTIONAL)
    with pytest.raises(ValueError, match="causal"):
        recurrent_attention(Q, K, V, c)
    with pytest.raises(ValueError, match="bidirectional"):
        bidirectional_recurrent_attention(Q, K, V, AttentionConfig(order=1))


def test_bidirectional_horizon_row_bitwise():
    Q, K, V = generate_inputs(24, 10, 10, 2, 3, 0.5)
    a = recurrent_attention(Q, K, V, AttentionConfig(order=2, denominator=cfg.EXACT))
    b = bidirectional_recurrent_attention(
        Q, K, V, AttentionConfig(order=2, mode=Mode.BIDIRECTIONAL, denominator=cfg.EXACT))
    assert np.array_equal(a[-1], b[-1])


def test_bidirectional_single_key():
    Q, K, V = generate_inputs(25, 6, 1, 2, 2, 0.8)
    c = AttentionConfig(order=3, mode=Mode.BIDIRECTIONAL, denominator=cfg.EXACT)
    got = bidirectional_recurrent_attention(Q, K, V, c)
    want = taylor_attention_direct(Q, K, V, c)
    assert rel_err(got, want) <= 1e-12


def test_bidirectional_seed13_l2():
    Q, K, V = generate_inputs(13, 5, 9, 2, 3, 0.5)
    c = AttentionConfig(order=3, mode=Mode.BIDIRECTIONAL, denominator=cfg.L2_NORM)
    got = bidirectional_recurrent_attention(Q, K, V, c)
    want = taylor_attention_direct(Q, K, V, c)
    assert rel_err(got, want) <= 1e-10


def test_linear_recurrent_matches_matrix():
    Q, K, V = generate_inputs(26, 12, 12, 3, 2, 0.5)
    assert rel_err(linear_attention_recurrent(Q, K, V),
                   linear_attention_matrix(Q, K, V)) <= 1e-12


def test_linear_recurrent_cumulative_form():
    # O_t = Q_t . (sum_{s<=t} K_s^T V_s)
    Q, K, V = generate_inputs(27, 8, 8, 2, 2, 0.5)
    got = linear_attention_recurrent(Q, K, V)
    H = np.zeros((2, 2))
    for t in range(8):
        H = H + np.outer(K[t], V[t])
        assert np.allclose(got[t], Q[t] @ H, rtol=1e-14, atol=1e-15)


def test_linear_recurrent_elu_seed17():
    Q, K, V = generate_inputs(17, 10, 10, 3, 2, 0.5)
    m = FeatureMapKind.ELU_PLUS_ONE
    assert rel_err(linear_attention_recurrent(Q, K, V, m, m),
                   linear_attention_matrix(Q, K, V, m, m)) <= 1e-12


def test_quadratic_scalar_collapse():
    Q, K, V = generate_inputs(28, 6, 6, 1, 1, 1.0)
    got = quadratic_attention_recurrent(Q, K, V)
    for t in range(6):
        want = sum(Q[t, 0] ** 2 * K[s, 0] ** 2 * V[s, 0] for s in range(t + 1))
        assert got[t, 0] == pytest.approx(want, rel=1e-13, abs=1e-15)


def test_quadratic_matches_per_pair_squares():
    Q, K, V = generate_inputs(29, 9, 9, 3, 2, 0.6)
    got = quadratic_attention_recurrent(Q, K, V)
    want = np.empty_like(got)
    for t in range(9):
        acc = np.zeros(2)
        for s in range(t + 1):
            acc = acc + float(Q[t] @ K[s]) ** 2 * V[s]
        want[t] = acc
    assert rel_err(got, want) <= 1e-12


def test_quadratic_annihilation():
    Q, K, V = generate_inputs(30, 4, 4, 2, 2, 1.0)
    zeros = np.zeros_like(Q)
    assert not quadratic_attention_recurrent(zeros, K, V).any()
    assert not quadratic_attention_recurrent(Q, zeros, V).any()


def test_streaming_consistency():
    Q, K, V = generate_inputs(31, 10, 10, 2, 2, 0.5)
    c = AttentionConfig(order=3, denominator=cfg.EXACT)
    scanned = recurrent_attention(Q, K, V, c)
    for t in range(10):
        prefix = recurrent_attention(Q[:t + 1], K[:t + 1], V[:t + 1], c)
        assert rel_err(scanned[t], prefix[t]) <= 1e-12


def test_hidden_state_scale_covariance():
    # K -> 2K multiplies the order-m hidden block by exactly 2^m
    K1, V = generate_inputs(32, 5, 5, 2, 2, 0.5)[1:]
    base = state_init(2, 2, 3)
    doubled = state_init(2, 2, 3)
    for t in range(5):
        state_update(base, K1[t], V[t])
        state_update(doubled, 2.0 * K1[t], V[t])
    for m in range(4):
        assert np.array_equal(doubled.hidden[m], 2.0**m * base.hidden[m])


def test_state_size_law():
    for d, e, order in ((1, 1, 5), (2, 4, 3), (3, 2, 4)):
        state = state_init(d, e, order)
        stored = sum(h.size for h in state.hidden) + sum(x.size for x in state.denom)
        assert stored == state_elements(d, e, order)
        assert state_elements(2, 4, 3) == 75


def test_exact_mode_stochastic_any_order():
    Q, K, _ = generate_inputs(33, 12, 12, 2, 3, 0.5)
    ones = np.ones((12, 3))
    for order in range(6):
        out = recurrent_attention(Q, K, ones, AttentionConfig(order=order, denominator=cfg.EXACT))
        assert np.max(np.abs(out - 1.0)) <= 1e-10


def test_norm_modes_unit_rows():
    Q, K, V = generate_inputs(34, 10, 10, 3, 4, 0.5)
    l2 = recurrent_attention(Q, K, V, AttentionConfig(order=3, denominator=cfg.L2_NORM))
    assert np.max(np.abs(np.linalg.norm(l2, axis=1) - 1.0)) <= 1e-12
    rms = recurrent_attention(Q, K, V, AttentionConfig(order=3, denominator=cfg.RMS_NORM))
    assert np.max(np.abs(np.sqrt(np.mean(rms * rms, axis=1)) - 1.0)) <= 1e-12
    layer = recurrent_attention(Q, K, V, AttentionConfig(order=3, denominator=cfg.LAYER_NORM))
    assert np.max(np.abs(np.mean(layer, axis=1))) <= 1e-12
    assert np.max(np.abs(np.std(layer, axis=1) - 1.0)) <= 1e-12


def test_clamp_prescaling_bounds_logits_and_matches_when_inactive():
    Q, K, V = generate_inputs(35, 8, 8, 3, 2, 2.0)  # logits well beyond 1
    c = AttentionConfig(order=4, denominator=cfg.EXACT, clamp=1.0)
    out = recurrent_attention(Q, K, V, c)
    assert np.all(np.isfinite(out))
    # within the clamp both paths see identical logits
    Qs, Ks, Vs = generate_inputs(36, 8, 8, 2, 2, 0.4)  # |logits| <= 2*0.16 < 1
    got = recurrent_attention(Qs, Ks, Vs, c)
    want = taylor_attention_direct(Qs, Ks, Vs, c)
    assert rel_err(got, want) <= 1e-12


def test_gate_denominator_uses_query_gate():
    Q, K, V = generate_inputs(37, 8, 8, 2, 2, 0.5)
    rng = SplitMix64(4)
    gates = GatePair(np.array([rng.next_unit() for _ in range(8)]),
                     np.array([rng.next_unit() for _ in range(8)]))
    for denom in (cfg.GATE, cfg.GATE_SEQ):
        c = AttentionConfig(order=2, denominator=denom)
        got = recurrent_attention(Q, K, V, c, gates)
        want = taylor_attention_direct(Q, K, V, c, gates)
        assert rel_err(got, want) <= 1e-12
    with pytest.raises(ValueError, match="GatePair"):
        recurrent_attention(Q, K, V, AttentionConfig(order=2, denominator=cfg.GATE))


def test_two_sided_gating_matches_per_pair_oracle():
    # accumulation gated by g_out[s], readout scaled by g_in[t]: equals the
    # per-pair truncated form g_in[t] * sum_s f(q_t.k_s) g_out[s] v_s
    Q, K, V = generate_inputs(38, 7, 7, 2, 2, 0.5)
    rng = SplitMix64(6)
    g_in = np.array([rng.next_unit() for _ in range(7)])
    g_out = np.array([rng.next_unit() for _ in range(7)])
    order = 3
    weights = taylor_weights(order)
    state = state_init(2, 2, order)
    c = AttentionConfig(order=order, denominator=cfg.NONE)
    for t in range(7):
        state_update(state, K[t], V[t], gate_in=float(g_out[t]))
        got = g_in[t] * readout(state, Q[t], c)
        want = np.zeros(2)
        for s in range(t + 1):
            x = float(Q[t] @ K[s])
            f = sum(weights[m] * x**m for m in range(order + 1))
            want = want + g_in[t] * f * g_out[s] * V[s]
        assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


@settings(max_examples=20, deadline=None, derandomize=True)
@given(st.integers(0, 2**32), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 4))
def test_recurrent_equivalence_property(seed, d, e, order):
    Q, K, V = generate_inputs(seed, 6, 6, d, e, 0.5)
    c = AttentionConfig(order=order, denominator=cfg.SEQ_NORM)
    assert rel_err(recurrent_attention(Q, K, V, c),
                   taylor_attention_direct(Q, K, V, c)) <= 1e-10
