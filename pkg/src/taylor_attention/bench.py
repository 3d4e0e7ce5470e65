"""Sequence-length scaling harness and the order-vs-error sweep.

The point being demonstrated: the recurrent form does constant work per
position with state independent of N, while direct attention touches every
visible pair. Timings use a monotonic clock, one discarded warm-up run, and
the median of >= 3 repeats; a checksum of the output is recorded so the
benchmarked work cannot be optimized away.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .config import EXACT, AttentionConfig, FeatureMapKind, Mode, apply_feature_map
from .core import SplitMix64, generate_inputs
from .recurrent import recurrent_attention, state_elements
from .reference import ROW_BLOCK, softmax_attention, taylor_attention_direct

BENCH_KINDS = ("softmax_direct", "taylor_direct", "recurrent")

BENCH_CSV_HEADER = "impl,N,d,e,order,repeats,median_ns,state_elements,checksum"
SWEEP_CSV_HEADER = "order,max_rel_err,mean_rel_err"


@dataclass(frozen=True)
class BenchCell:
    N: int
    d: int
    e: int
    order: int


@dataclass
class BenchRow:
    impl: str
    N: int
    d: int
    e: int
    order: int
    repeats: int
    median_ns: int
    state_elements: int
    checksum: float

    def csv(self) -> str:
        return (f"{self.impl},{self.N},{self.d},{self.e},{self.order},"
                f"{self.repeats},{self.median_ns},{self.state_elements},"
                f"{self.checksum!r}")


def _cell_seed(seed: int, index: int) -> int:
    # stable per-cell stream; mixing once decorrelates neighbouring indices
    return SplitMix64(seed + index).next_u64()


def scale_queries_to_logit_bound(Q: np.ndarray, K: np.ndarray,
                                 bound: float) -> np.ndarray:
    """Scale Q so that max_{t,s} |Q_t . K_s| becomes exactly `bound`.

    Row-wise pass, never materializes the N x M logit matrix.
    """
    maxabs = 0.0
    for t in range(Q.shape[0]):
        maxabs = max(maxabs, float(np.max(np.abs(K @ Q[t]))))
    if maxabs == 0.0:
        return Q.copy()
    return Q * (bound / maxabs)


def _run_kind(kind: str, Q, K, V, order: int):
    if kind == "softmax_direct":
        return softmax_attention(Q, K, V, Mode.CAUSAL)
    if kind == "taylor_direct":
        return taylor_attention_direct(Q, K, V, AttentionConfig(order=order, denominator=EXACT))
    if kind == "recurrent":
        return recurrent_attention(Q, K, V, AttentionConfig(order=order, denominator=EXACT))
    raise ValueError(f"unknown bench kind {kind!r}")


def _state_count(kind: str, cell: BenchCell) -> int:
    if kind == "recurrent":
        return state_elements(cell.d, cell.e, cell.order)
    # blocked direct paths keep a score block and a weight block resident
    return 2 * min(ROW_BLOCK, cell.N) * cell.N


def bench_runtime(kinds, cells, repeats: int = 5, seed: int = 0,
                  scale: float = 0.5, logit_bound: float | None = 1.0) -> list[BenchRow]:
    """Time every (cell, kind) pair on identical deterministic inputs.

    Rows come out in grid order (cells outer, kinds inner). Input generation
    and the optional logit rescaling are excluded from the timed region.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    rows = []
    for index, cell in enumerate(cells):
        q, k, v = generate_inputs(_cell_seed(seed, index), cell.N, cell.N,
                                  cell.d, cell.e, scale)
        if logit_bound is not None:
            q = scale_queries_to_logit_bound(q, k, logit_bound)
        for kind in kinds:
            # timing is strictly single-threaded: BLAS thread scheduling
            # would otherwise add run-to-run variance to the medians
            with threadpool_limits(limits=1):
                _run_kind(kind, q, k, v, cell.order)  # warm-up, excluded
                samples = []
                for _ in range(repeats):
                    t0 = time.perf_counter_ns()
                    out = _run_kind(kind, q, k, v, cell.order)
                    samples.append(time.perf_counter_ns() - t0)
            checksum = float(np.sum(out))
            if not np.isfinite(checksum):
                raise FloatingPointError(f"non-finite checksum for {kind} {cell}")
            rows.append(BenchRow(impl=kind, N=cell.N, d=cell.d, e=cell.e,
                                 order=cell.order, repeats=repeats,
                                 median_ns=int(np.median(samples)),
                                 state_elements=_state_count(kind, cell),
                                 checksum=checksum))
    return rows


def approx_error_sweep(orders, logit_bound: float, seed: int, N: int, d: int, e: int,
                       query_map: FeatureMapKind = FeatureMapKind.IDENTITY,
                       key_map: FeatureMapKind = FeatureMapKind.IDENTITY,
                       mode: Mode = Mode.CAUSAL) -> list[tuple[int, float, float]]:
    """Error of exact-denominator truncated attention vs softmax, per order.

    Raw inputs are rescaled so every raw pairwise logit lies within
    +-logit_bound, then both paths see the same feature-mapped tensors.
    Errors are per entry, relative to the reference row's largest magnitude
    (a plain entrywise ratio turns sign flips of near-zero entries into O(1)
    readings and hides the monotone convergence of the weight vectors).
    """
    q, k, v = generate_inputs(seed, N, N, d, e, 0.5)
    q = scale_queries_to_logit_bound(q, k, logit_bound)
    qm = apply_feature_map(q, query_map)
    km = apply_feature_map(k, key_map)
    ref = softmax_attention(qm, km, v, mode)
    row_scale = np.maximum(np.max(np.abs(ref), axis=1, keepdims=True), 1e-8)
    out = []
    for order in orders:
        approx = taylor_attention_direct(
            q, k, v, AttentionConfig(order=order, mode=mode, denominator=EXACT,
                                     query_map=query_map, key_map=key_map))
        diff = np.abs(approx - ref) / row_scale
        out.append((order, float(np.max(diff)), float(np.mean(diff))))
    return out


def write_bench_csv(path, rows: list[BenchRow]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(BENCH_CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv() + "\n")


def write_sweep_csv(path, rows: list[tuple[int, float, float]]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for order, max_err, mean_err in rows:
            fh.write(f"{order},{max_err!r},{mean_err!r}\n")


def doubling_ratios(rows: list[BenchRow], kind: str) -> list[float]:
    """T(2N)/T(N) for consecutive N doublings of one impl kind."""
    picked = sorted((r for r in rows if r.impl == kind), key=lambda r: r.N)
    ratios = []
    for lo, hi in zip(picked, picked[1:]):
        if hi.N == 2 * lo.N and lo.median_ns > 0:
            ratios.append(hi.median_ns / lo.median_ns)
    return ratios
