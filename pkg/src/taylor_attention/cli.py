"""Command-line front door.

Subcommands: gen (write deterministic Q/K/V tensor files), run (any attention
variant on tensor files, with a JSON sidecar recording the resolved
configuration), verify (compiled-in check suites), approx (order-vs-error
sweep CSV), bench (scaling harness CSV).

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 resource/IO
error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import (BENCH_KINDS, BenchCell, approx_error_sweep, bench_runtime,
                    write_bench_csv, write_sweep_csv)
from .config import (AttentionConfig, DenominatorMode, FeatureMapKind,
                     GatePair, Mode)
from .core import (ResourceLimitError, TensorFormatError, generate_inputs,
                   tensor_read, tensor_write)
from .recurrent import (bidirectional_recurrent_attention,
                        linear_attention_recurrent,
                        quadratic_attention_recurrent, recurrent_attention)
from .reference import (gated_attention_matrix, softmax_attention,
                        taylor_attention_direct)
from .verify import run_suite, suite_report, write_report

IMPLS = ("softmax", "taylor-direct", "recurrent", "linear", "quadratic", "gated")
DENOM_CHOICES = ("none", "exact", "seq_norm", "gate", "gate_seq",
                 "l2_norm", "rms_norm", "layer_norm", "l2_plus_seq")
MAP_CHOICES = tuple(m.value for m in FeatureMapKind)
MODE_CHOICES = ("causal", "bidir")


class UsageError(ValueError):
    """Flag combination invalid for the requested operation."""


def _mode(text: str) -> Mode:
    return Mode.CAUSAL if text == "causal" else Mode.BIDIRECTIONAL


def load_gates(path) -> GatePair:
    """Gates file: JSON {"g_in": [...], "g_out": [...]}, entries in [0, 1]."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
        return GatePair(np.asarray(payload["g_in"], dtype=np.float64),
                        np.asarray(payload["g_out"], dtype=np.float64))
    except OSError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise TensorFormatError(f"{path}: bad gates file ({exc})") from exc


def save_gates(path, gates: GatePair) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump({"g_in": list(gates.g_in), "g_out": list(gates.g_out)}, fh)
        fh.write("\n")


def parse_orders(text: str) -> list[int]:
    """Accept 'a..b' (inclusive) or a comma list of non-negative ints."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if lo < 0 or hi < lo:
            raise UsageError(f"bad order range {text!r}")
        return list(range(lo, hi + 1))
    orders = [int(p) for p in text.split(",") if p]
    if not orders or any(o < 0 for o in orders):
        raise UsageError(f"bad order list {text!r}")
    return orders


def parse_grid(text: str) -> tuple[list[str], list[BenchCell]]:
    """Grid string: 'kinds=recurrent,softmax_direct;N=4096,8192;d=2;e=4;order=3'."""
    fields = {"kinds": list(BENCH_KINDS), "N": [256, 512, 1024],
              "d": [2], "e": [4], "order": [3]}
    if text:
        for part in text.split(";"):
            if not part:
                continue
            if "=" not in part:
                raise UsageError(f"bad grid field {part!r}")
            key, val = part.split("=", 1)
            if key == "kinds":
                kinds = val.split(",")
                for kind in kinds:
                    if kind not in BENCH_KINDS:
                        raise UsageError(f"unknown bench kind {kind!r}")
                fields["kinds"] = kinds
            elif key in ("N", "d", "e", "order"):
                fields[key] = [int(x) for x in val.split(",")]
            else:
                raise UsageError(f"unknown grid field {key!r}")
    cells = [BenchCell(N=n, d=d, e=e, order=o)
             for n in fields["N"] for d in fields["d"]
             for e in fields["e"] for o in fields["order"]]
    return fields["kinds"], cells


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taylor-attention",
        description="Softmax attention as truncated recurrent expansions: "
                    "generate, run, verify, sweep, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write deterministic Q/K/V tensor files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--e", type=int, required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("run", help="run one attention variant on tensor files")
    p.add_argument("--impl", choices=IMPLS, required=True)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--mode", choices=MODE_CHOICES, default=None)
    p.add_argument("--denominator", choices=DENOM_CHOICES, default=None)
    p.add_argument("--qmap", choices=MAP_CHOICES, default=None)
    p.add_argument("--kmap", choices=MAP_CHOICES, default=None)
    p.add_argument("--clamp", type=float, default=None)
    p.add_argument("--gates", default=None)
    p.add_argument("--in-prefix", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="run a compiled-in verification suite")
    p.add_argument("--suite", choices=("kron", "equivalence", "denominator",
                                       "gates", "grad", "all"), default="all")
    p.add_argument("--json", default=None)

    p = sub.add_parser("approx", help="order-vs-error sweep against softmax")
    p.add_argument("--orders", default="0..10")
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--qmap", choices=MAP_CHOICES, default="identity")
    p.add_argument("--kmap", choices=MAP_CHOICES, default="identity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--e", type=int, default=3)
    p.add_argument("--csv", required=True)

    p = sub.add_parser("bench", help="sequence-length scaling benchmark")
    p.add_argument("--grid", default="")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", required=True)
    return parser


def cmd_gen(args) -> int:
    q, k, v = generate_inputs(args.seed, args.n, args.m, args.d, args.e, args.scale)
    for suffix, tensor in (("q", q), ("k", k), ("v", v)):
        path = f"{args.out_prefix}.{suffix}.tnsr"
        tensor_write(path, tensor)
        print(path)
    return 0


def _resolved_run_config(args) -> dict:
    return {
        "command": "run",
        "impl": args.impl,
        "order": args.order,
        "mode": args.mode or "causal",
        "denominator": args.denominator or "exact",
        "qmap": args.qmap or "identity",
        "kmap": args.kmap or "identity",
        "clamp": args.clamp,
        "gates": args.gates,
        "in_prefix": args.in_prefix,
        "out": args.out,
    }


def sidecar_to_argv(sidecar: dict) -> list[str]:
    """Rebuild the `run` argument vector from a sidecar (replay support)."""
    argv = ["run", "--impl", sidecar["impl"],
            "--mode", "causal" if sidecar["mode"] == "causal" else "bidir",
            "--in-prefix", sidecar["in_prefix"], "--out", sidecar["out"]]
    if sidecar["impl"] in ("taylor-direct", "recurrent"):
        argv += ["--order", str(sidecar["order"]),
                 "--denominator", sidecar["denominator"],
                 "--qmap", sidecar["qmap"], "--kmap", sidecar["kmap"]]
        if sidecar["clamp"] is not None:
            argv += ["--clamp", str(sidecar["clamp"])]
    elif sidecar["impl"] == "linear":
        argv += ["--qmap", sidecar["qmap"], "--kmap", sidecar["kmap"]]
    if sidecar["gates"] is not None:
        argv += ["--gates", sidecar["gates"]]
    return argv


def cmd_run(args) -> int:
    impl = args.impl
    mode = _mode(args.mode or "causal")
    needs_order = impl in ("taylor-direct", "recurrent")
    if needs_order and args.order is None:
        raise UsageError(f"--impl {impl} requires --order")
    if not needs_order and args.order is not None:
        raise UsageError(f"--impl {impl} does not take --order")
    if impl not in ("taylor-direct", "recurrent") and args.denominator is not None:
        raise UsageError(f"--impl {impl} does not take --denominator")
    if impl in ("softmax", "quadratic", "gated") and (args.qmap or args.kmap):
        raise UsageError(f"--impl {impl} does not take feature maps")
    if impl != "taylor-direct" and impl != "recurrent" and args.clamp is not None:
        raise UsageError(f"--impl {impl} does not take --clamp")

    denominator = DenominatorMode.parse(args.denominator or "exact")
    qmap = FeatureMapKind(args.qmap or "identity")
    kmap = FeatureMapKind(args.kmap or "identity")

    gates = None
    wants_gates = impl == "gated" or (needs_order and denominator.needs_gates)
    if wants_gates:
        if args.gates is None:
            raise UsageError("this configuration requires --gates")
        gates = load_gates(args.gates)
    elif args.gates is not None:
        raise UsageError("--gates given but no gated path selected")

    Q = tensor_read(f"{args.in_prefix}.q.tnsr")
    K = tensor_read(f"{args.in_prefix}.k.tnsr")
    V = tensor_read(f"{args.in_prefix}.v.tnsr")

    if impl == "softmax":
        out = softmax_attention(Q, K, V, mode)
    elif impl == "taylor-direct":
        cfg = AttentionConfig(order=args.order, mode=mode, denominator=denominator,
                              query_map=qmap, key_map=kmap, clamp=args.clamp)
        out = taylor_attention_direct(Q, K, V, cfg, gates)
    elif impl == "recurrent":
        cfg = AttentionConfig(order=args.order, mode=mode, denominator=denominator,
                              query_map=qmap, key_map=kmap, clamp=args.clamp)
        if mode is Mode.CAUSAL:
            out = recurrent_attention(Q, K, V, cfg, gates)
        else:
            out = bidirectional_recurrent_attention(Q, K, V, cfg, gates)
    elif impl == "linear":
        if mode is not Mode.CAUSAL:
            raise UsageError("--impl linear is the causal recurrence")
        out = linear_attention_recurrent(Q, K, V, qmap, kmap)
    elif impl == "quadratic":
        if mode is not Mode.CAUSAL:
            raise UsageError("--impl quadratic is the causal recurrence")
        out = quadratic_attention_recurrent(Q, K, V)
    else:
        factored, fused = gated_attention_matrix(Q, K, V, gates, mode)
        spread = float(np.max(np.abs(factored - fused)))
        if spread > 1e-12 * max(1.0, float(np.max(np.abs(fused)))):
            raise FloatingPointError(f"gated factorization mismatch: {spread}")
        out = fused

    tensor_write(args.out, out)
    with open(f"{args.out}.json", "w", newline="\n") as fh:
        json.dump(_resolved_run_config(args), fh, indent=2)
        fh.write("\n")
    print(args.out)
    return 0


def cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    report = suite_report(args.suite, checks)
    if args.json:
        write_report(args.json, report)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'pass' if c.passed else 'FAIL'}  {c.name:<{width}}  "
              f"measured={c.measured:.3e}  tolerance={c.tolerance:.1e}  [{c.config}]")
    total = len(checks)
    good = sum(c.passed for c in checks)
    print(f"suite {args.suite}: {good}/{total} checks passed")
    return 0 if report["all_pass"] else 1


def cmd_approx(args) -> int:
    rows = approx_error_sweep(parse_orders(args.orders), args.bound, args.seed,
                              args.n, args.d, args.e,
                              FeatureMapKind(args.qmap), FeatureMapKind(args.kmap))
    write_sweep_csv(args.csv, rows)
    print(args.csv)
    return 0


def cmd_bench(args) -> int:
    kinds, cells = parse_grid(args.grid)
    rows = bench_runtime(kinds, cells, repeats=args.repeats, seed=args.seed)
    write_bench_csv(args.csv, rows)
    print(args.csv)
    return 0


_DISPATCH = {"gen": cmd_gen, "run": cmd_run, "verify": cmd_verify,
             "approx": cmd_approx, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if exc.code else 0
    try:
        return _DISPATCH[args.command](args)
    except (TensorFormatError, ResourceLimitError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
