import json
import os
import subprocess
import sys

import numpy as np

from taylor_attention import cli
from taylor_attention.config import GatePair
from taylor_attention.core import tensor_read

SRC = os.path.join(os.path.dirname(__file__), "..", "src")


def run_cli(args, cwd):
    env = dict(os.environ, PYTHONPATH=SRC)
    return subprocess.run([sys.executable, "-m", "taylor_attention", *args],
                          cwd=cwd, env=env, capture_output=True, text=True)


def gen(tmp_path, prefix="t", seed=1, n=8, m=8, d=2, e=2, scale=1.0):
    rc = cli.main(["gen", "--seed", str(seed), "--n", str(n), "--m", str(m),
                   "--d", str(d), "--e", str(e), "--scale", str(scale),
                   "--out-prefix", str(tmp_path / prefix)])
    assert rc == 0
    return str(tmp_path / prefix)


def test_gen_bit_identical_reruns(tmp_path):
    p1 = gen(tmp_path, "a")
    blob1 = open(p1 + ".q.tnsr", "rb").read()
    p2 = gen(tmp_path, "b")
    assert open(p2 + ".q.tnsr", "rb").read() == blob1
    p3 = gen(tmp_path, "c", seed=2)
    assert open(p3 + ".q.tnsr", "rb").read() != blob1


def test_gen_usage_error_exit_2(tmp_path):
    rc = cli.main(["gen", "--seed", "1", "--n", "0", "--m", "8", "--d", "2",
                   "--e", "2", "--out-prefix", str(tmp_path / "x")])
    assert rc == 2


def test_gen_unknown_flag_exit_2(tmp_path):
    rc = cli.main(["gen", "--seed", "1", "--n", "2", "--m", "2", "--d", "1",
                   "--e", "1", "--out-prefix", str(tmp_path / "x"), "--bogus", "1"])
    assert rc == 2


def test_run_softmax_and_taylor_converge(tmp_path):
    prefix = gen(tmp_path, scale=0.4)  # |logits| <= 2*0.16 < 1
    assert cli.main(["run", "--impl", "softmax", "--in-prefix", prefix,
                     "--out", str(tmp_path / "sm.tnsr")]) == 0
    assert cli.main(["run", "--impl", "taylor-direct", "--order", "30",
                     "--clamp", "1", "--denominator", "exact",
                     "--in-prefix", prefix, "--out", str(tmp_path / "ty.tnsr")]) == 0
    sm = tensor_read(tmp_path / "sm.tnsr")
    ty = tensor_read(tmp_path / "ty.tnsr")
    assert np.max(np.abs(sm - ty)) <= 1e-6 * np.max(np.abs(sm))


def test_run_recurrent_order1_vs_linear_differ_by_order0_term(tmp_path):
    # truncation at order 1 includes the order-0 term; subtracting the
    # running value sum recovers the pure linear-attention output
    prefix = gen(tmp_path)
    assert cli.main(["run", "--impl", "recurrent", "--order", "1",
                     "--denominator", "none", "--in-prefix", prefix,
                     "--out", str(tmp_path / "rec1.tnsr")]) == 0
    assert cli.main(["run", "--impl", "linear", "--in-prefix", prefix,
                     "--out", str(tmp_path / "lin.tnsr")]) == 0
    rec1 = tensor_read(tmp_path / "rec1.tnsr")
    lin = tensor_read(tmp_path / "lin.tnsr")
    vsum = np.cumsum(tensor_read(prefix + ".v.tnsr"), axis=0)
    assert np.max(np.abs(rec1 - (lin + vsum))) <= 1e-12 * max(1.0, np.max(np.abs(rec1)))


def test_run_invalid_combinations_exit_2(tmp_path):
    prefix = gen(tmp_path)
    bad = [
        ["run", "--impl", "linear", "--order", "3", "--in-prefix", prefix,
         "--out", str(tmp_path / "x.tnsr")],
        ["run", "--impl", "gated", "--in-prefix", prefix,
         "--out", str(tmp_path / "x.tnsr")],
        ["run", "--impl", "softmax", "--denominator", "none", "--in-prefix", prefix,
         "--out", str(tmp_path / "x.tnsr")],
        ["run", "--impl", "recurrent", "--in-prefix", prefix,
         "--out", str(tmp_path / "x.tnsr")],
        ["run", "--impl", "quadratic", "--qmap", "relu", "--in-prefix", prefix,
         "--out", str(tmp_path / "x.tnsr")],
    ]
    for argv in bad:
        assert cli.main(argv) == 2, argv


def test_gen_io_failure_exit_3(tmp_path):
    rc = cli.main(["gen", "--seed", "1", "--n", "2", "--m", "2", "--d", "1",
                   "--e", "1", "--out-prefix", str(tmp_path / "no" / "dir" / "x")])
    assert rc == 3


def test_run_missing_inputs_exit_3(tmp_path):
    rc = cli.main(["run", "--impl", "softmax", "--in-prefix",
                   str(tmp_path / "nope"), "--out", str(tmp_path / "x.tnsr")])
    assert rc == 3


def test_run_corrupt_input_exit_3(tmp_path):
    prefix = gen(tmp_path)
    with open(prefix + ".q.tnsr", "r+b") as fh:
        fh.write(b"JUNK")
    rc = cli.main(["run", "--impl", "softmax", "--in-prefix", prefix,
                   "--out", str(tmp_path / "x.tnsr")])
    assert rc == 3


def test_run_gated_with_gates_file(tmp_path):
    prefix = gen(tmp_path, n=6, m=6)
    gates_path = tmp_path / "gates.json"
    cli.save_gates(gates_path, GatePair(np.linspace(0, 1, 6), np.linspace(1, 0, 6)))
    assert cli.main(["run", "--impl", "gated", "--gates", str(gates_path),
                     "--in-prefix", prefix, "--out", str(tmp_path / "g.tnsr")]) == 0
    out = tensor_read(tmp_path / "g.tnsr")
    assert out.shape == (6, 2)
    assert out[0].tolist() == [0.0, 0.0]  # g_in[0] == 0 zeroes the first row


def test_run_gate_denominator_needs_gates(tmp_path):
    prefix = gen(tmp_path, n=6, m=6)
    rc = cli.main(["run", "--impl", "recurrent", "--order", "2",
                   "--denominator", "gate", "--in-prefix", prefix,
                   "--out", str(tmp_path / "x.tnsr")])
    assert rc == 2
    gates_path = tmp_path / "gates.json"
    cli.save_gates(gates_path, GatePair(np.linspace(0, 1, 6), np.linspace(1, 0, 6)))
    rc = cli.main(["run", "--impl", "recurrent", "--order", "2",
                   "--denominator", "gate_seq", "--gates", str(gates_path),
                   "--in-prefix", prefix, "--out", str(tmp_path / "x.tnsr")])
    assert rc == 0


def test_run_bad_gates_file_exit_3(tmp_path):
    prefix = gen(tmp_path, n=4, m=4)
    gates_path = tmp_path / "gates.json"
    gates_path.write_text("{\"g_in\": [0.5, 2.0, 0.5, 0.5], \"g_out\": [1, 1, 1, 1]}")
    rc = cli.main(["run", "--impl", "gated", "--gates", str(gates_path),
                   "--in-prefix", prefix, "--out", str(tmp_path / "x.tnsr")])
    assert rc == 3


def test_run_sidecar_replay(tmp_path):
    prefix = gen(tmp_path, n=6, m=6, d=2, e=3, scale=0.5)
    out1 = tmp_path / "o1.tnsr"
    assert cli.main(["run", "--impl", "recurrent", "--order", "3",
                     "--denominator", "l2_norm", "--qmap", "elu_plus_one",
                     "--kmap", "relu", "--mode", "causal",
                     "--in-prefix", prefix, "--out", str(out1)]) == 0
    sidecar = json.loads((tmp_path / "o1.tnsr.json").read_text())
    assert sidecar["impl"] == "recurrent" and sidecar["denominator"] == "l2_norm"
    argv = cli.sidecar_to_argv(sidecar)
    argv[argv.index(str(out1))] = str(tmp_path / "o2.tnsr")
    assert cli.main(argv) == 0
    assert (tmp_path / "o1.tnsr").read_bytes() == (tmp_path / "o2.tnsr").read_bytes()


def test_run_bidirectional_mode(tmp_path):
    prefix = gen(tmp_path, n=5, m=9, d=2, e=2, scale=0.5)
    assert cli.main(["run", "--impl", "recurrent", "--order", "2", "--mode", "bidir",
                     "--in-prefix", prefix, "--out", str(tmp_path / "b.tnsr")]) == 0
    assert tensor_read(tmp_path / "b.tnsr").shape == (5, 2)
    # causal with N != M is a shape error -> usage exit
    rc = cli.main(["run", "--impl", "recurrent", "--order", "2",
                   "--in-prefix", prefix, "--out", str(tmp_path / "c.tnsr")])
    assert rc == 2


def test_verify_kron_subprocess(tmp_path):
    res = run_cli(["verify", "--suite", "kron", "--json", "report.json"], cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    assert "pass" in res.stdout
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["suite"] == "kron" and report["all_pass"] is True
    row = report["checks"][0]
    assert set(row) == {"name", "config", "measured", "tolerance", "pass"}


def test_verify_detects_broken_factorial_table(tmp_path, monkeypatch):
    # sabotage the weight table used by the recurrent scan only; the
    # equivalence suite must fail and the CLI must exit 1
    from taylor_attention import recurrent as rec_mod
    import taylor_attention.core as core_mod

    def broken(order):
        w = core_mod.taylor_weights(order)
        if order >= 2:
            w[2] *= 1.22
        return w

    monkeypatch.setattr(rec_mod, "taylor_weights", broken)
    rc = cli.main(["verify", "--suite", "equivalence",
                   "--json", str(tmp_path / "broken.json")])
    assert rc == 1
    report = json.loads((tmp_path / "broken.json").read_text())
    assert report["all_pass"] is False
    assert any(not row["pass"] and row["name"] == "recurrent_vs_direct"
               for row in report["checks"])


def test_approx_orders_range_and_single(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["approx", "--orders", "0..4", "--bound", "1",
                     "--csv", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "order,max_rel_err,mean_rel_err" and len(lines) == 6
    assert cli.main(["approx", "--orders", "0..0", "--csv", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_bench_cli_small_grid(tmp_path):
    out = tmp_path / "b.csv"
    rc = cli.main(["bench", "--grid", "kinds=recurrent;N=16,32;d=2;e=2;order=2",
                   "--repeats", "3", "--csv", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "impl,N,d,e,order,repeats,median_ns,state_elements,checksum"
    assert len(lines) == 3
    states = [int(line.split(",")[7]) for line in lines[1:]]
    assert states[0] == states[1] == (1 + 2 + 4) * 3


def test_bench_cli_resource_guard_exit_3(tmp_path):
    rc = cli.main(["bench", "--grid", "kinds=recurrent;N=16;d=4;e=4;order=20",
                   "--repeats", "3", "--csv", str(tmp_path / "x.csv")])
    assert rc == 3


def test_bench_cli_bad_grid_exit_2(tmp_path):
    rc = cli.main(["bench", "--grid", "kinds=warp_drive;N=16",
                   "--csv", str(tmp_path / "x.csv")])
    assert rc == 2
