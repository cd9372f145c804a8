import csv
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import kstest

from exactquant.cli import main
from exactquant.harness import BITS_COLUMNS, ENTROPY_COLUMNS, MSE_COLUMNS


def _run_cli(argv, stdin=""):
    proc = subprocess.run(
        [sys.executable, "-m", "exactquant.cli", *argv],
        input=stdin, capture_output=True, text=True)
    return proc


def _read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_entropy_default_grid_row_count(tmp_path):
    out = tmp_path / "entropy.csv"
    assert main(["entropy", "--trials", "2000", "--seed", "5",
                 "--out", str(out)]) == 0
    rows = _read_rows(out)
    assert len(rows) == 72  # 2 schemes x 2 families x 2 sigmas x 9 t values
    assert list(rows[0].keys()) == ENTROPY_COLUMNS
    # sandwich with a small Monte-Carlo slack at 2000 draws
    for row in rows:
        lower, measured, upper = (float(row["lower"]), float(row["measured"]),
                                  float(row["upper"]))
        assert lower - 0.05 <= measured <= upper + 0.05
    # direct-vs-shifted gap below one bit at matched cells
    key = lambda r: (r["scheme"].split("-")[1], r["sigma"], r["t"])
    direct = {key(r): float(r["measured"]) for r in rows
              if r["scheme"].startswith("direct")}
    for r in rows:
        if r["scheme"].startswith("shifted"):
            assert float(r["measured"]) - direct[key(r)] < 1.0


def test_entropy_deterministic_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["entropy", "--trials", "500", "--seed", "9", "--out", str(a)])
    main(["entropy", "--trials", "500", "--seed", "9", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_agg_compare_single_n(tmp_path):
    out = tmp_path / "bits.csv"
    assert main(["agg-compare", "--n", "20", "--t", "64", "--trials", "100",
                 "--seed", "3", "--out", str(out)]) == 0
    rows = _read_rows(out)
    assert list(rows[0].keys()) == BITS_COLUMNS
    mechs = {r["mechanism"] for r in rows}
    assert {"irwin-hall", "aggregate-gaussian", "individual-direct"} <= mechs
    agg = next(r for r in rows if r["mechanism"] == "aggregate-gaussian-adaptive")
    assert float(agg["mean_bits"]) <= float(agg["bound"])


def test_dp_trusted_row_schema(tmp_path):
    out = tmp_path / "mse.csv"
    assert main(["dp-trusted", "--n", "50", "--d", "10", "--trials", "5",
                 "--eps", "2.0", "--seed", "4", "--out", str(out)]) == 0
    rows = _read_rows(out)
    assert list(rows[0].keys()) == MSE_COLUMNS
    assert {r["mechanism"] for r in rows} == {"sigm", "baseline"}
    assert len(rows) == 10  # 2 mechanisms x 5 trials


def test_dp_bits_contains_three_mechanism_rows(tmp_path):
    out = tmp_path / "bits.csv"
    assert main(["dp-bits", "--n", "100", "--d", "10", "--trials", "5",
                 "--eps", "6", "--seed", "6", "--out", str(out)]) == 0
    rows = _read_rows(out)
    assert {r["mechanism"] for r in rows} == {
        "aggregate-gaussian", "individual-shifted-variable",
        "individual-shifted-fixed"}


def test_langevin_writes_samples(tmp_path):
    out = tmp_path / "langevin.csv"
    assert main(["langevin", "--n", "3", "--d", "2", "--burn-in", "200",
                 "--samples", "100", "--per-client", "5",
                 "--step-gamma", "0.002", "--seed", "7",
                 "--out", str(out)]) == 0
    rows = _read_rows(out)
    assert len(rows) == 100
    assert set(rows[0]) == {"k", "running_mse", "theta_0", "theta_1"}
    assert all(math.isfinite(float(r["running_mse"])) for r in rows)


def test_encode_decode_pipeline_error_law():
    n = 2 * 10**4
    rng = np.random.default_rng(11)
    xs = rng.uniform(-5, 5, n)
    stdin = "\n".join(f"{x:.9f}" for x in xs)
    enc = _run_cli(["encode", "--scheme", "shifted", "--sigma", "1",
                    "--seed", "42"], stdin=stdin)
    assert enc.returncode == 0
    dec = _run_cli(["decode", "--scheme", "shifted", "--sigma", "1",
                    "--seed", "42"], stdin=enc.stdout)
    assert dec.returncode == 0
    ys = np.array([float(tok) for tok in dec.stdout.split()])
    err = ys - xs
    assert kstest(err, "norm").pvalue > 0.01


def test_encode_empty_input():
    proc = _run_cli(["encode"], stdin="")
    assert proc.returncode == 0
    assert proc.stdout == ""


def test_decode_mismatched_seed_defined_behavior():
    enc = _run_cli(["encode", "--seed", "1"], stdin="1.0 2.0 3.0")
    dec = _run_cli(["decode", "--seed", "2"], stdin=enc.stdout)
    assert dec.returncode == 0
    vals = [float(tok) for tok in dec.stdout.split()]
    assert len(vals) == 3 and all(math.isfinite(v) for v in vals)


def test_malformed_input_exits_one():
    proc = _run_cli(["encode"], stdin="1.0 nope 3.0")
    assert proc.returncode == 1
    proc = _run_cli(["decode"], stdin="7 3.5")
    assert proc.returncode == 1


def test_usage_error_exits_one():
    proc = _run_cli(["no-such-command"])
    assert proc.returncode == 1
    proc = _run_cli([])
    assert proc.returncode == 1


def test_flag_ranges_validated_before_execution():
    assert main(["entropy", "--sigma", "-1"]) == 1
    assert main(["entropy", "--delta", "2"]) == 1
    assert main(["dp-trusted", "--gamma-sub", "0"]) == 1
    assert main(["encode", "--trials", "0"]) == 1
