"""Command-line entry point for experiments and one-off mechanism runs.

Subcommands::

    entropy      grid of conditional-entropy measurements -> entropy.csv
    agg-compare  bits/client of the homomorphic mechanisms vs n -> bits.csv
    dp-trusted   subsampled mechanism vs quantize+noise baseline -> mse.csv
    dp-bits      bits/client to match the Gaussian mechanism -> bits.csv
    langevin     quantized Langevin toy run -> samples CSV
    encode       stdin decimals -> integer messages (one per token)
    decode       stdin integers -> decimals (inverts encode at equal seed)

Exit codes: 0 success, 1 usage error, 2 numeric failure.  Every subcommand
is deterministic under --seed.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .aggregate import aggregate_config, gaussian_mixture
from .applications import LangevinConfig, make_toy_gaussian_data, run_langevin
from .bounds import (
    adaptive_fixed_bits,
    entropy_report,
    irwin_hall_cost_bits,
    layered_entropy_pair,
    aggregate_cost_bound,
)
from .coding import gamma_lengths_array
from .distributions import gaussian, laplace, min_step
from .harness import (
    BITS_COLUMNS,
    DatasetSpec,
    ENTROPY_COLUMNS,
    MSE_COLUMNS,
    _aggregate_round,
    _individual_round,
    _irwin_hall_round,
    generate_data,
    run_experiment,
    write_csv,
)
from .privacy import gaussian_mechanism_sigma
from .quantizers import (
    layered_decode,
    layered_encode,
    shifted_sample_state,
    direct_sample_state,
)
from .randomness import SharedRandomness

_FAMILIES = {"gaussian": gaussian, "laplace": laplace}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)  # usage errors exit 1, not argparse's default 2


def _build_parser() -> _Parser:
    p = _Parser(prog="exactquant",
                description="exact-error quantization experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0,
                        help="decimal 64-bit stream seed")
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--out", type=str, default=None, help="CSV path")
        sp.add_argument("--sigma", type=float, default=1.0)
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--d", type=int, default=None)
        sp.add_argument("--t", type=float, default=None)
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--delta", type=float, default=1e-5)
        sp.add_argument("--gamma-sub", type=float, default=0.5)
        sp.add_argument("--bits", type=int, default=4)
        return sp

    common(sub.add_parser("entropy"))
    common(sub.add_parser("agg-compare"))
    common(sub.add_parser("dp-trusted"))
    common(sub.add_parser("dp-bits"))
    lv = common(sub.add_parser("langevin"))
    lv.add_argument("--step-gamma", type=float, default=5e-4)
    lv.add_argument("--burn-in", type=int, default=10_000)
    lv.add_argument("--samples", type=int, default=10_000)
    lv.add_argument("--per-client", type=int, default=20)
    for name in ("encode", "decode"):
        sp = common(sub.add_parser(name))
        sp.add_argument("--scheme", choices=("direct", "shifted"),
                        default="shifted")
    return p


def cmd_entropy(args) -> int:
    """Conditional-entropy grid: scheme x family x sigma x t."""
    trials = args.trials or 20_000
    rows = []
    root = SharedRandomness(args.seed)
    t_grid = ([args.t] if args.t else [2.0**k for k in range(3, 12)])
    cell = 0
    for family, make in _FAMILIES.items():
        for sigma in ([args.sigma] if args.sigma != 1.0 else [1.0, 3.0]):
            f = make(sigma)
            for scheme in ("direct", "shifted"):
                for t in t_grid:
                    rep = entropy_report(scheme, f, t, trials,
                                         root.substream(cell))
                    cell += 1
                    rows.append({
                        "scheme": f"{scheme}-{family}", "t": t,
                        "sigma": sigma, "lower": rep.lower,
                        "measured": rep.measured, "upper": rep.upper,
                    })
    write_csv(args.out or "entropy.csv", ENTROPY_COLUMNS, rows)
    return 0


def _bits_rows_for_n(n, t, sigma, trials, root):
    """bits.csv rows for the three mechanisms at one client count."""
    rows = []
    data_rng = root.substream(0)
    x = ((data_rng.uniforms(n) - 0.5) * t).reshape(n, 1)

    est_rows = {"irwin-hall": [], "aggregate-gaussian": [],
                "aggregate-gaussian-adaptive": []}
    for trial in range(trials):
        shared = root.substream(1 + trial)
        _, m_ih = _irwin_hall_round(x, sigma, shared)
        est_rows["irwin-hall"].append(gamma_lengths_array(m_ih).mean())
        _, m_ag, a = _aggregate_round(x, sigma, shared)
        est_rows["aggregate-gaussian"].append(gamma_lengths_array(m_ag).mean())
        est_rows["aggregate-gaussian-adaptive"].append(
            adaptive_fixed_bits(a, n, sigma, t).mean())

    agg_bound = aggregate_cost_bound(n, sigma, t)
    rows.append({"mechanism": "irwin-hall", "n": n, "t": t, "sigma": sigma,
                 "mean_bits": float(np.mean(est_rows["irwin-hall"])),
                 "bound": irwin_hall_cost_bits(n, sigma, t)})
    rows.append({"mechanism": "aggregate-gaussian", "n": n, "t": t,
                 "sigma": sigma,
                 "mean_bits": float(np.mean(est_rows["aggregate-gaussian"])),
                 "bound": agg_bound})
    rows.append({"mechanism": "aggregate-gaussian-adaptive", "n": n, "t": t,
                 "sigma": sigma,
                 "mean_bits": float(
                     np.mean(est_rows["aggregate-gaussian-adaptive"])),
                 "bound": agg_bound})
    # individual direct costs are entropy-based: measured H(M|S) plus the
    # one-bit variable-length overhead
    f = gaussian(sigma * math.sqrt(n))
    rep = entropy_report("direct", f, t, 20_000, root.substream(10**6))
    h_d, _ = layered_entropy_pair(f)
    upper = math.log2(t) + 8.0 * math.log2(math.e) / t * f.sigma + h_d
    rows.append({"mechanism": "individual-direct", "n": n, "t": t,
                 "sigma": sigma, "mean_bits": rep.measured + 1.0,
                 "bound": upper + 1.0})
    return rows


def cmd_agg_compare(args) -> int:
    """Bits/client of the homomorphic mechanisms against the client count."""
    trials = args.trials or 400
    sigma = args.sigma
    t_grid = [args.t] if args.t else [64.0, 2048.0]
    n_grid = [args.n] if args.n else [1, 2, 5, 10, 20, 50, 100, 200, 500]
    rows = []
    root = SharedRandomness(args.seed)
    block = 0
    for t in t_grid:
        for n in n_grid:
            rows.extend(_bits_rows_for_n(n, t, sigma, trials,
                                         root.substream(block)))
            block += 1
    write_csv(args.out or "bits.csv", BITS_COLUMNS, rows)
    return 0


def cmd_dp_trusted(args) -> int:
    """Subsampled-mechanism MSE against the dither+noise baseline."""
    n = args.n or 200
    d = args.d or 50
    gamma = args.gamma_sub
    trials = args.trials or 100
    eps_grid = [args.eps] if args.eps else [0.5, 1.0, 2.0, 4.0]
    spec = DatasetSpec(kind="bernoulli_uniform", n=n, d=d, p=0.8, c=1.0)
    rows = []
    for eps in eps_grid:
        sigma = gaussian_mechanism_sigma(eps, args.delta,
                                         2.0 / (gamma * n))
        budget = max(1, math.ceil(math.log2(
            2.0 + spec.coordinate_bound
            / (sigma * math.sqrt(n * gamma) * math.sqrt(math.log(4.0))))))
        for mech, kwargs in (("sigm", {}), ("baseline",
                                            {"bits_budget": budget})):
            reports = run_experiment(mech, spec, trials, args.seed,
                                     sigma=sigma, gamma=gamma, eps=eps,
                                     **kwargs)
            for r in reports:
                rows.append({"mechanism": mech, "eps": eps, "gamma": gamma,
                             "trial": r.trial, "mse": r.squared_error,
                             "bits_var": r.bits_variable,
                             "bits_fixed": r.bits_fixed})
    write_csv(args.out or "mse.csv", MSE_COLUMNS, rows)
    return 0


def cmd_dp_bits(args) -> int:
    """Bits/client/coordinate to realize the Gaussian mechanism exactly."""
    n = args.n or 500
    d = args.d or 75
    c = 10.0
    trials = args.trials or 50
    eps_grid = [args.eps] if args.eps else [1.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    spec = DatasetSpec(kind="l2_sphere", n=n, d=d, c=c)
    root = SharedRandomness(args.seed)
    data = generate_data(spec, root.substream(0))
    t_len = 2.0 * c
    rows = []
    for k, eps in enumerate(eps_grid):
        sigma = gaussian_mechanism_sigma(eps, args.delta, 2.0 * c / n)
        agg_bits = []
        var_bits = []
        for trial in range(trials):
            shared = root.substream(1 + k).substream(trial)
            _, m, _ = _aggregate_round(data, sigma, shared)
            agg_bits.append(gamma_lengths_array(m).mean())
            _, m_i, _ = _individual_round(data, sigma, "shifted", shared)
            var_bits.append(gamma_lengths_array(m_i).mean())
        eta = min_step(gaussian(sigma * math.sqrt(n)))
        fixed = math.ceil(math.log2(2.0 + t_len / eta))
        rows.append({"mechanism": "aggregate-gaussian", "n": n, "t": t_len,
                     "sigma": sigma, "mean_bits": float(np.mean(agg_bits)),
                     "bound": aggregate_cost_bound(n, sigma, t_len)})
        rows.append({"mechanism": "individual-shifted-variable", "n": n,
                     "t": t_len, "sigma": sigma,
                     "mean_bits": float(np.mean(var_bits)),
                     "bound": math.nan})
        rows.append({"mechanism": "individual-shifted-fixed", "n": n,
                     "t": t_len, "sigma": sigma, "mean_bits": float(fixed),
                     "bound": float(fixed)})
    write_csv(args.out or "bits.csv", BITS_COLUMNS, rows)
    return 0


def cmd_langevin(args) -> int:
    """Toy quantized Langevin run; writes samples and the running error."""
    n = args.n or 5
    d = args.d or 10
    root = SharedRandomness(args.seed)
    data = make_toy_gaussian_data(n, args.per_client, d, root.substream(0))
    cfg = LangevinConfig(step_gamma=args.step_gamma, n_clients=n, dim=d,
                         bits_b=args.bits, burn_in=args.burn_in,
                         n_samples=args.samples, data=data)
    samples = run_langevin(cfg, root.substream(1))
    target = cfg.posterior_mean
    running = np.cumsum(samples, axis=0) / np.arange(
        1, len(samples) + 1)[:, None]
    mse = ((running - target) ** 2).sum(axis=1)
    columns = ["k", "running_mse"] + [f"theta_{j}" for j in range(d)]
    rows = [[k, mse[k]] + list(samples[k]) for k in range(len(samples))]
    write_csv(args.out or "langevin.csv", columns, rows)
    return 0


def _read_tokens():
    return sys.stdin.read().split()


def cmd_encode(args) -> int:
    """Read decimals on stdin, write one integer message per token."""
    tokens = _read_tokens()
    f = _FAMILIES["gaussian"](args.sigma)
    sample = (direct_sample_state if args.scheme == "direct"
              else shifted_sample_state)
    root = SharedRandomness(args.seed)
    out = []
    for i, tok in enumerate(tokens):
        try:
            x = float(tok)
        except ValueError:
            print(f"not a decimal: {tok!r}", file=sys.stderr)
            return 1
        st = sample(f, root.substream(i))
        out.append(str(int(layered_encode(x, st))))
    sys.stdout.write("\n".join(out) + ("\n" if out else ""))
    return 0


def cmd_decode(args) -> int:
    """Read integer messages on stdin, write decoded decimals."""
    tokens = _read_tokens()
    f = _FAMILIES["gaussian"](args.sigma)
    sample = (direct_sample_state if args.scheme == "direct"
              else shifted_sample_state)
    root = SharedRandomness(args.seed)
    out = []
    for i, tok in enumerate(tokens):
        try:
            m = int(tok)
        except ValueError:
            print(f"not an integer: {tok!r}", file=sys.stderr)
            return 1
        st = sample(f, root.substream(i))
        out.append(repr(float(layered_decode(m, st))))
    sys.stdout.write("\n".join(out) + ("\n" if out else ""))
    return 0


_COMMANDS = {
    "entropy": cmd_entropy,
    "agg-compare": cmd_agg_compare,
    "dp-trusted": cmd_dp_trusted,
    "dp-bits": cmd_dp_bits,
    "langevin": cmd_langevin,
    "encode": cmd_encode,
    "decode": cmd_decode,
}


def _validate_ranges(args) -> str | None:
    checks = [
        (args.sigma > 0, "--sigma must be positive"),
        (args.trials is None or args.trials > 0, "--trials must be positive"),
        (args.n is None or args.n >= 1, "--n must be at least 1"),
        (args.d is None or args.d >= 1, "--d must be at least 1"),
        (args.t is None or args.t > 0, "--t must be positive"),
        (args.eps is None or args.eps > 0, "--eps must be positive"),
        (0.0 < args.delta < 1.0, "--delta must lie in (0, 1)"),
        (0.0 < args.gamma_sub <= 1.0, "--gamma-sub must lie in (0, 1]"),
        (args.bits >= 1, "--bits must be at least 1"),
        (0 <= args.seed < 2**64, "--seed must be a 64-bit integer"),
    ]
    for ok, message in checks:
        if not ok:
            return message
    return None


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    problem = _validate_ranges(args)
    if problem is not None:
        print(problem, file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (RuntimeError, FloatingPointError, OverflowError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
