"""Distributed-mean-estimation experiment runner.

Generates client data, executes a mechanism across independent trials and
collects per-trial reports (estimate, squared error, bits under variable and
fixed-length coding).  Stream layout per experiment seed: data comes from
``root.substream(0)``, trial t from ``root.substream(1 + t)``.

CSV schemas (exact column names):

* ``entropy.csv``:  scheme,t,sigma,lower,measured,upper
* ``mse.csv``:      mechanism,eps,gamma,trial,mse,bits_var,bits_fixed
* ``bits.csv``:     mechanism,n,t,sigma,mean_bits,bound

Custom data files: first line ``n d``, then one client per row of d
whitespace-separated decimals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .aggregate import aggregate_config, gaussian_mixture
from .bounds import adaptive_fixed_bits, irwin_hall_cost_bits, aggregate_cost_bound
from .coding import gamma_lengths_array
from .distributions import gaussian, min_step
from .privacy import baseline_dither_plus_gaussian, sigm_round
from .quantizers import (
    direct_state_from_draws,
    layered_decode,
    round_half_up_float,
    shifted_state_from_draws,
)
from .randomness import (
    SharedRandomness,
    StreamBatch,
    grid_stream_ids,
    leading_uniforms,
    philox4x64,
)

ENTROPY_COLUMNS = ["scheme", "t", "sigma", "lower", "measured", "upper"]
MSE_COLUMNS = ["mechanism", "eps", "gamma", "trial", "mse", "bits_var",
               "bits_fixed"]
BITS_COLUMNS = ["mechanism", "n", "t", "sigma", "mean_bits", "bound"]

MECHANISMS = ("exact-mean", "individual-direct", "individual-shifted",
              "irwin-hall", "aggregate-gaussian", "sigm", "baseline")

_U64 = np.uint64
_INV53 = 2.0 ** -53


@dataclass(frozen=True)
class DatasetSpec:
    """What data the clients hold."""

    kind: str  # bernoulli_uniform | l2_sphere | custom
    n: int
    d: int
    p: float = 0.8
    c: float = 1.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("bernoulli_uniform", "l2_sphere", "custom"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "custom" and not self.path:
            raise ValueError("custom data needs a path")

    @property
    def coordinate_bound(self) -> float:
        """Per-coordinate magnitude bound of the generated data."""
        if self.kind == "bernoulli_uniform":
            return 1.0 / math.sqrt(self.d)
        return self.c


@dataclass
class MechanismReport:
    """One trial of one mechanism."""

    trial: int
    mechanism: str
    estimate: np.ndarray
    true_mean: np.ndarray
    squared_error: float
    bits_variable: float
    bits_fixed: float
    seed: int


def generate_data(spec: DatasetSpec, rng: SharedRandomness) -> np.ndarray:
    """Client data matrix (n, d) respecting the declared norm bound."""
    n, d = spec.n, spec.d
    if spec.kind == "bernoulli_uniform":
        signs = np.where(rng.uniforms(n * d) < spec.p, 1.0, -1.0)
        mags = rng.uniforms(n * d)
        return (signs * mags).reshape(n, d) / math.sqrt(d)
    if spec.kind == "l2_sphere":
        z = rng.normals(n * d).reshape(n, d)
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        return spec.c * z / norms
    rows = []
    with open(spec.path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("custom data header must be 'n d'")
        n_file, d_file = int(header[0]), int(header[1])
        for line in fh:
            if line.strip():
                rows.append([float(tok) for tok in line.split()])
    data = np.asarray(rows, dtype=np.float64)
    if data.shape != (n_file, d_file):
        raise ValueError("custom data body does not match its header")
    return data


def _entry_words(shared: SharedRandomness, n: int, d: int) -> np.ndarray:
    ids = grid_stream_ids(shared, np.arange(1, n + 1), np.arange(d))
    counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
    key = np.stack([np.broadcast_to(np.uint64(shared.seed), ids.shape), ids],
                   axis=-1)
    return philox4x64(counter, key)


def _individual_round(x, sigma, variant, shared):
    """Individual mechanism: per-entry layered quantizer, average of decodes.

    The per-client noise is N(0, n*sigma^2) so the averaged estimate carries
    exactly N(0, sigma^2) per coordinate.
    """
    n, d = x.shape
    f = gaussian(sigma * math.sqrt(n))
    words = _entry_words(shared, n, d)
    open0 = ((words[..., 0] >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    open1 = ((words[..., 1] >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    half2 = (words[..., 2] >> _U64(11)).astype(np.float64) * _INV53
    z = ndtri(open0) * f.sigma
    build = (direct_state_from_draws if variant == "direct"
             else shifted_state_from_draws)
    st = build(f, z, open1, half2)
    m = round_half_up_float(x / st.step + st.u)
    est = layered_decode(m, st).mean(axis=0)
    return est, m, st


def _aggregate_round(x, sigma, shared):
    """Aggregate Gaussian mechanism, one (A, B) per coordinate."""
    n, d = x.shape
    cfg = aggregate_config(n, sigma)
    mix = gaussian_mixture(n)
    lanes = StreamBatch(shared, np.arange(d), suffix=(0,))
    a, b = mix.draw_batch(lanes)
    ids = grid_stream_ids(shared, np.arange(d), np.arange(1, n + 1))
    s = leading_uniforms(shared.seed, ids, 1)[..., 0].T - 0.5  # (n, d)
    m = round_half_up_float(x / (a[None, :] * cfg.step_w) + s)
    est = (a * cfg.step_w / n) * (m.sum(axis=0) - s.sum(axis=0)) + b * sigma
    return est, m, a


def _irwin_hall_round(x, sigma, shared):
    n, d = x.shape
    cfg = aggregate_config(n, sigma)
    ids = grid_stream_ids(shared, np.arange(d), np.arange(1, n + 1))
    s = leading_uniforms(shared.seed, ids, 1)[..., 0].T - 0.5
    m = round_half_up_float(x / cfg.step_w + s)
    est = (cfg.step_w / n) * (m.sum(axis=0) - s.sum(axis=0))
    return est, m


def run_experiment(mechanism: str, spec: DatasetSpec, trials: int, seed: int,
                   sigma: float = 1.0, gamma: float = 1.0,
                   eps: float = math.nan, bits_budget=None,
                   data: np.ndarray | None = None) -> list[MechanismReport]:
    """Per-trial reports for one mechanism on one dataset.

    ``sigma`` is the target std of the aggregate estimate's noise (for the
    subsampled mechanism: conditional per-coordinate noise).
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    root = SharedRandomness(seed)
    if data is None:
        data = generate_data(spec, root.substream(0))
    n, d = data.shape
    true_mean = data.mean(axis=0)
    t_len = 2.0 * spec.coordinate_bound
    reports = []
    for trial in range(trials):
        shared = root.substream(1 + trial)
        bits_var = math.nan
        bits_fixed = math.nan
        if mechanism == "exact-mean":
            est = true_mean.copy()
            bits_var = bits_fixed = 0.0
        elif mechanism in ("individual-direct", "individual-shifted"):
            variant = mechanism.split("-")[1]
            est, m, _ = _individual_round(data, sigma, variant, shared)
            bits_var = gamma_lengths_array(m).sum(axis=1).mean()
            if variant == "shifted":
                eta = min_step(gaussian(sigma * math.sqrt(n)))
                bits_fixed = d * math.ceil(math.log2(2.0 + t_len / eta))
        elif mechanism == "irwin-hall":
            est, m = _irwin_hall_round(data, sigma, shared)
            bits_var = gamma_lengths_array(m).sum(axis=1).mean()
            bits_fixed = d * irwin_hall_cost_bits(n, sigma, t_len)
        elif mechanism == "aggregate-gaussian":
            est, m, a = _aggregate_round(data, sigma, shared)
            bits_var = gamma_lengths_array(m).sum(axis=1).mean()
            bits_fixed = adaptive_fixed_bits(a, n, sigma, t_len).sum()
        elif mechanism == "sigm":
            out = sigm_round(data, sigma, gamma, shared,
                             clip_c=spec.coordinate_bound)
            est = out.estimate
            bits_var = gamma_lengths_array(out.messages)[out.selection].sum() / n
            bits_fixed = out.bits_fixed_per_client.mean()
        elif mechanism == "baseline":
            est = baseline_dither_plus_gaussian(
                data, bits_budget, sigma, gamma, shared,
                clip_c=spec.coordinate_bound)
            if bits_budget is not None:
                bits_fixed = float(np.sum(np.broadcast_to(
                    np.asarray(bits_budget, dtype=float), (d,))) * gamma)
        sq = float(np.sum((est - true_mean) ** 2))
        reports.append(MechanismReport(
            trial=trial, mechanism=mechanism, estimate=est,
            true_mean=true_mean, squared_error=sq, bits_variable=bits_var,
            bits_fixed=bits_fixed, seed=int(shared.stream_id)))
    return reports


def summarize(reports: list[MechanismReport]) -> dict:
    """Mean MSE with a 1.96-s.e. confidence halfwidth, mean bits."""
    mse = np.array([r.squared_error for r in reports])
    bits_v = np.array([r.bits_variable for r in reports])
    bits_f = np.array([r.bits_fixed for r in reports])
    return {
        "mechanism": reports[0].mechanism,
        "trials": len(reports),
        "mse_mean": float(mse.mean()),
        "mse_ci95": float(1.96 * mse.std() / math.sqrt(len(reports))),
        "bits_var_mean": float(np.nanmean(bits_v)) if np.any(
            np.isfinite(bits_v)) else math.nan,
        "bits_fixed_mean": float(np.nanmean(bits_f)) if np.any(
            np.isfinite(bits_f)) else math.nan,
    }


def compare_mechanisms(mechanisms, spec: DatasetSpec, trials: int, seed: int,
                       sigma: float = 1.0, gamma: float = 1.0) -> list[dict]:
    """Summary rows for several mechanisms on identical data and trials."""
    if len(mechanisms) < 2:
        raise ValueError("need at least two mechanisms to compare")
    root = SharedRandomness(seed)
    data = generate_data(spec, root.substream(0))
    rows = []
    for mech in mechanisms:
        reports = run_experiment(mech, spec, trials, seed, sigma=sigma,
                                 gamma=gamma, data=data)
        row = summarize(reports)
        n, d = data.shape
        t_len = 2.0 * spec.coordinate_bound
        if mech == "aggregate-gaussian":
            row["bound"] = aggregate_cost_bound(n, sigma, t_len) * d
        elif mech == "irwin-hall":
            row["bound"] = irwin_hall_cost_bits(n, sigma, t_len) * d
        else:
            row["bound"] = math.nan
        rows.append(row)
    return rows


def write_csv(path: str, columns: list[str], rows) -> None:
    """Write rows (dicts or sequences) under the exact documented header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                writer.writerow([row[c] for c in columns])
            else:
                writer.writerow(list(row))
