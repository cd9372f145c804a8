"""Downstream uses of exact-error compression.

* An exact-noise compressor: transmitting a vector so that the receiver's
  reconstruction error is exactly Gaussian, either at a requested variance or
  at a fixed per-coordinate bit budget (sup-norm scaling).
* A variance-compensated quantized Langevin sampler for distributed quadratic
  potentials: clients compress variance-reduced gradients with the compressor
  above, the server tops the injected noise up to the discretization level.
* The randomized-smoothing perturbation: compressing the iterate doubles as
  the smoothing noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

from .distributions import gaussian
from .quantizers import (
    layered_decode,
    layered_encode,
    shifted_sample_state,
    shifted_state_from_draws,
)
from .randomness import SharedRandomness, grid_stream_ids, philox4x64

_U64 = np.uint64
_INV53 = 2.0 ** -53
_ETA_FACTOR = 2.0 * math.sqrt(math.log(4.0))  # minimal step per unit sigma


@dataclass(frozen=True)
class LangevinConfig:
    """Quantized Langevin run on client potentials sum ||theta - y_ij||^2/2.

    ``data`` has shape (n_clients, points_per_client, dim).  The quadratic
    target contracts only for step sizes below 2/(total point count); the
    constructor enforces that documented bound.
    """

    step_gamma: float
    n_clients: int
    dim: int
    bits_b: int
    burn_in: int
    n_samples: int
    data: np.ndarray

    def __post_init__(self):
        n, per, d = self.data.shape
        if (n, d) != (self.n_clients, self.dim):
            raise ValueError("data shape does not match n_clients/dim")
        total = n * per
        if not (0.0 < self.step_gamma < 2.0 / total):
            raise ValueError("step size outside the stable range (0, 2/N)")
        if self.bits_b < 2:
            raise ValueError("budget must be at least 2 bits per coordinate")

    @property
    def anchor(self) -> np.ndarray:
        """Variance-reduction anchor: the potential's minimizer (data mean)."""
        return self.data.mean(axis=(0, 1))

    @property
    def posterior_mean(self) -> np.ndarray:
        return self.anchor

    @property
    def posterior_var(self) -> float:
        return 1.0 / (self.data.shape[0] * self.data.shape[1])


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    iteration: int


def exact_noise_compressor(x, variance: float, rng: SharedRandomness):
    """Compress ``x`` so the reconstruction error is exactly N(0, variance).

    Returns (y, reported_variance).  Zero variance is the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0.0:
        return x.copy(), 0.0
    f = gaussian(math.sqrt(variance))
    st = shifted_sample_state(f, rng, size=x.size)
    m = layered_encode(x.ravel(), st)
    y = layered_decode(m, st).reshape(x.shape)
    return y, float(variance)


def budget_noise_sigma(bits_b: int, t: float = 2.0) -> float:
    """Smallest noise std whose shifted quantizer fits ``bits_b`` bits.

    Inverts the support bound |supp M| <= 2 + t/eta with eta the minimal
    step 2*sigma*sqrt(ln 4); one bit cannot carry any nonzero interval.
    """
    if bits_b < 2:
        raise ValueError("budget must be at least 2 bits per coordinate")
    return t / ((2.0 ** bits_b - 2.0) * _ETA_FACTOR)


def compress_with_budget(x, bits_b: int, rng: SharedRandomness):
    """Sup-norm-scaled exact-Gaussian compression at a fixed bit budget.

    Scales by the sup norm, quantizes the scaled vector on [-1, 1] with the
    budget-implied noise, and reports the achieved variance
    sigma_b^2 * ||x||_inf^2.  The zero vector passes through unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = float(np.max(np.abs(x)))
    if scale == 0.0:
        return x.copy(), 0.0
    sigma_b = budget_noise_sigma(bits_b)
    y_scaled, _ = exact_noise_compressor(x / scale, sigma_b**2, rng)
    return scale * y_scaled, sigma_b**2 * scale**2


def _grid_words(shared: SharedRandomness, rows, cols):
    ids = grid_stream_ids(shared, rows, cols)
    counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
    key = np.stack([np.broadcast_to(np.uint64(shared.seed), ids.shape), ids],
                   axis=-1)
    return philox4x64(counter, key)


@lru_cache(maxsize=8)
def _budget_family(bits_b: int):
    sigma_b = budget_noise_sigma(bits_b)
    return gaussian(sigma_b), sigma_b


def _compress_clients(h, words, bits_b):
    """Budget-compress every client row of ``h`` (n, d) in one pass.

    ``words`` are the raw Philox words of streams (i, j), i = 1..n; words
    0..2 feed the layered state (error draw, height, dither).
    """
    scales = np.max(np.abs(h), axis=1)
    f, sigma_b = _budget_family(bits_b)
    open0 = ((words[..., 0] >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    open1 = ((words[..., 1] >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    half2 = (words[..., 2] >> _U64(11)).astype(np.float64) * _INV53
    st = shifted_state_from_draws(f, ndtri(open0) * sigma_b, open1, half2)

    live = scales > 0.0
    safe = np.where(live, scales, 1.0)
    m = layered_encode(h / safe[:, None], st)
    decoded = layered_decode(m, st) * safe[:, None]
    g = np.where(live[:, None], decoded, 0.0)
    v = np.where(live, sigma_b**2 * scales**2, 0.0)
    return g, v


def qlsd_star_step(state: ChainState, cfg: LangevinConfig,
                   shared: SharedRandomness) -> ChainState:
    """One variance-compensated quantized Langevin step (full participation).

    Clients send compressed variance-reduced gradients; the server adds
    noise beta*Z with beta^2 = max(0, 2*gamma - gamma^2 * sum_i v_i) so the
    per-step injected variance is exactly 2*gamma whenever the compression
    error has not already exceeded it.
    """
    n, per, d = cfg.data.shape
    gamma = cfg.step_gamma
    step_rng = shared.substream(state.iteration)
    # full-batch variance-reduced gradient: sum_j grad U_ij(theta) - grad
    # U_ij(anchor) collapses to per*(theta - anchor) for quadratic potentials
    h = np.broadcast_to(per * (state.theta - cfg.anchor), (n, d))
    # one grid covers server noise (row 0) and the client states (rows 1..n)
    words = _grid_words(step_rng, np.arange(0, n + 1), np.arange(d))
    g, v = _compress_clients(h, words[1:], cfg.bits_b)
    beta_sq = max(0.0, 2.0 * gamma - gamma**2 * float(v.sum()))
    if not np.isfinite(beta_sq):
        raise FloatingPointError("noise compensation is not finite")
    z = ndtri(((words[0, :, 0] >> _U64(11)).astype(np.float64) + 0.5)
              * _INV53)
    theta = state.theta - gamma * g.sum(axis=0) + math.sqrt(beta_sq) * z
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("chain diverged")
    return ChainState(theta=theta, iteration=state.iteration + 1)


def beta_squared(gamma: float, variances) -> float:
    """Noise compensation max(0, 2*gamma - gamma^2 * sum v_i)."""
    total = float(np.sum(variances))
    return max(0.0, 2.0 * gamma - gamma**2 * total)


def run_langevin(cfg: LangevinConfig, shared: SharedRandomness,
                 theta0: np.ndarray | None = None) -> np.ndarray:
    """Run the chain; returns the (n_samples, dim) post-burn-in samples."""
    theta = np.zeros(cfg.dim) if theta0 is None else np.asarray(theta0, float)
    state = ChainState(theta=theta, iteration=0)
    for _ in range(cfg.burn_in):
        state = qlsd_star_step(state, cfg, shared)
    out = np.empty((cfg.n_samples, cfg.dim))
    for k in range(cfg.n_samples):
        state = qlsd_star_step(state, cfg, shared)
        out[k] = state.theta
    return out


def make_toy_gaussian_data(n_clients: int, per_client: int, dim: int,
                           rng: SharedRandomness) -> np.ndarray:
    """Non-iid toy data: y_ij ~ N(mu_i, I) with mu_i ~ N(0, 25 I)."""
    mu = rng.normals(n_clients * dim).reshape(n_clients, 1, dim) * 5.0
    pts = rng.normals(n_clients * per_client * dim).reshape(
        n_clients, per_client, dim)
    return mu + pts


def smoothing_perturb(theta, sigma_s: float, rng: SharedRandomness):
    """Exact-Gaussian perturbation of the iterate via compression.

    The compressed iterate equals theta + sigma_s * xi with xi standard
    normal, so downstream subgradient evaluations at the perturbed point
    realize randomized smoothing without a separate sampling step.
    """
    if sigma_s < 0:
        raise ValueError("sigma must be nonnegative")
    theta = np.asarray(theta, dtype=np.float64)
    if sigma_s == 0.0:
        return theta.copy()
    y, _ = exact_noise_compressor(theta, sigma_s**2, rng)
    return y
