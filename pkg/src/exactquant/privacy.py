"""Differential-privacy calibration and the subsampled Gaussian mechanism.

The subsampled mechanism selects each (client, coordinate) entry with
probability gamma; selected entries are quantized with the shifted layered
quantizer for the noise N(0, (sigma*gamma*n)^2) applied to the sqrt(selected
count)-scaled input, so the decoded per-coordinate error is exactly
N(0, sigma^2) conditional on the selection.

Shared-randomness layout (one round stream per coordinate set): the stream
of entry (i, j) is ``round.substream(i, j)`` for clients i = 1..n; its first
draw decides selection, the next three feed the layered state.  Coordinates
with no selected client fall back to a pure noise draw from
``round.substream(0, j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .distributions import gaussian, min_step
from .quantizers import (
    round_half_up,
    shifted_sample_state,
    shifted_state_from_draws,
)
from .randomness import SharedRandomness, grid_stream_ids, philox4x64

_U64 = np.uint64
_INV53 = 2.0 ** -53


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy and mechanism parameters for a subsampled round."""

    epsilon: float
    delta: float
    clip_c: float
    gamma_sub: float
    n_clients: int
    dim: int

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if not (self.clip_c > 0):
            raise ValueError("clip bound must be positive")
        if not (0.0 < self.gamma_sub <= 1.0):
            raise ValueError("subsampling probability must lie in (0, 1]")
        if self.n_clients < 1 or self.dim < 1:
            raise ValueError("need at least one client and one coordinate")


@dataclass
class SigmSharedState:
    """Selection matrix, per-coordinate counts, and layered-state arrays."""

    selection: np.ndarray  # (n, d) bool
    n_tilde: np.ndarray    # (d,) int
    u: np.ndarray          # (n, d) dither, valid where selected
    tau: np.ndarray        # (n, d) layer height, valid where selected
    step: np.ndarray       # (n, d)
    center: np.ndarray     # (n, d)


@dataclass
class SigmResult:
    estimate: np.ndarray    # (d,)
    n_tilde: np.ndarray     # (d,)
    selection: np.ndarray   # (n, d) bool
    messages: np.ndarray    # (n, d) int64, zero where unselected
    bits_fixed_per_client: np.ndarray | None = None


def gaussian_mechanism_sigma(eps: float, delta: float,
                             sensitivity: float) -> float:
    """Noise std of the Gaussian mechanism: sens*sqrt(2 ln(1.25/delta))/eps."""
    if not (eps > 0):
        raise ValueError("epsilon must be positive")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if not (sensitivity > 0):
        raise ValueError("sensitivity must be positive")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / eps


def _entry_words(shared: SharedRandomness, n: int, d: int) -> np.ndarray:
    """Raw words 0..3 of every entry stream (i, j), shape (n, d, 4)."""
    ids = grid_stream_ids(shared, np.arange(1, n + 1), np.arange(d))
    counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
    key = np.stack([np.broadcast_to(np.uint64(shared.seed), ids.shape), ids],
                   axis=-1)
    return philox4x64(counter, key)


def sigm_shared_state(n: int, d: int, gamma: float, noise_sigma: float,
                      shared: SharedRandomness,
                      selection: np.ndarray | None = None) -> SigmSharedState:
    """Materialize one round of shared randomness for all (client, coord)."""
    f = gaussian(noise_sigma)
    words = _entry_words(shared, n, d)
    halfopen = (words >> _U64(11)).astype(np.float64) * _INV53
    open01 = ((words >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    if selection is None:
        selection = halfopen[..., 0] < gamma
    st = shifted_state_from_draws(f, ndtri(open01[..., 1]) * noise_sigma,
                                  open01[..., 2], halfopen[..., 3])
    return SigmSharedState(
        selection=selection,
        n_tilde=selection.sum(axis=0).astype(np.int64),
        u=st.u, tau=st.tau, step=st.step, center=st.center,
    )


def sigm_round(x: np.ndarray, sigma: float, gamma_sub: float,
               shared: SharedRandomness, clip_c: float | None = None,
               selection: np.ndarray | None = None) -> SigmResult:
    """One round of the subsampled mechanism on client data ``x`` (n, d).

    Per-coordinate error against the subsampled mean is exactly
    N(0, sigma^2) conditional on the selection; coordinates nobody sent fall
    back to a pure noise draw so the estimator stays defined.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    noise_sigma = sigma * gamma_sub * n
    state = sigm_shared_state(n, d, gamma_sub, noise_sigma, shared, selection)
    sel = state.selection
    n_t = state.n_tilde
    sqrt_nt = np.sqrt(np.maximum(n_t, 1))

    scaled = x * sqrt_nt[None, :]
    m = np.zeros((n, d), dtype=np.int64)
    m[sel] = round_half_up(scaled[sel] / state.step[sel] + state.u[sel])
    decoded = np.zeros((n, d))
    decoded[sel] = ((m[sel] - state.u[sel]) * state.step[sel]
                    + state.center[sel])
    est = decoded.sum(axis=0) / (gamma_sub * n * sqrt_nt)

    empty = n_t == 0
    if np.any(empty):
        ids = grid_stream_ids(shared, np.array([0]), np.flatnonzero(empty))
        counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
        key = np.stack([np.broadcast_to(np.uint64(shared.seed), ids.shape),
                        ids], axis=-1)
        w = philox4x64(counter, key)[..., 0]
        noise = ndtri(((w >> _U64(11)).astype(np.float64) + 0.5) * _INV53)
        est[empty] = sigma * noise.reshape(-1)

    bits = None
    if clip_c is not None:
        bits = sigm_fixed_bits_per_client(sel, n_t, clip_c, sigma, gamma_sub, n)
    return SigmResult(estimate=est, n_tilde=n_t, selection=sel, messages=m,
                      bits_fixed_per_client=bits)


def sigm_fixed_bits_per_client(selection, n_tilde, clip_c, sigma, gamma, n):
    """Realized fixed-length bits per client, using each coordinate's count.

    A selected entry of coordinate j carries
    ceil(log2(2 + c*sqrt(n_tilde_j) / (sigma*gamma*n*sqrt(ln 4)))) bits.
    """
    arg = 2.0 + (clip_c * np.sqrt(np.maximum(n_tilde, 1))
                 / (sigma * gamma * n * math.sqrt(math.log(4.0))))
    per_coord = np.ceil(np.log2(arg))
    return (selection * per_coord[None, :]).sum(axis=1).astype(np.float64)


def sigm_bits(params: PrivacyParams, sigma: float) -> float:
    """Expected bits/client with the average selected count substituted."""
    gamma, n, d, c = (params.gamma_sub, params.n_clients, params.dim,
                      params.clip_c)
    if gamma == 0.0:
        return 0.0
    arg = 2.0 + c / (sigma * math.sqrt(n * gamma) * math.sqrt(math.log(4.0)))
    return gamma * d * math.ceil(math.log2(arg))


def baseline_dither_plus_gaussian(x: np.ndarray, bits_budget, sigma: float,
                                  gamma_sub: float, shared: SharedRandomness,
                                  clip_c: float,
                                  selection: np.ndarray | None = None
                                  ) -> np.ndarray:
    """Quantize-then-add-noise comparator at a given bit budget.

    Selected entries are subtractively dithered on [-c, c] with the step the
    budget implies, the server averages the decodes and adds independent
    N(0, sigma^2) per coordinate.  ``bits_budget`` may be scalar or
    per-coordinate; ``None`` disables quantization (pure Gaussian mechanism).
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    words = _entry_words(shared, n, d)
    halfopen = (words >> _U64(11)).astype(np.float64) * _INV53
    if selection is None:
        selection = halfopen[..., 0] < gamma_sub
    dither = halfopen[..., 1] - 0.5

    if bits_budget is None:
        decoded = np.where(selection, x, 0.0)
    else:
        budget = np.broadcast_to(np.asarray(bits_budget, dtype=np.float64),
                                 (d,))
        if np.any(budget < 1):
            raise ValueError("baseline needs at least one bit per coordinate")
        step = 2.0 * clip_c / (2.0 ** budget)
        m = round_half_up(x / step[None, :] + dither)
        decoded = np.where(selection, (m - dither) * step[None, :], 0.0)

    est = decoded.sum(axis=0) / (gamma_sub * n)
    ids = grid_stream_ids(shared, np.array([0]), np.arange(d))
    counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
    key = np.stack([np.broadcast_to(np.uint64(shared.seed), ids.shape), ids],
                   axis=-1)
    w = philox4x64(counter, key)[..., 1]
    noise = ndtri(((w >> _U64(11)).astype(np.float64) + 0.5) * _INV53)
    return est + sigma * noise.reshape(-1)


def sigm_round_protocol(x, sigma, gamma_sub, shared):
    """Scalar reference path: per-entry streams consumed one draw at a time.

    Slow; exists to pin the vectorized round to the documented stream
    layout.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    noise = gaussian(sigma * gamma_sub * n)
    sel = np.zeros((n, d), dtype=bool)
    states = {}
    for i in range(1, n + 1):
        for j in range(d):
            s = shared.substream(i, j)
            sel[i - 1, j] = s.uniform01() < gamma_sub
            states[i, j] = shifted_sample_state(noise, s)
    n_t = sel.sum(axis=0)
    est = np.zeros(d)
    for j in range(d):
        if n_t[j] == 0:
            est[j] = sigma * shared.substream(0, j).normal()
            continue
        tot = 0.0
        for i in range(1, n + 1):
            if sel[i - 1, j]:
                st = states[i, j]
                m = round_half_up(x[i - 1, j] * math.sqrt(n_t[j]) / st.step
                                  + st.u)
                tot += (m - st.u) * st.step + st.center
        est[j] = tot / (gamma_sub * n * math.sqrt(n_t[j]))
    return est
