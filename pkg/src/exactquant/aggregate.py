"""Homomorphic n-client mechanisms with exactly distributed aggregate noise.

The Irwin-Hall mechanism dithers every client with the common step
``w = 2*sigma*sqrt(3n)``; the sum of the n uniform dither errors is the
scaled Irwin-Hall law with variance sigma^2.  To turn that noise into an
exact target Q (Gaussian here), the global randomness draws a scale/shift
pair ``(A, B)`` from a coupling with ``A*Z + B ~ Q`` for ``Z`` Irwin-Hall,
and the dither step is stretched by ``A`` while ``B`` shifts the decode.

The coupling is produced by two rejection recursions:

* ``decompose_unif`` writes U(-1/2,1/2) as a mixture of shifted/scaled
  copies of a density f supported on [-1/2,1/2];
* ``decompose`` peels off ``lam * f`` from the target g (lam as large as
  unimodality of the residual allows), expresses the residual's layers as
  uniforms and recurses through ``decompose_unif``.

Everything consumes shared randomness through fixed substreams: the pair
(A, B) from substream 0 of the round stream, client i's dither from
substream i.  The rejection loops therefore never shift the dither draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .distributions import UnimodalPdf, _bisect_decreasing, gaussian, irwin_hall
from .quantizers import round_half_up_float
from .randomness import (
    SharedRandomness,
    StreamBatch,
    grid_stream_ids,
    leading_uniforms,
)

_MAX_UNIF_ITERS = 10_000
_DECOMPOSE_STREAM = 0  # substream label of the (A, B) draw


@dataclass(frozen=True)
class ScaleShift:
    """Scale/shift pair drawn by the mixture decomposition."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0):
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class AggregateConfig:
    """Parameters of the n-client aggregate mechanism for one coordinate."""

    n_clients: int
    sigma: float
    step_w: float
    target: UnimodalPdf
    base: UnimodalPdf

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("need at least one client")
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")
        expected = 2.0 * self.sigma * math.sqrt(3.0 * self.n_clients)
        if self.step_w != expected:
            raise ValueError("step_w must equal 2*sigma*sqrt(3*n)")


@lru_cache(maxsize=64)
def aggregate_config(n_clients: int, sigma: float) -> AggregateConfig:
    """Config of the aggregate Gaussian mechanism: Q = N(0, sigma^2)."""
    return AggregateConfig(
        n_clients=int(n_clients),
        sigma=float(sigma),
        step_w=2.0 * float(sigma) * math.sqrt(3.0 * int(n_clients)),
        target=gaussian(float(sigma)),
        base=irwin_hall(int(n_clients), 0.0, float(sigma)),
    )


# ---------------------------------------------------------------------------
# Irwin-Hall mechanism


def irwin_hall_encode(x, s, cfg: AggregateConfig):
    """Client message: round(x/w + s) with the common step w."""
    return round_half_up_float(np.asarray(x, dtype=np.float64) / cfg.step_w + s)


def irwin_hall_decode(sum_m, sum_s, cfg: AggregateConfig):
    """Mean estimate (w/n)(sum of messages - sum of dithers).

    Normalized by n so the output estimates the mean; the error is then the
    scaled Irwin-Hall law IH(n, 0, sigma^2).
    """
    return (cfg.step_w / cfg.n_clients) * (
        np.asarray(sum_m, dtype=np.float64) - sum_s)


# ---------------------------------------------------------------------------
# mixture decompositions


def lambda_mixture(f: UnimodalPdf, g: UnimodalPdf, *, grid: int = 4001) -> float:
    """Largest lam with (g - lam*f)/(1-lam) still unimodal.

    Computed as the infimum over x > 0 of g'(x)/f'(x) restricted to points
    where f' < 0 (where f' = 0 the residual is unconstrained since g' <= 0
    there).  Derivatives are central differences; the result is shrunk by a
    relative 1e-9 so the residual check never fails to rounding.
    """
    if f.mode != 0.0 or g.mode != 0.0:
        raise ValueError("mixture ratio requires symmetric densities about 0")
    if f.flat_top:
        return 0.0
    half = f.support_hi
    if not np.isfinite(half):
        raise ValueError("f must have bounded support")
    xs = np.linspace(half * 1e-6, half * (1.0 - 1e-6), grid)
    h = half * 1e-7

    def ratio(x):
        x = np.asarray(x, dtype=np.float64)
        fp = (f.pdf(x + h) - f.pdf(x - h)) / (2 * h)
        gp = (g.pdf(x + h) - g.pdf(x - h)) / (2 * h)
        out = np.full(x.shape, np.inf)
        mask = fp < -1e-300
        out[mask] = gp[mask] / fp[mask]
        return out

    vals = ratio(xs)
    i = int(np.argmin(vals))
    lam = float(vals[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    for _ in range(100):
        if ratio(np.array([c]))[0] < ratio(np.array([d]))[0]:
            b = d
        else:
            a = c
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
    lam = min(lam, float(ratio(np.array([0.5 * (a + b)]))[0]))
    lam = max(min(lam, 1.0), 0.0) * (1.0 - 1e-9)

    # residual must be nonincreasing away from the mode
    resid = g.pdf(xs) - lam * f.pdf(xs)
    if np.any(np.diff(resid) > 1e-10 * max(resid.max(), 1.0)):
        raise ValueError("residual after mixture split is not unimodal")
    return lam


def _rescaled_to_unit_support(f: UnimodalPdf):
    """(pdf, peak, length) of f rescaled so its support is [-1/2, 1/2]."""
    length = 2.0 * f.support_hi
    if not np.isfinite(length) or f.mode != 0.0:
        raise ValueError("need a symmetric density with bounded support")

    def pdf(x):
        return length * f.pdf(length * np.asarray(x, dtype=np.float64))

    peak = float(length * f.pdf(0.0)) if not f.flat_top else 1.0
    return pdf, peak, length


def decompose_unif(f: UnimodalPdf, rng: SharedRandomness,
                   trace: list | None = None,
                   init: tuple[float, float] = (1.0, 0.0)) -> ScaleShift:
    """Draw (a, b) with a*X + b ~ U(-1/2,1/2) for X ~ f.

    ``f`` must be unimodal, symmetric around 0 and supported on [-1/2,1/2].
    Each iteration accepts with probability 1/f(0); the iteration cap turns a
    (probability-zero) runaway loop into a hard error because truncating the
    recursion would bias the noise law.  ``trace`` (if given) collects the
    (a, b) state after every non-accepting iteration; ``init`` restarts the
    recursion from a recorded mid-loop state.
    """
    if abs(f.support_hi - 0.5) > 1e-9 or f.mode != 0.0:
        raise ValueError("decompose_unif needs support [-1/2, 1/2] about 0")
    pdf = f.pdf
    peak = f.peak

    a, b = init
    for _ in range(_MAX_UNIF_ITERS):
        u = rng.uniform01() - 0.5
        v = rng.uniform01()
        if v <= float(pdf(u)) / peak:
            return ScaleShift(a, b)
        s = float(_bisect_decreasing(pdf, 0.0, 0.5, v * peak))
        sign = 1.0 if u >= 0 else -1.0
        b = b + a * sign * (s + 0.5) / 2.0
        a = a * (0.5 - s)
        if trace is not None:
            trace.append((a, b))
    raise RuntimeError("decompose_unif exceeded the iteration cap")


def decompose_unif_batch(pdf, peak, lanes: StreamBatch, idx=None,
                         init=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`decompose_unif` over the lanes ``idx`` of a batch.

    ``pdf`` is the unit-support density (vectorized) with maximum ``peak``.
    Per lane the draws and their order match the scalar loop exactly.
    """
    idx = np.arange(len(lanes)) if idx is None else np.asarray(idx)
    a = np.ones(idx.size)
    b = np.zeros(idx.size)
    if init is not None:
        a0, b0 = init
        a[:] = a0
        b[:] = b0
    active = np.arange(idx.size)
    for _ in range(_MAX_UNIF_ITERS):
        if active.size == 0:
            return a, b
        u = lanes.uniforms(idx[active]) - 0.5
        v = lanes.uniforms(idx[active])
        rej = v > pdf(u) / peak
        if np.any(rej):
            sub = active[rej]
            s = _bisect_decreasing(pdf, 0.0, 0.5, v[rej] * peak)
            sign = np.where(u[rej] >= 0, 1.0, -1.0)
            b[sub] = b[sub] + a[sub] * sign * (s + 0.5) / 2.0
            a[sub] = a[sub] * (0.5 - s)
        active = active[rej]
    raise RuntimeError("decompose_unif exceeded the iteration cap")


def decompose(f: UnimodalPdf, g: UnimodalPdf, rng: SharedRandomness,
              lam: float | None = None) -> ScaleShift:
    """Draw (a, b) with a*X + b ~ g for X ~ f (both symmetric about 0).

    With probability lam the target's f-component is hit and (1, 0) is
    returned; otherwise the residual layer at the drawn height is a centered
    uniform of half-width s, which is produced from f via ``decompose_unif``
    on the unit-support rescaling of f.
    """
    if lam is None:
        lam = lambda_mixture(f, g)
    x = g.sampler(rng)
    gx = float(g.pdf(x))
    v = gx * float(rng.uniforms_open(1)[0])
    if v > gx - lam * float(f.pdf(x)):
        return ScaleShift(1.0, 0.0)
    s = _solve_layer_halfwidth(f, g, lam, v)
    length = 2.0 * f.support_hi
    inner = decompose_unif(_unit_rescaled_pdf(f), rng)
    return ScaleShift(2.0 * inner.a * s / length, 2.0 * inner.b * s)


def _solve_layer_halfwidth(f, g, lam, v):
    """sup{x >= 0 : v <= g(x) - lam*f(x)}; the lhs is nonincreasing there."""
    def h(x):
        return g.pdf(x) - lam * f.pdf(x)

    hi = max(2.0 * f.support_hi, 1.0)
    while float(h(hi)) >= v:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("layer half-width bracket failed")
    lo = np.float64(0.0)
    hi = np.float64(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(h(mid)) >= v:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return float(0.5 * (lo + hi))


def _unit_rescaled_pdf(f: UnimodalPdf) -> UnimodalPdf:
    """f rescaled to support [-1/2,1/2] as a UnimodalPdf (for decompose_unif)."""
    pdf, peak, length = _rescaled_to_unit_support(f)

    def b_plus(tau):
        return f.b_plus(np.asarray(tau) / length) / length

    def b_minus(tau):
        return -b_plus(tau)

    def sampler(stream, size=None):
        z = f.sampler(stream, size=size)
        return z / length

    return UnimodalPdf(
        name=f"unit[{f.name}]", pdf=pdf, mode=0.0, peak=peak,
        support_lo=-0.5, support_hi=0.5,
        mean_abs=f.mean_abs / length, variance=f.variance / length**2,
        b_minus=b_minus, b_plus=b_plus, sampler=sampler,
        flat_top=f.flat_top,
    )


# ---------------------------------------------------------------------------
# cached per-n machinery for the aggregate Gaussian mechanism


class MixtureSampler:
    """A base/target pair (f, g) with cached mixture data and batch draws.

    The batch path samples the target via the inverse normal CDF, so it is
    restricted to Gaussian targets; the scalar ``draw`` works for any
    symmetric unimodal ``g`` with a sampler.
    """

    def __init__(self, f: UnimodalPdf, g: UnimodalPdf, lam: float | None = None):
        self.f = f
        self.g = g
        self.lam = lambda_mixture(f, g) if lam is None else float(lam)
        self.length = 2.0 * f.support_hi
        self.unit = _unit_rescaled_pdf(f)
        self._unit_pdf = self.unit.pdf
        self._unit_peak = self.unit.peak
        self._g_scale = g.sigma if g.name.startswith("gaussian") else None

    # -- scalar protocol path ------------------------------------------------

    def draw(self, rng: SharedRandomness) -> ScaleShift:
        return decompose(self.f, self.g, rng, lam=self.lam)

    # -- vectorized path (one lane per trial/coordinate) ----------------------

    def draw_batch(self, lanes: StreamBatch) -> tuple[np.ndarray, np.ndarray]:
        """One ScaleShift draw per lane; identical to ``draw`` per stream."""
        if self._g_scale is None:
            raise ValueError("batch draws support Gaussian targets only")
        k = len(lanes)
        gx = lanes.normals() * self._g_scale
        gpdf = self.g.pdf(gx)
        v = gpdf * lanes.uniforms_open()
        reject = v <= gpdf - self.lam * self.f.pdf(gx)
        a = np.ones(k)
        b = np.zeros(k)
        if np.any(reject):
            idx = np.flatnonzero(reject)
            s = self._halfwidths(v[idx])
            ua, ub = decompose_unif_batch(self._unit_pdf, self._unit_peak,
                                          lanes, idx)
            a[idx] = 2.0 * ua * s / self.length
            b[idx] = 2.0 * ub * s
        return a, b

    def _halfwidths(self, v):
        def h(x):
            return self.g.pdf(x) - self.lam * self.f.pdf(x)

        hi = max(2.0 * self.f.support_hi, 1.0)
        while float(h(np.array([hi]))[0]) >= v.min():
            hi *= 2.0
            if hi > 1e12:
                raise RuntimeError("layer half-width bracket failed")
        lo = np.zeros_like(v)
        hi_arr = np.full_like(v, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi_arr)
            ge = h(mid) >= v
            lo = np.where(ge, mid, lo)
            hi_arr = np.where(ge, hi_arr, mid)
            if np.all(hi_arr - lo < 1e-12):
                break
        return 0.5 * (lo + hi_arr)


@lru_cache(maxsize=None)
def gaussian_mixture(n: int) -> MixtureSampler:
    """Mixture sampler of the unit-variance pair (IH(n,0,1), N(0,1))."""
    f = irwin_hall(int(n), 0.0, 1.0)
    g = gaussian(1.0)
    lam = 0.0 if n <= 2 else lambda_mixture(f, g)
    return MixtureSampler(f, g, lam=lam)


# ---------------------------------------------------------------------------
# aggregate Gaussian mechanism, scalar protocol form


def _round_common(cfg: AggregateConfig, shared: SharedRandomness):
    mix = gaussian_mixture(cfg.n_clients)
    ab = mix.draw(shared.substream(_DECOMPOSE_STREAM))
    s = np.array([
        shared.substream(i).uniform01() - 0.5
        for i in range(1, cfg.n_clients + 1)
    ])
    return ab, s


def aggregate_encode(x_i: float, client_id: int, cfg: AggregateConfig,
                     shared: SharedRandomness) -> int:
    """Client message round(x/(a*w) + s_i); all parties rebuild (a, b), s."""
    if not 1 <= client_id <= cfg.n_clients:
        raise ValueError("client_id out of range")
    ab, s = _round_common(cfg, shared)
    return int(math.floor(x_i / (ab.a * cfg.step_w) + s[client_id - 1] + 0.5))


def aggregate_decode(sum_m: int, cfg: AggregateConfig,
                     shared: SharedRandomness) -> float:
    """Mean estimate (a*w/n)(sum_m - sum_i s_i) + b*sigma."""
    ab, s = _round_common(cfg, shared)
    return float((ab.a * cfg.step_w / cfg.n_clients) * (sum_m - s.sum())
                 + ab.b * cfg.sigma)


def aggregate_client_decode(m_i: int, client_id: int, cfg: AggregateConfig,
                            shared: SharedRandomness) -> float:
    """Per-client homomorphic decode a*w*(m - s_i) + b*sigma.

    Averaging these over clients reproduces :func:`aggregate_decode` exactly;
    the shift b*sigma rides along with each client's common randomness.
    """
    ab, s = _round_common(cfg, shared)
    return float(ab.a * cfg.step_w * (m_i - s[client_id - 1])
                 + ab.b * cfg.sigma)


# ---------------------------------------------------------------------------
# modular-sum (secure-aggregation style) path


def modular_sum(messages, modulus: int) -> int:
    """Sum of client messages modulo ``modulus``.

    Raises OverflowError when the true sum falls outside a centered window of
    the modulus, in which case de-aliasing would be wrong; the caller sizes
    the modulus from the per-message bound.
    """
    msgs = np.asarray(messages, dtype=np.float64)
    if modulus < 1:
        raise ValueError("modulus must be positive")
    if np.any(np.abs(msgs) >= 2.0**62):
        raise OverflowError("message magnitude exceeds the wire integer range")
    total = int(msgs.astype(np.int64).sum())
    if not (-(modulus // 2) <= total <= (modulus - 1) // 2):
        raise OverflowError("message sum exceeds the modulus window")
    return total % modulus


def decode_modular_sum(mod_sum: int, modulus: int) -> int:
    """Centered representative of a modular sum (de-aliasing)."""
    mod_sum = int(mod_sum) % modulus
    return mod_sum - modulus if mod_sum > (modulus - 1) // 2 else mod_sum


def message_bound(cfg: AggregateConfig, a: float, t: float) -> int:
    """Per-message magnitude bound ceil(t/(2*w*a)) + 1 for |x| <= t/2."""
    return int(math.ceil(t / (2.0 * cfg.step_w * a))) + 1


# ---------------------------------------------------------------------------
# vectorized Monte-Carlo engine


def aggregate_gaussian_rounds(x, cfg: AggregateConfig, root: SharedRandomness,
                              trials: int):
    """Run the aggregate Gaussian mechanism for many independent rounds.

    ``x`` are the n fixed client scalars.  Trial ``t`` consumes exactly the
    draws of ``root.substream(t)`` in the canonical order: the (A, B) draw
    from substream 0, dithers from substreams 1..n.  Returns a dict with the
    estimates, per-trial (a, b) and the (trials, n) message matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    n = cfg.n_clients
    if x.shape != (n,):
        raise ValueError("x must hold one scalar per client")
    mix = gaussian_mixture(n)
    trial_ids = np.arange(trials)
    dec_lanes = StreamBatch(root, trial_ids, suffix=(_DECOMPOSE_STREAM,))
    a, b = mix.draw_batch(dec_lanes)

    ids = grid_stream_ids(root, trial_ids, np.arange(1, n + 1))
    s = leading_uniforms(root.seed, ids, 1)[..., 0] - 0.5
    # float64 keeps rare huge messages (tiny scale draws) finite and the
    # encode exact whenever |m| < 2**53
    m = round_half_up_float(x[None, :] / (a[:, None] * cfg.step_w) + s)
    sum_m = m.sum(axis=1)
    est = (a * cfg.step_w / n) * (sum_m - s.sum(axis=1)) + b * cfg.sigma
    return {"estimate": est, "a": a, "b": b, "messages": m,
            "dithers": s, "sum_m": sum_m}


def irwin_hall_rounds(x, cfg: AggregateConfig, root: SharedRandomness,
                      trials: int):
    """Vectorized Irwin-Hall mechanism rounds (same stream layout, no A/B)."""
    x = np.asarray(x, dtype=np.float64)
    n = cfg.n_clients
    ids = grid_stream_ids(root, np.arange(trials), np.arange(1, n + 1))
    s = leading_uniforms(root.seed, ids, 1)[..., 0] - 0.5
    m = irwin_hall_encode(x[None, :], s, cfg)
    est = irwin_hall_decode(m.sum(axis=1), s.sum(axis=1), cfg)
    return {"estimate": est, "messages": m, "dithers": s}
