"""Entropy and communication-cost calculators.

All entropies are in bits (base-2 logs).  The conditional message entropy
H(M|S) is estimated without plug-in bias: conditional on the shared state
S = (u, step), the message pmf over a uniform input on (0, t) consists of
interval overlaps, so its entropy has a closed form; only the outer average
over S is Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .aggregate import lambda_mixture
from .distributions import (
    LayerDensity,
    UnimodalPdf,
    layered_pdf,
    min_step,
    shifted_pdf,
)
from .quantizers import direct_sample_state, shifted_sample_state
from .randomness import SharedRandomness

_LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class EntropyReport:
    """Lower bound, Monte-Carlo estimate and upper bound of H(M|S)."""

    scheme: str
    t: float
    lower: float
    measured: float
    upper: float
    stderr: float


def differential_entropy(f) -> float:
    """-∫ pdf log2 pdf over the support, adaptive quadrature (bits)."""
    if isinstance(f, LayerDensity):
        lo, hi = f.lo, f.hi
    else:
        lo, hi = f.support_lo, f.support_hi
        span = 50.0 * max(f.sigma, 1.0)
        lo = lo if np.isfinite(lo) else f.mode - span
        hi = hi if np.isfinite(hi) else f.mode + span

    def integrand(x):
        p = float(f.pdf(x))
        return -p * math.log2(p) if p > 0.0 else 0.0

    val, err = quad(integrand, lo, hi, limit=400)
    if not np.isfinite(val):
        raise ValueError("differential entropy integral diverged")
    return val


def layered_entropy_pair(f: UnimodalPdf) -> tuple[float, float]:
    """(h(direct layer), h(shifted layer)) in bits, with sanity assertions.

    For symmetric unimodal noise the shifted layer entropy can exceed the
    direct one by at most 2 bits and is at most -log2 of the minimal step;
    violations indicate a broken layer density and raise.
    """
    d = layered_pdf(f)
    w = shifted_pdf(f)
    h_d = differential_entropy(d)
    h_w = differential_entropy(w)
    eta = w.minimum
    if h_w - h_d > 2.0 + 1e-6:
        raise ValueError("shifted-vs-direct layer entropy gap exceeds 2 bits")
    if h_w > -math.log2(eta) + 1e-6:
        raise ValueError("shifted layer entropy exceeds -log2(min step)")
    return h_d, h_w


def _conditional_entropy_bits(u, step, t):
    """Exact entropy of the message pmf given the state, for X ~ U(0, t).

    Cell boundaries sit at step*(k + 1/2 - u); the first boundary inside
    (0, t) is at delta = step*((1/2 - u) mod 1).  The pmf is then one cell of
    length delta, full cells of length step, and a remainder.
    """
    u = np.asarray(u, dtype=np.float64)
    step = np.asarray(step, dtype=np.float64)
    delta = step * np.mod(0.5 - u, 1.0)
    delta = np.where(delta <= 0.0, step, delta)
    first = np.minimum(delta, t)
    full = np.floor((t - first) / step)
    rest = np.maximum(t - first - full * step, 0.0)

    def nlogn(p):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(p > 0.0, p * np.log2(p), 0.0)
        return out

    return -(nlogn(first / t) + full * nlogn(step / t) + nlogn(rest / t))


def conditional_entropy_mc(scheme: str, f: UnimodalPdf, t: float,
                           trials: int = 20_000,
                           rng: SharedRandomness | None = None
                           ) -> tuple[float, float]:
    """Monte-Carlo H(M|S) for the given scheme; returns (bits, stderr)."""
    if trials < 100:
        raise ValueError("too few trials for a usable standard error")
    if rng is None:
        rng = SharedRandomness(0)
    if scheme == "direct":
        st = direct_sample_state(f, rng, size=trials)
    elif scheme == "shifted":
        st = shifted_sample_state(f, rng, size=trials)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    ent = _conditional_entropy_bits(st.u, st.step, float(t))
    return float(ent.mean()), float(ent.std() / math.sqrt(trials))


def entropy_report(scheme: str, f: UnimodalPdf, t: float,
                   trials: int = 20_000,
                   rng: SharedRandomness | None = None) -> EntropyReport:
    """Sandwich report: universal lower bound, estimate, scheme upper bound."""
    h_d, h_w = layered_entropy_pair(f)
    measured, se = conditional_entropy_mc(scheme, f, t, trials, rng)
    lower = math.log2(t) + h_d
    slack = 8.0 * _LOG2E / t * math.sqrt(f.variance)
    upper = math.log2(t) + slack + (h_d if scheme == "direct" else h_w)
    return EntropyReport(scheme=scheme, t=float(t), lower=lower,
                         measured=measured, upper=upper, stderr=se)


def _require_symmetric(f: UnimodalPdf):
    taus = np.linspace(f.peak * 1e-3, f.peak * 0.999, 7)
    if f.mode != 0.0 or not np.allclose(f.b_minus(taus), -f.b_plus(taus),
                                        rtol=1e-8, atol=1e-10):
        raise ValueError("bound requires a symmetric density about 0")


def gap_bound_shifted(f: UnimodalPdf, t: float) -> float:
    """Upper bound on the shifted quantizer's optimality gap (bits)."""
    _require_symmetric(f)
    return 8.0 * _LOG2E / t * math.sqrt(f.variance) + 2.0


def mixture_entropy_lower_bound(f: UnimodalPdf, g: UnimodalPdf,
                   lam: float | None = None) -> float:
    """Lower bound on the relative mixture entropy of (g given f), bits.

    ``f`` must have bounded support of width L; both symmetric about 0.
    The bound is -(1-lam) * (L f(0) + log2(e L (g(0)-lam f(0)) / (2(1-lam)))).
    """
    if lam is None:
        lam = lambda_mixture(f, g)
    if lam > 1.0:
        raise ValueError("mixture weight exceeds 1")
    if 1.0 - lam < 1e-12:
        return 0.0
    length = 2.0 * f.support_hi
    if not np.isfinite(length):
        raise ValueError("f must have bounded support")
    f0 = float(f.pdf(0.0))
    g0 = float(g.pdf(0.0))
    return -(1.0 - lam) * (
        length * f0
        + math.log2(math.e * length * (g0 - lam * f0) / (2.0 * (1.0 - lam)))
    )


def aggregate_cost_bound(n: int, sigma: float, t: float,
                   mix=None) -> float:
    """Expected bits/client bound for the aggregate mechanism.

    Evaluated with the computable mixture-entropy lower bound substituted
    for the exact relative mixture entropy (a supremum over couplings that
    cannot be evaluated directly).
    """
    from .aggregate import gaussian_mixture  # local import, cycle-free

    if t <= 0:
        raise ValueError("t must be positive")
    if mix is None:
        mix = gaussian_mixture(n)
    hm = mixture_entropy_lower_bound(mix.f, mix.g, lam=mix.lam)
    w = 2.0 * sigma * math.sqrt(3.0 * n)
    ratio = mix.g.mean_abs / mix.f.mean_abs
    return (-hm + math.log2(t / w) + (3.0 * w * _LOG2E / t) * ratio + 1.0)


def irwin_hall_cost_bits(n: int, sigma: float, t: float) -> float:
    """Fixed-length bits of the Irwin-Hall mechanism: ceil(log2(t/w + 3))."""
    w = 2.0 * sigma * math.sqrt(3.0 * n)
    return math.ceil(math.log2(t / w + 3.0))


def adaptive_fixed_bits(a: np.ndarray, n: int, sigma: float,
                        t: float) -> np.ndarray:
    """Per-round bits of the scale-conditional fixed-length aggregate code.

    Given the round's public scale ``a``, messages fit in
    ceil(log2(t/(w a) + 3)) bits; this is the code whose expectation the
    cost bound controls.
    """
    w = 2.0 * sigma * math.sqrt(3.0 * n)
    return np.ceil(np.log2(t / (w * np.asarray(a, dtype=np.float64)) + 3.0))
