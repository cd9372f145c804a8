"""Analytic unimodal densities and their derived layer densities.

Every noise family used by the quantizers is described by a
:class:`UnimodalPdf`: the density itself plus the superlevel-set boundaries
``b_minus/b_plus`` (inf and sup of ``{u : pdf(u) >= tau}``), moments and a
deterministic sampler.  The boundaries are analytic for the Gaussian and
Laplace families and obtained by bisection on the monotone branch otherwise
(absolute tolerance 1e-12, at most 200 iterations).

``layered_pdf`` and ``shifted_pdf`` build the densities of the random layer
drawn by the direct and shifted quantizers.  The shifted layer density is
U-shaped (it diverges at both ends of ``(0, peak)``), so layer densities get
their own small container type rather than being forced into
:class:`UnimodalPdf`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import BSpline

from .randomness import SharedRandomness

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class UnimodalPdf:
    """Immutable analytic description of a unimodal density.

    ``b_minus``/``b_plus`` map a height ``tau`` in ``(0, peak)`` to the left
    and right boundary of the superlevel set at that height; both accept
    scalars or numpy arrays.  ``sampler(stream, size)`` draws from the density
    using a documented number of uniforms per draw so that shared-randomness
    based protocols stay reproducible.
    """

    name: str
    pdf: Callable
    mode: float
    peak: float
    support_lo: float
    support_hi: float
    mean_abs: float
    variance: float
    b_minus: Callable
    b_plus: Callable
    sampler: Callable
    flat_top: bool = False

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class IrwinHallPdf(UnimodalPdf):
    """Scaled Irwin-Hall density: mean of ``n`` uniforms, shifted to ``mu``."""

    n: int = 0
    mu: float = 0.0


@dataclass(frozen=True)
class LayerDensity:
    """Density of the random layer height on ``(0, peak_of_base)``."""

    name: str
    kind: str  # "direct" | "shifted"
    pdf: Callable
    lo: float
    hi: float
    base: UnimodalPdf
    minimum: Optional[float] = None  # min step; positive only for "shifted"


def _bisect_decreasing(fn, lo, hi, target, iters=200, tol=1e-12):
    """Solve fn(x) = target for fn nonincreasing on [lo, hi], vectorized."""
    target = np.asarray(target, dtype=np.float64)
    lo = np.broadcast_to(np.float64(lo), target.shape).copy()
    hi = np.broadcast_to(np.float64(hi), target.shape).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        high_side = fn(mid) >= target
        lo = np.where(high_side, mid, lo)
        hi = np.where(high_side, hi, mid)
        if np.all(hi - lo < tol):
            break
    return 0.5 * (lo + hi)


def gaussian(sigma: float) -> UnimodalPdf:
    """Zero-mean Gaussian with standard deviation ``sigma``."""
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    sigma = float(sigma)
    peak = 1.0 / (sigma * _SQRT2PI)

    def pdf(x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * _SQRT2PI)

    def b_plus(tau):
        tau = np.asarray(tau, dtype=np.float64)
        arg = np.maximum(-2.0 * np.log(tau * sigma * _SQRT2PI), 0.0)
        return sigma * np.sqrt(arg)

    def b_minus(tau):
        return -b_plus(tau)

    def sampler(stream: SharedRandomness, size=None):
        z = stream.normals(1 if size is None else size) * sigma
        return float(z[0]) if size is None else z

    return UnimodalPdf(
        name=f"gaussian({sigma:g})",
        pdf=pdf,
        mode=0.0,
        peak=peak,
        support_lo=-np.inf,
        support_hi=np.inf,
        mean_abs=sigma * math.sqrt(2.0 / math.pi),
        variance=sigma**2,
        b_minus=b_minus,
        b_plus=b_plus,
        sampler=sampler,
    )


def laplace(sigma: float) -> UnimodalPdf:
    """Zero-mean Laplace with standard deviation ``sigma`` (scale sigma/sqrt2)."""
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    sigma = float(sigma)
    b = sigma / math.sqrt(2.0)
    peak = 1.0 / (2.0 * b)

    def pdf(x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-np.abs(x) / b) / (2.0 * b)

    def b_plus(tau):
        tau = np.asarray(tau, dtype=np.float64)
        return np.maximum(-b * np.log(2.0 * b * tau), 0.0)

    def b_minus(tau):
        return -b_plus(tau)

    def sampler(stream: SharedRandomness, size=None):
        u = stream.uniforms(1 if size is None else size)
        centered = u - 0.5
        with np.errstate(divide="ignore"):
            z = -b * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))
        return float(z[0]) if size is None else z

    return UnimodalPdf(
        name=f"laplace({sigma:g})",
        pdf=pdf,
        mode=0.0,
        peak=peak,
        support_lo=-np.inf,
        support_hi=np.inf,
        mean_abs=b,
        variance=sigma**2,
        b_minus=b_minus,
        b_plus=b_plus,
        sampler=sampler,
    )


def _standard_ih_pdf_alternating(x, n: int):
    """Alternating-sum formula for the standard Irwin-Hall density on [0, n].

    Exact binomial coefficients with compensated float summation.  Loses about
    0.43*n decimal digits to cancellation, so it serves as a small-n oracle;
    production evaluation uses the stable B-spline recurrence instead.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    fact = math.factorial(n - 1)
    flat = x.ravel()
    res = np.empty_like(flat)
    for i, xi in enumerate(flat):
        if xi <= 0.0 or xi >= n:
            res[i] = 0.0
            continue
        terms = [
            (-1.0) ** k * math.comb(n, k) * (xi - k) ** (n - 1)
            for k in range(int(math.floor(xi)) + 1)
        ]
        res[i] = math.fsum(terms) / fact
    out = res.reshape(x.shape)
    return out


@lru_cache(maxsize=None)
def _standard_ih_spline(n: int) -> BSpline:
    # Cardinal B-spline of degree n-1 on integer knots equals the standard
    # Irwin-Hall density; de Boor evaluation is stable at any n.
    return BSpline.basis_element(np.arange(n + 1, dtype=np.float64),
                                 extrapolate=False)


def irwin_hall(n: int, mu: float = 0.0, sigma: float = 1.0) -> IrwinHallPdf:
    """Scaled Irwin-Hall: mean of n uniforms with mean ``mu``, std ``sigma``.

    The distribution of ``n^-1 sum Z_i + mu`` with ``Z_i ~ U(-L, L)`` and
    ``L = sigma*sqrt(3n)``; support ``[mu - L, mu + L]``, variance sigma^2.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    n = int(n)
    mu = float(mu)
    sigma = float(sigma)
    half_width = sigma * math.sqrt(3.0 * n)
    scale = 2.0 * half_width / n  # x = scale*(s - n/2) + mu, s standard IH
    spline = _standard_ih_spline(n)

    def std_pdf(s):
        out = spline(np.asarray(s, dtype=np.float64))
        return np.nan_to_num(out, nan=0.0)

    def pdf(x):
        x = np.asarray(x, dtype=np.float64)
        s = (x - mu) / scale + 0.5 * n
        return std_pdf(s) / scale

    if n == 1:
        peak = 1.0 / (2.0 * half_width)
    else:
        peak = float(pdf(mu))

    def b_plus(tau):
        tau = np.asarray(tau, dtype=np.float64)
        if n == 1:
            return np.broadcast_to(mu + half_width, tau.shape).astype(float)
        return _bisect_decreasing(pdf, mu, mu + half_width, tau)

    def b_minus(tau):
        return 2.0 * mu - b_plus(tau)

    def sampler(stream: SharedRandomness, size=None):
        k = 1 if size is None else int(size)
        u = stream.uniforms(k * n).reshape(k, n)
        z = mu + scale * (u.sum(axis=1) - 0.5 * n)
        return float(z[0]) if size is None else z

    # E|Z| about 0: analytic for n=1, quadrature otherwise (needed by the
    # aggregate cost bound).
    if n == 1 and mu == 0.0:
        mean_abs = half_width / 2.0
    else:
        mean_abs = 2.0 * quad(lambda x: x * float(pdf(x + mu)), 0.0,
                              half_width, limit=200)[0] if mu == 0.0 else \
            quad(lambda x: abs(x) * float(pdf(x)), mu - half_width,
                 mu + half_width, limit=200)[0]

    return IrwinHallPdf(
        name=f"irwin_hall({n},{mu:g},{sigma:g})",
        pdf=pdf,
        mode=mu,
        peak=peak,
        support_lo=mu - half_width,
        support_hi=mu + half_width,
        mean_abs=mean_abs,
        variance=sigma**2,
        b_minus=b_minus,
        b_plus=b_plus,
        sampler=sampler,
        flat_top=(n == 1),
        n=n,
        mu=mu,
    )


def layered_pdf(f: UnimodalPdf) -> LayerDensity:
    """Density of the direct layer: width of the superlevel set at height x."""
    if not np.isfinite(f.peak):
        raise ValueError("layer density requires a finite peak")
    if f.flat_top:
        raise ValueError("layer density is degenerate for flat-topped pdfs")

    def pdf(x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x > 0) & (x < f.peak)
        xs = np.where(inside, x, 0.5 * f.peak)
        w = f.b_plus(xs) - f.b_minus(xs)
        return np.where(inside, w, 0.0)

    return LayerDensity(name=f"direct_layer[{f.name}]", kind="direct",
                        pdf=pdf, lo=0.0, hi=f.peak, base=f)


def _shifted_minimum(f: UnimodalPdf, pdf) -> float:
    if f.name.startswith("gaussian"):
        return 2.0 * f.sigma * math.sqrt(math.log(4.0))
    if f.name.startswith("laplace"):
        return f.sigma * math.sqrt(2.0) * math.log(2.0)
    # grid plus golden-section refinement on the interior
    xs = np.linspace(f.peak * 1e-6, f.peak * (1 - 1e-6), 4001)
    vals = pdf(xs)
    i = int(np.argmin(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    for _ in range(200):
        if pdf(c) < pdf(d):
            b = d
        else:
            a = c
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        if b - a < 1e-14 * f.peak:
            break
    return float(pdf(0.5 * (a + b)))


def shifted_pdf(f: UnimodalPdf) -> LayerDensity:
    """Density of the shifted layer: one side of the graph flipped in height."""
    if not np.isfinite(f.peak):
        raise ValueError("layer density requires a finite peak")
    if f.flat_top:
        raise ValueError("layer density is degenerate for flat-topped pdfs")

    def pdf(x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x > 0) & (x < f.peak)
        xs = np.where(inside, x, 0.5 * f.peak)
        w = f.b_plus(xs) - f.b_minus(f.peak - xs)
        return np.where(inside, w, 0.0)

    return LayerDensity(name=f"shifted_layer[{f.name}]", kind="shifted",
                        pdf=pdf, lo=0.0, hi=f.peak, base=f,
                        minimum=_shifted_minimum(f, pdf))


def min_step(f: UnimodalPdf) -> float:
    """Minimal step of the shifted quantizer for noise ``f`` (eta)."""
    return shifted_pdf(f).minimum
