"""Point-to-point quantizers with exactly distributed reconstruction error.

Three mechanisms: subtractive dithering (uniform error), the direct layered
quantizer and the shifted layered quantizer (arbitrary unimodal error).  The
layered quantizers randomize the dither step: the shared randomness is a pair
``(u, tau)`` where ``u`` is the dither and ``tau`` the layer height; the step
is the width of the (possibly flipped) superlevel set at ``tau``.  Rounding is
half-up ``floor(x + 1/2)`` throughout; ties have probability zero but the
deterministic rule matters for cross-implementation reproducibility.

All operations are elementwise over numpy arrays; a scalar is the 0-d case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import UnimodalPdf, min_step
from .randomness import SharedRandomness


def round_half_up(x):
    """Nearest integer with half-up ties: floor(x + 1/2).

    Returns int64; values beyond the int64 range (possible only through
    degenerate step sizes) raise instead of wrapping.
    """
    rounded = np.floor(np.asarray(x, dtype=np.float64) + 0.5)
    if np.any(np.abs(rounded) >= 2.0**62):
        raise OverflowError("rounded value exceeds the integer message range")
    return rounded.astype(np.int64)


def round_half_up_float(x):
    """floor(x + 1/2) kept in float64 (exact below 2**53; no cast)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def _require_finite(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    return x


@dataclass(frozen=True)
class DitherParams:
    """Fixed step size for subtractive dithering."""

    step_w: float

    def __post_init__(self):
        if not (self.step_w > 0):
            raise ValueError("step_w must be positive")


@dataclass(frozen=True)
class LayeredState:
    """Shared randomness of one layered-quantizer use.

    Fields are floats or equally shaped arrays: ``u`` the dither in [0,1),
    ``tau`` the layer height, ``step`` the quantization step at that height
    and ``center`` the decode offset.
    """

    u: np.ndarray
    tau: np.ndarray
    step: np.ndarray
    center: np.ndarray
    variant: str  # "direct" | "shifted"


@dataclass(frozen=True)
class QuantizerMessage:
    """Integer description(s) produced by an encoder."""

    m: np.ndarray
    scheme: str


def dither_encode(x, s, w):
    """Subtractive dithering encoder: round(x/w + s) with half-up ties."""
    x = _require_finite(x)
    if not np.all(np.asarray(w) > 0):
        raise ValueError("step size must be positive")
    return round_half_up(x / w + s)


def dither_decode(m, s, w):
    """Subtractive dithering decoder: (m - s) * w."""
    return (np.asarray(m, dtype=np.float64) - s) * w


def _sample_tau(f: UnimodalPdf, rng: SharedRandomness, size, shifted: bool):
    # Under-the-graph draw: Z ~ f, then a height uniform in the band assigned
    # to Z.  For the shifted variant the band left of the mode is flipped to
    # the top of the graph, which makes the height's law the shifted layer
    # density while keeping the construction exact (no inverse CDF needed).
    k = 1 if size is None else int(size)
    z = np.asarray(f.sampler(rng, size=k), dtype=np.float64)
    v = rng.uniforms_open(k)
    fz = f.pdf(z)
    if shifted:
        tau = np.where(z < f.mode, f.peak - fz * (1.0 - v), v * fz)
    else:
        tau = v * fz
    return tau


def direct_state_from_draws(f: UnimodalPdf, z, v, u) -> LayeredState:
    """Direct-layer state from pre-drawn randomness (see shifted variant)."""
    z = np.asarray(z, dtype=np.float64)
    tau = np.asarray(v) * f.pdf(z)
    bp = f.b_plus(tau)
    bm = f.b_minus(tau)
    return LayeredState(u=np.asarray(u, dtype=np.float64), tau=tau,
                        step=bp - bm, center=0.5 * (bp + bm),
                        variant="direct")


def shifted_state_from_draws(f: UnimodalPdf, z, v, u) -> LayeredState:
    """Shifted-layer state from pre-drawn randomness.

    ``z`` is a draw from ``f``, ``v`` a height uniform in (0,1), ``u`` the
    dither in [0,1); all arrays of one shape.  Used by batch engines that
    materialize the raw draws themselves.
    """
    z = np.asarray(z, dtype=np.float64)
    fz = f.pdf(z)
    tau = np.where(z < f.mode, f.peak - fz * (1.0 - np.asarray(v)), v * fz)
    bp = f.b_plus(tau)
    bm = f.b_minus(f.peak - tau)
    return LayeredState(u=np.asarray(u, dtype=np.float64), tau=tau,
                        step=bp - bm, center=0.5 * (bp + bm),
                        variant="shifted")


def _build_state(u, tau, bp, bm, variant, scalar):
    if scalar:
        return LayeredState(u=float(u[0]), tau=float(tau[0]),
                            step=float(bp[0] - bm[0]),
                            center=float(0.5 * (bp[0] + bm[0])),
                            variant=variant)
    return LayeredState(u=u, tau=tau, step=bp - bm,
                        center=0.5 * (bp + bm), variant=variant)


def direct_sample_state(f: UnimodalPdf, rng: SharedRandomness,
                        size=None) -> LayeredState:
    """Draw the shared randomness (u, tau) of the direct layered quantizer."""
    tau = _sample_tau(f, rng, size, shifted=False)
    u = rng.uniforms(tau.size)
    return _build_state(u, tau, f.b_plus(tau), f.b_minus(tau),
                        "direct", size is None)


def shifted_sample_state(f: UnimodalPdf, rng: SharedRandomness,
                         size=None) -> LayeredState:
    """Draw the shared randomness (u, tau) of the shifted layered quantizer."""
    tau = _sample_tau(f, rng, size, shifted=True)
    u = rng.uniforms(tau.size)
    return _build_state(u, tau, f.b_plus(tau), f.b_minus(f.peak - tau),
                        "shifted", size is None)


def layered_encode(x, state: LayeredState):
    """Encode against a layered state: round(x/step + u)."""
    x = _require_finite(x)
    return round_half_up(x / state.step + state.u)


def layered_decode(m, state: LayeredState):
    """Decode a layered message: (m - u) * step + center."""
    return (np.asarray(m, dtype=np.float64) - state.u) * state.step + state.center


def fixed_length_bits(f: UnimodalPdf, t: float) -> int:
    """Bits of the fixed-length code for the shifted quantizer on width t.

    The shifted quantizer's step never drops below the minimal step eta, so
    inputs confined to an interval of length ``t`` produce at most
    ``2 + t/eta`` distinct messages.  The direct variant has no positive
    minimal step and is rejected.
    """
    if t < 0:
        raise ValueError("interval length must be nonnegative")
    eta = min_step(f)
    if not (eta > 0):
        raise ValueError("no positive minimal step; fixed-length coding "
                         "applies to the shifted variant only")
    return int(math.ceil(math.log2(2.0 + t / eta)))


def support_bound(f: UnimodalPdf, t: float) -> float:
    """Upper bound on |supp M| for the shifted quantizer: 2 + t/eta."""
    return 2.0 + t / min_step(f)


def vector_encode(x, states: LayeredState):
    """Coordinate-wise encode; ``states`` holds one state per coordinate."""
    x = _require_finite(x)
    if x.shape != np.shape(states.u):
        raise ValueError("x and states must have matching length")
    return layered_encode(x, states)


def vector_decode(m, states: LayeredState):
    """Coordinate-wise decode matching :func:`vector_encode`."""
    m = np.asarray(m)
    if m.shape != np.shape(states.u):
        raise ValueError("m and states must have matching length")
    return layered_decode(m, states)
