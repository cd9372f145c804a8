"""Deterministic shared-randomness streams.

Clients and the server must derive byte-identical common randomness from a
seed, in a fixed draw order.  The generator is a counter-based Philox4x64-10
(Salmon et al. 2011), reimplemented here on top of numpy integer ops so that

* a stream is a pure value ``(seed, stream_id, counter)`` -- no hidden state,
* draws can be produced for many streams at once (vectorized over the key),
* the exact bit mapping is pinned down for cross-implementation agreement.

Word layout: draw ``i`` of a stream is word ``i % 4`` of the Philox block with
counter ``(i // 4, 0, 0, 0)`` and key ``(seed, stream_id)``.  This is the same
word order as numpy's ``Philox`` bit generator, which the test-suite uses as a
reference.  Uniforms map a word ``w`` to ``(w >> 11) * 2**-53`` (53-bit
mantissa, values in ``[0, 1)``).  Standard normals use the shifted mapping
``((w >> 11) + 0.5) * 2**-53`` through the inverse normal CDF so that the
argument is never 0 or 1; one word per normal draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)

_MASK32 = np.uint64(0xFFFFFFFF)
_U64 = np.uint64
_INV53 = 2.0 ** -53


def _mulhilo(a, b):
    """Full 64x64 -> 128 bit product of uint64 arrays, as (lo, hi)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    al = a & _MASK32
    ah = a >> _U64(32)
    bl = b & _MASK32
    bh = b >> _U64(32)
    ll = al * bl
    lh = al * bh
    hl = ah * bl
    hh = ah * bh
    mid = (ll >> _U64(32)) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _U64(32)) + (hl >> _U64(32)) + (mid >> _U64(32))
    lo = ((mid & _MASK32) << _U64(32)) + (ll & _MASK32)
    return lo, hi


def philox4x64(counter, key):
    """10-round Philox4x64 block function.

    ``counter`` is a (..., 4) uint64 array, ``key`` a (..., 2) uint64 array
    (broadcastable against the counter's leading axes).  Returns a (..., 4)
    uint64 array of output words.
    """
    counter = np.asarray(counter, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    shape = (2,) + counter.shape[:-1]
    # the two independent multiply chains ride one stacked axis: index 0
    # carries (c0, M0), index 1 carries (c2, M1)
    even = np.stack([counter[..., 0], counter[..., 2]])
    odd = np.stack([counter[..., 1], counter[..., 3]])
    keys = np.stack([np.broadcast_to(key[..., 0], shape[1:]),
                     np.broadcast_to(key[..., 1], shape[1:])]).copy()
    mult = np.array([_M0, _M1], dtype=np.uint64).reshape(
        (2,) + (1,) * (counter.ndim - 1))
    weyl = np.array([_W0, _W1], dtype=np.uint64).reshape(mult.shape)
    with np.errstate(over="ignore"):  # uint64 wraparound is intended
        for _ in range(10):
            lo, hi = _mulhilo(mult, even)
            even = hi[::-1] ^ odd ^ keys
            odd = lo[::-1]
            keys = keys + weyl
    return np.stack([even[0], odd[0], even[1], odd[1]], axis=-1)


def mix64(x):
    """SplitMix64 finalizer; bijective 64-bit mixing for stream derivation."""
    with np.errstate(over="ignore"):  # uint64 wraparound is intended
        z = np.asarray(x, dtype=np.uint64) + _W0
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def derive_stream_id(parent_id, *labels):
    """Fold integer labels into a parent stream id (order-sensitive)."""
    sid = np.asarray(parent_id, dtype=np.uint64)
    for lab in labels:
        sid = mix64(sid ^ mix64(np.asarray(lab, dtype=np.uint64)))
    return sid


def _words_at(seed, stream_id, start, n):
    """Raw output words ``start .. start+n-1`` of one stream."""
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    first_block = start >> 2
    last_block = (start + n - 1) >> 2
    blocks = np.arange(first_block, last_block + 1, dtype=np.uint64)
    counter = np.zeros((len(blocks), 4), dtype=np.uint64)
    counter[:, 0] = blocks
    key = np.array([seed, stream_id], dtype=np.uint64)
    words = philox4x64(counter, key).reshape(-1)
    off = start - 4 * first_block
    return words[off:off + n]


@dataclass
class SharedRandomness:
    """A value-typed deterministic stream identified by (seed, stream_id).

    ``counter`` is the number of 64-bit draws consumed so far.  Equal
    ``(seed, stream_id)`` always reproduce the same sequence; distinct
    stream ids are computationally independent Philox keys.
    """

    seed: int
    stream_id: int = 0
    counter: int = field(default=0)

    def __post_init__(self):
        self.seed = int(np.uint64(self.seed))
        self.stream_id = int(np.uint64(self.stream_id))

    def clone(self) -> "SharedRandomness":
        """Fork a deterministic copy at the current position."""
        return replace(self)

    def substream(self, *labels) -> "SharedRandomness":
        """Derive an independent child stream; does not advance this one."""
        sid = derive_stream_id(np.uint64(self.stream_id), *labels)
        return SharedRandomness(self.seed, int(sid))

    def uniforms(self, n: int) -> np.ndarray:
        """n uniforms in [0,1); advances the counter by exactly n."""
        words = _words_at(self.seed, self.stream_id, self.counter, int(n))
        self.counter += int(n)
        return (words >> _U64(11)).astype(np.float64) * _INV53

    def uniform01(self) -> float:
        """One uniform draw in [0,1); advances the counter by exactly one."""
        return float(self.uniforms(1)[0])

    def uniforms_open(self, n: int) -> np.ndarray:
        """n uniforms in (0,1) via the shifted mapping; one word per draw."""
        words = _words_at(self.seed, self.stream_id, self.counter, int(n))
        self.counter += int(n)
        return ((words >> _U64(11)).astype(np.float64) + 0.5) * _INV53

    def normals(self, n: int) -> np.ndarray:
        """n standard normal draws (inverse-CDF; one word per draw)."""
        words = _words_at(self.seed, self.stream_id, self.counter, int(n))
        self.counter += int(n)
        u = ((words >> _U64(11)).astype(np.float64) + 0.5) * _INV53
        return ndtri(u)

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def integers(self, n: int, high: int) -> np.ndarray:
        """n integers in [0, high) via the uniform mapping (for subsampling)."""
        return np.minimum((self.uniforms(n) * high).astype(np.int64), high - 1)


def uniform01(stream: SharedRandomness) -> float:
    """Module-level alias for the single-draw operation."""
    return stream.uniform01()


def derive_client_stream(root: SharedRandomness, client_id: int,
                         coordinate: int = 0) -> SharedRandomness:
    """Per-client, per-coordinate stream shared by the client and the server.

    Server-side and client-side derivation with equal arguments yields equal
    streams; the rejection-loop draws of the decomposition never shift them
    because each role lives in its own substream.
    """
    return root.substream(client_id, coordinate)


class StreamBatch:
    """Many independent substreams advanced in lockstep, vectorized.

    Lane ``i`` is the substream ``root.substream(labels[i])`` (optionally with
    extra leading labels).  Each lane owns its counter, so lanes may consume
    different numbers of draws (rejection loops) without affecting each other.
    """

    def __init__(self, root: SharedRandomness, labels, *, prefix=(), suffix=()):
        labels = np.asarray(labels, dtype=np.uint64)
        sid = np.uint64(root.stream_id)
        for lab in prefix:
            sid = derive_stream_id(sid, lab)
        self.seed = np.uint64(root.seed)
        ids = derive_stream_id(sid, labels)
        for lab in suffix:
            ids = derive_stream_id(ids, lab)
        self.stream_ids = ids
        self.counters = np.zeros(labels.shape, dtype=np.uint64)

    def __len__(self):
        return self.stream_ids.size

    def _next_words(self, idx=None):
        ids = self.stream_ids if idx is None else self.stream_ids[idx]
        ctr = self.counters if idx is None else self.counters[idx]
        counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
        counter[..., 0] = ctr >> _U64(2)
        key = np.stack([np.broadcast_to(self.seed, ids.shape), ids], axis=-1)
        blocks = philox4x64(counter, key)
        words = np.take_along_axis(
            blocks, (ctr & _U64(3)).astype(np.int64)[..., None], axis=-1
        )[..., 0]
        if idx is None:
            self.counters = self.counters + _U64(1)
        else:
            self.counters[idx] = self.counters[idx] + _U64(1)
        return words

    def uniforms(self, idx=None) -> np.ndarray:
        """One uniform per (selected) lane; advances those lanes by one."""
        w = self._next_words(idx)
        return (w >> _U64(11)).astype(np.float64) * _INV53

    def uniforms_open(self, idx=None) -> np.ndarray:
        """One uniform in (0,1) per (selected) lane (shifted mapping)."""
        w = self._next_words(idx)
        return ((w >> _U64(11)).astype(np.float64) + 0.5) * _INV53

    def normals(self, idx=None) -> np.ndarray:
        w = self._next_words(idx)
        return ndtri(((w >> _U64(11)).astype(np.float64) + 0.5) * _INV53)

    def uniform_block(self, k: int) -> np.ndarray:
        """(n_lanes, k) uniforms; k draws from every lane."""
        return np.stack([self.uniforms() for _ in range(k)], axis=-1)


def grid_stream_ids(root: SharedRandomness, rows, cols) -> np.ndarray:
    """Stream ids of ``root.substream(r).substream(c)`` for a whole grid.

    Returns shape (len(rows), len(cols)); used to draw one-shot values (for
    example per-client dithers across many trials) in a single pass.
    """
    rows = np.asarray(rows, dtype=np.uint64)
    cols = np.asarray(cols, dtype=np.uint64)
    row_ids = derive_stream_id(np.uint64(root.stream_id), rows)
    return derive_stream_id(row_ids[:, None], cols[None, :])


def leading_uniforms(seed, stream_ids, k: int) -> np.ndarray:
    """First k <= 4 uniforms of each stream id, shape ``ids.shape + (k,)``."""
    if not 1 <= k <= 4:
        raise ValueError("leading_uniforms supports 1..4 draws")
    ids = np.asarray(stream_ids, dtype=np.uint64)
    counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
    key = np.stack([np.broadcast_to(np.uint64(seed), ids.shape), ids], axis=-1)
    words = philox4x64(counter, key)[..., :k]
    return (words >> _U64(11)).astype(np.float64) * _INV53
