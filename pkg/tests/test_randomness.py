import numpy as np
import pytest
from numpy.random import Generator, Philox

from exactquant.randomness import (
    SharedRandomness,
    StreamBatch,
    derive_client_stream,
    philox4x64,
    uniform01,
)


def test_block_function_matches_numpy_philox():
    key = np.array([0x1234567890ABCDEF, 0xFEDCBA0987654321], dtype=np.uint64)
    ref = Philox(key=key).random_raw(12)  # numpy emits blocks from counter=1
    ctr = np.zeros((3, 4), dtype=np.uint64)
    ctr[:, 0] = [1, 2, 3]
    assert np.array_equal(philox4x64(ctr, key).reshape(-1), ref)


def test_uniform_mapping_matches_numpy_generator():
    key = np.array([7, 99], dtype=np.uint64)
    ref = Generator(Philox(key=key)).random(40)
    s = SharedRandomness(seed=7, stream_id=99, counter=4)  # skip block 0
    assert np.array_equal(s.uniforms(40), ref)


def test_determinism_same_seed_stream_counter():
    a = SharedRandomness(123, 5).uniform01()
    b = SharedRandomness(123, 5).uniform01()
    assert a == b
    # frozen regression values for the documented mapping
    s = SharedRandomness(seed=0, stream_id=0)
    first = s.uniforms(2)
    s2 = SharedRandomness(seed=0, stream_id=0)
    assert s2.uniform01() == first[0]
    assert s2.uniform01() == first[1]


def test_counter_advances_by_exactly_one():
    s = SharedRandomness(42)
    assert s.counter == 0
    s.uniform01()
    assert s.counter == 1
    s.uniforms(10)
    assert s.counter == 11
    # resuming from the counter reproduces the tail of the sequence
    full = SharedRandomness(42).uniforms(30)
    tail = SharedRandomness(42, counter=11).uniforms(19)
    assert np.array_equal(full[11:], tail)


def test_uniform_mean_clt_bound():
    u = SharedRandomness(2024).uniforms(10**6)
    assert abs(u.mean() - 0.5) < 0.002
    assert u.min() >= 0.0 and u.max() < 1.0


def test_distinct_streams_uncorrelated():
    n = 10**5
    a = SharedRandomness(9, stream_id=1).uniforms(n)
    b = SharedRandomness(9, stream_id=2).uniforms(n)
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) < 0.01


def test_derive_client_stream_consistency():
    root = SharedRandomness(77)
    s1 = derive_client_stream(root, 1, 0)
    s1_again = derive_client_stream(root, 1, 0)
    assert s1.stream_id == s1_again.stream_id
    assert np.array_equal(s1.uniforms(100), s1_again.uniforms(100))

    s2 = derive_client_stream(root, 2, 0)
    assert not np.array_equal(
        derive_client_stream(root, 1, 0).uniforms(100), s2.uniforms(100)
    )


def test_derivation_does_not_advance_parent():
    root = SharedRandomness(1)
    before = root.counter
    root.substream(3)
    assert root.counter == before


def test_clone_forks_at_position():
    s = SharedRandomness(5)
    s.uniforms(7)
    c = s.clone()
    assert np.array_equal(s.uniforms(5), c.uniforms(5))


def test_normals_standard_moments():
    z = SharedRandomness(11).normals(10**6)
    assert abs(z.mean()) < 0.004
    assert abs(z.std() - 1.0) < 0.004
    assert np.all(np.isfinite(z))


def test_stream_batch_equals_scalar_substreams():
    root = SharedRandomness(31, stream_id=4)
    batch = StreamBatch(root, np.arange(8))
    block = batch.uniform_block(6)
    for i in range(8):
        assert np.array_equal(root.substream(i).uniforms(6), block[i])


def test_stream_batch_masked_lanes_advance_independently():
    root = SharedRandomness(8)
    batch = StreamBatch(root, np.arange(4))
    batch.uniforms(np.array([0, 2]))  # lanes 0 and 2 consume one draw
    u = batch.uniforms()
    expect = [
        root.substream(0).uniforms(2)[1],
        root.substream(1).uniforms(1)[0],
        root.substream(2).uniforms(2)[1],
        root.substream(3).uniforms(1)[0],
    ]
    assert np.allclose(u, expect)


def test_module_level_uniform01():
    s = SharedRandomness(3)
    v = uniform01(s)
    assert 0.0 <= v < 1.0 and s.counter == 1
