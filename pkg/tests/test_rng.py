import numpy as np
from hypothesis import given, strategies as st

from perc_chem import rng


def test_mix64_matches_splitmix_reference():
    # first output of the reference SplitMix64 generator seeded with 0
    assert rng.mix64(rng.GOLDEN) == 0xE220A8397B1DCDAF
    assert rng.mix64(2 * rng.GOLDEN & rng.MASK64) == 0x6E789E6AA1B965F4


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_vectorised_stream_equals_scalar(seed, start):
    vec = rng.uniforms(seed, 5, start)
    assert vec.tolist() == [rng.uniform(seed, start + i) for i in range(5)]


def test_uniforms_in_unit_interval():
    u = rng.uniforms(123, 100000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * (1 / 12) ** 0.5 / 100000**0.5


def test_derive_separates_streams():
    assert rng.derive(1, 2) != rng.derive(1, 3) != rng.derive(2, 2)
