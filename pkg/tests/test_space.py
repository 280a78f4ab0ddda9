import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bakeoff.hpo import PRESETS, preset
from bakeoff.hpo.space import Choice, IntUniform, LogUniform, SearchSpace, SpaceError, Uniform, sample


def test_batch_size_choice_membership():
    space = preset("node")
    allowed = {512, 1024, 2048, 4096, 8192}
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert sample(space, rng)["batch_size"] in allowed


def test_log_uniform_endpoint_mapping():
    d = LogUniform(math.exp(-5), 1.0)
    assert d.from_unit(0.0) == pytest.approx(math.exp(-5), rel=1e-15)
    assert d.from_unit(1.0) == 1.0
    # midpoint in log space
    assert d.from_unit(0.5) == pytest.approx(math.exp(-2.5), rel=1e-12)


def test_discrete_uniform_frequencies_within_five_sigma():
    space = SearchSpace({"d": IntUniform(1, 10)})
    rng = np.random.default_rng(123)
    draws = np.array([sample(space, rng)["d"] for _ in range(10_000)])
    counts = np.bincount(draws, minlength=11)[1:]
    assert counts.sum() == 10_000 and draws.min() == 1 and draws.max() == 10
    sigma = math.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 1000) <= 5 * sigma), counts


def test_int_from_unit_covers_both_endpoints():
    d = IntUniform(1, 10)
    assert d.from_unit(0.0) == 1 and d.from_unit(0.9999999) == 10 and d.from_unit(1.0) == 10


@pytest.mark.parametrize(
    "bad",
    [lambda: Uniform(1, 1), lambda: LogUniform(0, 1), lambda: LogUniform(2, 1), lambda: IntUniform(1.5, 3),
     lambda: Choice(()), lambda: SearchSpace({}), lambda: SearchSpace({"a": "nope"})],
)
def test_invalid_spaces(bad):
    with pytest.raises(SpaceError):
        bad()


def test_nested_choice_branches():
    space = SearchSpace({"alpha": Choice((0.0, LogUniform(math.exp(-16), math.exp(2))))})
    rng = np.random.default_rng(0)
    values = [sample(space, rng)["alpha"] for _ in range(400)]
    zeros = sum(v == 0.0 for v in values)
    assert 120 < zeros < 280
    assert all(v == 0.0 or math.exp(-16) <= v <= math.exp(2) for v in values)
    assert space.encode({"alpha": 0.0}) == {"alpha": 0}
    assert space.encode({"alpha": 0.5}) == {"alpha": 1, "alpha/1": 0.5}


def test_conditional_mapping_branch():
    space = SearchSpace({"kind": Choice(({"depth": IntUniform(1, 3)}, {"width": Uniform(0, 1)}))})
    rng = np.random.default_rng(1)
    seen = set()
    for _ in range(50):
        a = space.sample_assignment(rng)
        hp = space.materialize(a)
        seen.add(hp["kind"])
        assert ("depth" in hp) == (hp["kind"] == 0) and ("width" in hp) == (hp["kind"] == 1)
        assert space.encode(hp) == a
    assert seen == {0, 1}


def test_encode_rejects_out_of_support():
    space = SearchSpace({"x": Uniform(0, 1)})
    assert not space.contains({"x": 1.5})
    assert not space.contains({})
    with pytest.raises(SpaceError):
        space.encode({"x": 2.0})


@st.composite
def spaces(draw):
    dims = {}
    for i in range(draw(st.integers(1, 5))):
        kind = draw(st.sampled_from(["u", "l", "i", "c", "n"]))
        lo = draw(st.floats(-50, 50))
        width = draw(st.floats(1e-3, 100))
        if kind == "u":
            dims[f"p{i}"] = Uniform(lo, lo + width)
        elif kind == "l":
            a = draw(st.floats(1e-6, 10))
            dims[f"p{i}"] = LogUniform(a, a * (1 + width))
        elif kind == "i":
            a = draw(st.integers(-20, 20))
            dims[f"p{i}"] = IntUniform(a, a + draw(st.integers(1, 20)))
        elif kind == "c":
            dims[f"p{i}"] = Choice(tuple(draw(st.lists(st.integers(), min_size=1, max_size=5))))
        else:
            dims[f"p{i}"] = Choice((0.0, Uniform(lo, lo + width)))
    return SearchSpace(dims)


@given(spaces(), st.integers(0, 2**32 - 1))
def test_samples_lie_in_support(space, seed):
    hp = sample(space, seed)
    assert set(hp) == set(space.names)
    assert space.contains(hp)
    for name, dim in space.dims.items():
        if isinstance(dim, IntUniform):
            assert isinstance(hp[name], int)


def test_every_preset_samples_inside_itself():
    rng = np.random.default_rng(0)
    for name in PRESETS:
        space = preset(name)
        for _ in range(20):
            assert space.contains(sample(space, rng))


def test_unknown_preset():
    with pytest.raises(KeyError, match="unknown"):
        preset("lightgbm")
