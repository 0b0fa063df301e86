import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from parafac.convops import build_orthogonal, save_spec
from parafac.errors import InvalidInputError
from parafac.lipnet import (
    Chain,
    GroupSort,
    ResidualBlock,
    empirical_lipschitz,
    group_sort,
    load_chain,
    margin_and_radius,
    residual_apply,
)


def test_group_sort_examples():
    assert group_sort(np.array([3.0, 1, 2, 5]), 2).tolist() == [1, 3, 2, 5]
    x = np.array([[1.0, 2, 3, 4]])
    assert np.array_equal(group_sort(x, 4), x)
    with pytest.raises(InvalidInputError):
        group_sort(np.ones((2, 5)), 2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 6), elements=st.floats(-1e6, 1e6)))
def test_group_sort_preserves_norm_exactly(x):
    y = group_sort(x, 3)
    assert np.array_equal(np.sort(y, axis=None), np.sort(x, axis=None))
    # correctly rounded sums are order independent, so equality is exact
    assert math.fsum((y * y).ravel()) == math.fsum((x * x).ravel())


def test_group_sort_is_1_lipschitz():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x, xp = rng.standard_normal((2, 4, 6))
        assert np.linalg.norm(group_sort(x, 2) - group_sort(xp, 2)) <= np.linalg.norm(x - xp) * (1 + 1e-15)


def test_additive_block_degenerate_cases():
    conv = build_orthogonal("standard", 4, degrees=(1, 1), seed=1)
    x = np.random.default_rng(1).standard_normal((8, 4))
    one = ResidualBlock("additive", (conv, Chain()), alpha=1.0)
    zero = ResidualBlock("additive", (conv, Chain()), alpha=0.0)
    assert np.array_equal(one(x), conv(x))
    assert np.array_equal(zero(x), x)
    half = ResidualBlock("additive", ((), ()), alpha=0.5)
    assert np.array_equal(half(x), x)
    clamped = ResidualBlock("additive", (conv, ()), alpha=7.0)
    assert np.array_equal(clamped(x), conv(x))


def test_concatenative_block():
    x = np.random.default_rng(2).standard_normal((8, 4))
    ident = ResidualBlock("concatenative", ((), ()), split=1)
    assert np.array_equal(residual_apply(ident, x), x)
    swap = ResidualBlock("concatenative", ((), ()), split=2, perm=(2, 3, 0, 1))
    assert np.array_equal(swap(x), x[:, [2, 3, 0, 1]])
    with pytest.raises(InvalidInputError):
        ResidualBlock("concatenative", ((), ()), split=2, perm=(0, 0, 1, 2))
    with pytest.raises(InvalidInputError):
        ResidualBlock("concatenative", ((), ()), split=9)(x)


def test_block_shape_mismatch():
    up = build_orthogonal("strided_up", 4, rate=2, seed=0)
    with pytest.raises(InvalidInputError):
        ResidualBlock("additive", (up, ()))(np.ones((8, 4)))
    with pytest.raises(InvalidInputError):
        ResidualBlock("mixed", ((), ()))


def test_residual_block_lipschitz():
    a = build_orthogonal("standard", 4, degrees=(1, 1), seed=3)
    b = build_orthogonal("standard", 4, degrees=(2, 1), seed=4)
    block = ResidualBlock("additive", (a, Chain([b, GroupSort(2)])), alpha=0.3)
    assert empirical_lipschitz(block, 500, 0, shape=(16, 4)) <= 1 + 1e-9


def test_margin_examples():
    r = margin_and_radius([2.0, 0.5, -1.0], 0, 1.0)
    assert r.margin == 1.5 and abs(r.certified_radius - 1.5 / math.sqrt(2)) <= 1e-15
    r = margin_and_radius([2.0, 0.5, -1.0], 1, 1.0)
    assert r.margin == 0.0 and r.certified_radius == 0.0
    logits = np.random.default_rng(5).standard_normal(10)
    c = int(np.argmax(logits))
    assert margin_and_radius(logits, c, 2.0).certified_radius == margin_and_radius(logits, c, 1.0).certified_radius / 2
    with pytest.raises(InvalidInputError):
        margin_and_radius([1.0, 2.0], 2)
    with pytest.raises(InvalidInputError):
        margin_and_radius([1.0], 0)
    with pytest.raises(InvalidInputError):
        margin_and_radius([1.0, 2.0], 0, 0.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-100, 100)), st.floats(0, 50), st.integers(0, 4))
def test_margin_scale_covariant(logits, s, c):
    a = margin_and_radius(logits, c)
    b = margin_and_radius(s * logits, c)
    assert math.isclose(b.margin, s * a.margin, rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(b.certified_radius, s * a.certified_radius, rel_tol=1e-12, abs_tol=1e-9)


def test_empirical_lipschitz_examples():
    assert abs(empirical_lipschitz(Chain(), 10, 0) - 1.0) <= 1e-12
    conv = build_orthogonal("standard", 4, degrees=(1, 1), seed=6)
    assert abs(empirical_lipschitz(conv, 20, 0, shape=(16, 4)) - 1.0) <= 1e-10
    with pytest.raises(InvalidInputError):
        empirical_lipschitz(conv, 1, 0)


def test_load_chain(tmp_path):
    spec = build_orthogonal("standard", 4, degrees=(1, 1), seed=7)
    save_spec(str(tmp_path / "c.json"), spec)
    layers = [
        {"type": "conv", "spec": "c.json"},
        {"type": "groupsort", "group_size": 2},
        {"type": "additive", "alpha": 0.25, "branches": [[{"type": "conv", "spec": "c.json"}], []]},
        {"type": "concatenative", "split": 2, "perm": [1, 0, 3, 2], "branches": [[], []]},
    ]
    (tmp_path / "chain.json").write_text(json.dumps(layers))
    chain = load_chain(str(tmp_path / "chain.json"))
    assert len(chain) == 4
    x = np.random.default_rng(7).standard_normal((8, 4))
    y = group_sort(spec(x), 2)
    y = 0.25 * spec(y) + 0.75 * y
    assert np.max(np.abs(chain(x) - y[:, [1, 0, 3, 2]])) <= 1e-14
    (tmp_path / "bad.json").write_text(json.dumps([{"type": "relu"}]))
    with pytest.raises(InvalidInputError):
        load_chain(str(tmp_path / "bad.json"))
