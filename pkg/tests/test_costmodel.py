import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxmask.costmodel import PRESETS, ConvSpec, conv_cost, load_specs, ratio, total_cost


def test_standard_256():
    r = conv_cost(ConvSpec("standard", 3, 256, 256))
    assert r.mults == 589824
    assert r.params == 589824


def test_depthwise_256():
    r = conv_cost(ConvSpec("depthwise_separable", 3, 256, 256))
    assert r.mults == 9 * 256 + 256 * 256 == 67840
    assert r.params == 67840


def test_identity_case():
    assert conv_cost(ConvSpec("standard", 1, 1, 1, 1, 1)).mults == 1


@pytest.mark.parametrize("bad", [dict(k=0), dict(c_in=-1), dict(w_out=0), dict(kind="grouped"), dict(k=2.5)])
def test_invalid_specs(bad):
    args = dict(kind="standard", k=3, c_in=4, c_out=4)
    args.update(bad)
    with pytest.raises(ValueError):
        ConvSpec(**args)


dims = st.integers(1, 64)


@settings(max_examples=100)
@given(st.integers(2, 7), dims, st.integers(2, 64), dims, dims)
def test_depthwise_cheaper(k, c_in, c_out, w, h):
    s = conv_cost(ConvSpec("standard", k, c_in, c_out, w, h)).mults
    d = conv_cost(ConvSpec("depthwise_separable", k, c_in, c_out, w, h)).mults
    assert d < s


@settings(max_examples=100)
@given(st.sampled_from(["standard", "depthwise_separable"]), st.integers(1, 7), dims, dims, dims, dims,
       st.integers(2, 5))
def test_linear_in_area(kind, k, c_in, c_out, w, h, m):
    base = conv_cost(ConvSpec(kind, k, c_in, c_out, w, h))
    scaled = conv_cost(ConvSpec(kind, k, c_in, c_out, w * m, h))
    assert scaled.mults == m * base.mults
    assert scaled.params == base.params


def test_ratio_identity_and_errors():
    layers = [ConvSpec("standard", 3, 8, 16, 4, 4), ConvSpec("depthwise_separable", 5, 16, 16, 4, 4)]
    assert ratio(layers, layers) == 1.0
    with pytest.raises(ValueError):
        ratio([], layers)


def test_totals_are_sums():
    layers = [ConvSpec("standard", 3, 8, 16, 4, 4), ConvSpec("depthwise_separable", 5, 16, 16, 2, 2)]
    rep = total_cost(layers)
    assert rep.mults == sum(l.mults for l in rep.layers)
    assert rep.params == sum(l.params for l in rep.layers)
    assert len(rep.layers) == 2


def test_presets_within_factor_two():
    fpn, head = PRESETS["fpn"], PRESETS["head"]
    # ghost block: 2 * (96*96 + 9*96 + 96*96) over 9*256*256
    assert fpn.ratio() == pytest.approx(2 * (9216 + 864 + 9216) / 589824, abs=1e-15)
    # two shared 5x5 DW blocks over eight 3x3 256-channel convs
    assert head.ratio() == pytest.approx(2 * (25 * 96 + 96 * 96) / (8 * 589824), abs=1e-15)
    assert 1 / 30 <= fpn.ratio() <= 2 / 15
    assert 0.0025 <= head.ratio() <= 0.01
    for p in PRESETS.values():
        assert p.assumptions
        assert p.report()["within_factor_2"]


def test_load_specs(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([{"kind": "standard", "k": 3, "c_in": 2, "c_out": 2, "w_out": 5, "h_out": 5}]))
    specs = load_specs(path)
    assert total_cost(specs).mults == 9 * 2 * 25 * 2
