import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from filterlearn import decoder, iqa, modelfile, texture, whitening
from filterlearn.modelfile import ModelFormatError


def _fs(d=6, h=3, seed=0):
    rng = np.random.default_rng(seed)
    return decoder.FilterSet(rng.normal(size=(d, h)), rng.normal(size=h), rng.normal(size=(h, d)),
                             rng.normal(size=d), provenance={"seed": seed, "note": "x"})


def _same_filterset(a, b):
    for n in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(a, n), getattr(b, n))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_binary_array_roundtrip_is_bit_exact(a):
    rec = modelfile.encode_array(a, binary=True)
    b = modelfile.decode_array(json.loads(json.dumps(rec)), binary=True)
    assert b.shape == a.shape
    assert a.tobytes() == b.tobytes()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e300, 1e300)))
def test_text_array_roundtrip(a):
    b = modelfile.decode_array(modelfile.encode_array(a, binary=False), binary=False)
    assert np.array_equal(a, b)


def test_declared_size_mismatch():
    rec = modelfile.encode_array(np.ones((2, 3)), binary=False)
    rec["cols"] = 4
    with pytest.raises(ModelFormatError):
        modelfile.decode_array(rec, binary=False)


@pytest.mark.parametrize("binary", [True, False])
def test_filterset_roundtrip(tmp_path, binary):
    fs = _fs()
    path = tmp_path / "fs.json"
    modelfile.save(path, fs, binary=binary)
    back = modelfile.load(path)
    _same_filterset(fs, back)
    assert back.provenance == fs.provenance
    assert modelfile.kind_of(path) == "filterset"


def test_header_fields():
    doc = json.loads(modelfile.dumps(_fs()))
    assert doc["format"] == "filterlearn-model"
    assert doc["version"] == 1
    assert doc["encoding"] == "binary"
    assert doc["arrays"]["w1"]["rows"] == 6 and doc["arrays"]["w1"]["cols"] == 3


def test_unique_roundtrip_keeps_chain(small_unique):
    back = modelfile.loads(modelfile.dumps(small_unique))
    _same_filterset(small_unique.filter_set, back.filter_set)
    assert (back.k, back.epsilon, back.whitening) == (small_unique.k, small_unique.epsilon, "refit")
    for s0, s1 in zip(small_unique.training_chain.stages, back.training_chain.stages):
        assert np.array_equal(s0.w, s1.w) and s0.epsilon == s1.epsilon
    assert modelfile.dumps(back) == modelfile.dumps(small_unique)


def test_msunique_roundtrip(small_unique):
    fs = small_unique.filter_set
    m = iqa.MsUniqueModel((fs,) * 5, (iqa.edge_mask(fs),) * 5, edge_weight=2.0)
    back = modelfile.loads(modelfile.dumps(m))
    assert back.edge_weight == 2.0
    assert all(np.array_equal(a, b) for a, b in zip(m.edge_masks, back.edge_masks))
    assert modelfile.dumps(back) == modelfile.dumps(m)


def test_texture_and_index_roundtrip(small_texture_model):
    m = small_texture_model
    back = modelfile.loads(modelfile.dumps(m))
    assert back.dims == m.dims
    assert np.array_equal(back.final_mean, m.final_mean)
    idx = texture.RetrievalIndex((texture.IndexEntry("a", 1, np.arange(3.0), np.ones(4)),
                                  texture.IndexEntry("b", 2, np.arange(3.0) + 1, np.zeros(4))))
    back_idx = modelfile.loads(modelfile.dumps(idx, binary=False))
    assert back_idx.ids == ["a", "b"]
    assert [e.label for e in back_idx.entries] == [1, 2]
    assert np.array_equal(back_idx.entries[1].color, idx.entries[1].color)


def test_identical_inputs_give_identical_files(tmp_path):
    p = np.random.default_rng(0).normal(size=(12, 200))
    u, _ = whitening.iterated_whiten(p, 1)
    cfg = decoder.TrainingConfig(max_iterations=10)
    a = decoder.train(u, 4, cfg, 3)
    b = decoder.train(u, 4, cfg, 3)
    modelfile.save(tmp_path / "a.json", a)
    modelfile.save(tmp_path / "b.json", b)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


@pytest.mark.parametrize("text, match", [
    ("not json", "not a model"),
    ('{"format": "other"}', "not a filterlearn"),
    ('{"format": "filterlearn-model", "version": 99}', "version"),
    ('{"format": "filterlearn-model", "version": 1, "encoding": "hex"}', "encoding"),
    ('{"format": "filterlearn-model", "version": 1, "encoding": "text", "kind": "blob"}', "kind"),
    ('{"format": "filterlearn-model", "version": 1, "encoding": "text", "kind": "filterset"}', "missing"),
])
def test_malformed_files(text, match):
    with pytest.raises(ModelFormatError, match=match):
        modelfile.loads(text)


def test_unsupported_object():
    with pytest.raises(TypeError):
        modelfile.dumps(object())
