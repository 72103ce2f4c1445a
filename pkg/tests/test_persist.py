import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wienerlab.persist import (
    BLOCK_KEYS,
    SCHEMA_VERSION,
    Collector,
    Manifest,
    ManifestError,
    dumps,
    flatten,
    from_flat_text,
    read_manifest,
    to_flat_text,
    unflatten,
    write_manifest,
)

scalars = st.one_of(
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.booleans(),
    st.text(st.characters(codec="utf-8", exclude_characters="\n\r"), max_size=12),
    st.lists(st.integers(0, 100), max_size=4),
)


@st.composite
def manifests(draw):
    blocks = {}
    for name in draw(st.lists(st.sampled_from(sorted(BLOCK_KEYS)), unique=True, max_size=4)):
        keys = draw(st.lists(st.sampled_from(sorted(BLOCK_KEYS[name])), unique=True, min_size=1, max_size=4))
        blocks[name] = {k: draw(scalars) for k in keys}
    seed = draw(st.integers(0, 2**32 - 1))
    out = draw(st.one_of(st.none(), st.sampled_from(["runs/a", "out"])))
    return Manifest(blocks=blocks, seed=seed, out=out)


@settings(max_examples=100, deadline=None)
@given(manifests())
def test_flat_round_trip(m):
    assert Manifest.from_dict(from_flat_text(to_flat_text(m.to_dict()))) == m


@settings(max_examples=100, deadline=None)
@given(manifests())
def test_json_round_trip(m):
    assert Manifest.from_dict(json.loads(dumps(m.to_dict()))) == m


@settings(max_examples=30, deadline=None)
@given(manifests())
def test_file_round_trip(tmp_path_factory, m):
    d = tmp_path_factory.mktemp("m")
    for name in ("m.json", "m.cfg"):
        write_manifest(m, d / name)
        back = read_manifest(d / name)
        assert back == m and back.hash() == m.hash()


def test_flatten_unflatten():
    d = {"grid": {"d": 1, "M": 64}, "seed": 3}
    assert flatten(d) == {"grid.d": 1, "grid.M": 64, "seed": 3}
    assert unflatten(flatten(d)) == d
    with pytest.raises(ManifestError, match="grid.M.x"):
        unflatten({"grid.M": 1, "grid.M.x": 2})


def test_flat_text_format():
    text = to_flat_text({"grid": {"M": 64, "L": 2.0}, "dist": {"kind": "gaussian"}})
    assert "grid.M = 64" in text and 'dist.kind = "gaussian"' in text
    assert from_flat_text("# c\n\ngrid.d = 2\nphi.kind = rough\n") == {"grid": {"d": 2}, "phi": {"kind": "rough"}}
    with pytest.raises(ManifestError, match="line 2"):
        from_flat_text("grid.d = 1\noops\n")


@pytest.mark.parametrize(
    "d, path",
    [
        ({"grid": {"Mx": 4}}, "grid.Mx"),
        ({"nonsense": {}}, "nonsense"),
        ({"schema": 99}, "schema"),
        ({"seed": -1}, "seed"),
        ({"grid": 5}, "grid"),
    ],
)
def test_errors_name_the_field(d, path):
    with pytest.raises(ManifestError, match=path):
        Manifest.from_dict(d)


def test_set_overrides_and_validates():
    m = Manifest()
    m.set("grid.M", 256)
    m.set("grid.M", None)  # absent flag leaves the field alone
    m.set("seed", 7)
    assert m.blocks["grid"]["M"] == 256 and m.seed == 7
    with pytest.raises(ManifestError, match="grid.bogus"):
        m.set("grid.bogus", 1)


def test_hash_stability():
    a = Manifest(blocks={"grid": {"d": 1, "M": 64}, "psi": {"transition_width": 0.25}}, seed=3)
    b = Manifest(blocks={"psi": {"transition_width": 0.25}, "grid": {"M": 64, "d": 1}}, seed=3)
    assert a.hash() == b.hash() and len(a.hash()) == 16
    b.set("seed", 4)
    assert a.hash() != b.hash()


def test_dumps_nonfinite_and_numpy():
    s = dumps({"a": np.float64("nan"), "b": np.arange(3), "c": np.bool_(True), "d": -np.inf})
    assert json.loads(s) == {"a": "nan", "b": [0, 1, 2], "c": True, "d": "-inf"}


def test_collector_self_describing_and_deterministic(tmp_path):
    m = Manifest(blocks={"grid": {"d": 1, "M": 64, "L": 2}}, seed=1)

    def write(d):
        c = Collector(d, m)
        c.csv("a.csv", ["x", "y"], [[1, 0.5], [2, True]])
        c.dat("a.dat", [1.0, 2.0], [3.0, 4.0], "lam", "p")
        c.json("r.json", {"v": np.float64(1.5)})
        c.text("sub/notes.txt", "hello\n")
        return c.flush()

    paths = write(tmp_path / "one")
    write(tmp_path / "two")
    assert not list((tmp_path / "one").glob("*.tmp"))
    for p in paths + [tmp_path / "one" / "manifest.json"]:
        other = tmp_path / "two" / p.relative_to(tmp_path / "one")
        assert p.read_bytes() == other.read_bytes()
    tag = f"schema={SCHEMA_VERSION} manifest={m.hash()}"
    for name in ("a.csv", "a.dat"):
        assert (tmp_path / "one" / name).read_text().splitlines()[0].endswith(tag)
    rec = json.loads((tmp_path / "one" / "r.json").read_text())
    assert rec["schema"] == SCHEMA_VERSION and rec["manifest_hash"] == m.hash() and rec["v"] == 1.5
    assert (tmp_path / "one" / "a.csv").read_text().splitlines()[2:] == ["1,0.5", "2,1"]
    assert read_manifest(tmp_path / "one" / "manifest.json") == m
