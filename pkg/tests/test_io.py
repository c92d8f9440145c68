import numpy as np
from numpy.testing import assert_allclose

from active_stokes.io import (content_hash, csv_body_of, read_csv, read_structured, to_builtin,
                              write_csv, write_metadata)


def test_to_builtin_and_hash():
    obj = {"a": np.float64(0.1), "b": np.arange(3), "c": (np.int32(2), np.bool_(True))}
    b = to_builtin(obj)
    assert b == {"a": 0.1, "b": [0, 1, 2], "c": [2, True]}
    assert type(b["a"]) is float
    assert content_hash(obj) == content_hash({"c": [2, True], "b": [0, 1, 2], "a": 0.1})
    assert content_hash(obj) != content_hash({**obj, "a": 0.2})


def test_csv_round_trip(tmp_path):
    rows = [[1, 0.1, "x"], [2, 1 / 3, "a,b"], [3, np.float64(1e-300), True]]
    sha = write_csv(tmp_path / "t.csv", ["n", "v", "s"], rows, header={"k": [1, 2]},
                    column_doc={"v": "value"})
    text = (tmp_path / "t.csv").read_bytes()
    assert b"\r" not in text
    t = read_csv(tmp_path / "t.csv")
    assert t.columns == ["n", "v", "s"]
    assert_allclose(t.column("v"), [0.1, 1 / 3, 1e-300], rtol=0)
    assert t.column("s", str) == ["x", "a,b", "1"]
    assert t.header[0] == "# k: [1, 2]" and "#   v: value" in t.header
    import hashlib
    assert hashlib.sha1(csv_body_of(tmp_path / "t.csv").encode()).hexdigest() == sha


def test_metadata_yaml(tmp_path):
    meta = {"z": 1, "a": {"x": np.float64(2.5)}, "list": np.array([1.0, 2.0])}
    write_metadata(tmp_path / "m.yaml", meta)
    assert read_structured(tmp_path / "m.yaml") == {"z": 1, "a": {"x": 2.5}, "list": [1.0, 2.0]}
    # keys keep insertion order
    assert (tmp_path / "m.yaml").read_text().splitlines()[0].startswith("z:")
    (tmp_path / "j.json").write_text('{"experiments": []}')
    assert read_structured(tmp_path / "j.json") == {"experiments": []}
