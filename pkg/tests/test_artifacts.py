from __future__ import annotations

import numpy as np
import pytest

from qexec import artifacts as A


def test_render_and_read_table(tmp_path):
    p = tmp_path / "t.csv"
    A.write_text(p, A.render_table(["a", "b"], [("x", 0.1), ("y", np.float64(2.0))], {"seed": 3, "k": "v"}))
    assert p.read_text().splitlines()[:3] == ["# k=v", "# seed=3", "a,b"]
    meta, head, rows = A.read_table(p)
    assert meta == {"k": "v", "seed": "3"} and head == ["a", "b"]
    assert rows == [["x", "0.1"], ["y", "2.0"]]
    assert not (tmp_path / "t.csv.tmp").exists()


def test_float_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(4, 3)) * 10.0 ** rng.integers(-20, 20, size=(4, 3))
    A.write_feature_table(tmp_path / "f.csv", list("abcd"), ["x", "y", "z"], rows, {"h": "1"})
    t = A.read_feature_table(tmp_path / "f.csv")
    assert t.ids == list("abcd") and t.names == ["x", "y", "z"] and t.meta == {"h": "1"}
    np.testing.assert_array_equal(t.rows, rows)
    np.testing.assert_array_equal(t.row("c"), rows[2])


def test_feature_table_errors(tmp_path):
    with pytest.raises(A.ArtifactError):
        A.read_table(tmp_path / "missing.csv")
    (tmp_path / "bad.csv").write_text("id,x\na,1\n")
    with pytest.raises(A.ArtifactError):
        A.read_feature_table(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("circuit_id,x\na,notanumber\n")
    with pytest.raises(A.ArtifactError):
        A.read_feature_table(tmp_path / "bad2.csv")


def test_graph_table_round_trip_and_bytes(tmp_path):
    rng = np.random.default_rng(1)
    graphs = {"b@x": (rng.normal(size=(3, 5)), np.array([[0, 1], [1, 2]])),
              "a@x": (rng.normal(size=(1, 5)), np.zeros((0, 2), dtype=np.int64))}
    A.write_graph_table(tmp_path / "g1.csv", graphs, {"corpus_hash": "abc"})
    A.write_graph_table(tmp_path / "g2.csv", dict(reversed(list(graphs.items()))), {"corpus_hash": "abc"})
    assert (tmp_path / "g1.csv").read_bytes() == (tmp_path / "g2.csv").read_bytes()
    text = (tmp_path / "g1.csv").read_text(encoding="utf-8")
    assert text.splitlines()[:2] == ["# corpus_hash=abc", "sample_id,kind,values"]
    meta, back = A.read_graph_table(tmp_path / "g1.csv")
    assert meta == {"corpus_hash": "abc"} and list(back) == ["a@x", "b@x"]
    for k, (nodes, edges) in graphs.items():
        np.testing.assert_array_equal(back[k][0], nodes)
        np.testing.assert_array_equal(back[k][1], edges)
        assert back[k][1].shape == (len(edges), 2) and back[k][1].dtype == np.int64


def test_graph_table_rejects_unknown_rows(tmp_path):
    (tmp_path / "g.csv").write_text("sample_id,kind,values\na,vertex,1\n")
    with pytest.raises(A.ArtifactError):
        A.read_graph_table(tmp_path / "g.csv")


def test_tree_digest_ignores_location_not_content(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    for d in ("a", "b"):
        (tmp_path / d / "x.qasm").write_text("qreg q[1];\n")
        (tmp_path / d / "y.qasm").write_text("qreg q[2];\n")
    da = A.tree_digest(sorted((tmp_path / "a").iterdir()))
    assert da == A.tree_digest(reversed(sorted((tmp_path / "b").iterdir())))
    (tmp_path / "b" / "y.qasm").write_text("qreg q[3];\n")
    assert da != A.tree_digest((tmp_path / "b").iterdir())


def test_config_hash_is_key_order_free():
    assert A.config_hash({"a": 1, "b": [1, 2]}) == A.config_hash({"b": [1, 2], "a": 1})
    assert A.config_hash({"a": 1}) != A.config_hash({"a": 2})


def test_check_fresh():
    A.check_fresh({"h": "1", "other": "z"}, {"h": "1"}, "x", "fix")
    with pytest.raises(A.StaleArtifactError, match="h changed"):
        A.check_fresh({"h": "1"}, {"h": "2"}, "x", "fix")
    with pytest.raises(A.StaleArtifactError):
        A.check_fresh({}, {"h": "2"}, "x", "fix")


def test_lock(tmp_path):
    with A.ArtifactLock(tmp_path):
        assert (tmp_path / ".lock").exists()
        with pytest.raises(A.LockHeld):
            with A.ArtifactLock(tmp_path):
                pass
    assert not (tmp_path / ".lock").exists()
    with pytest.raises(RuntimeError):
        with A.ArtifactLock(tmp_path):
            raise RuntimeError("boom")
    assert not (tmp_path / ".lock").exists()
