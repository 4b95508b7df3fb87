import os
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pytest

from gtc import ConfigError, DataError, SyntheticConfig, generate_synthetic
from gtc.datasets import (export_embeddings, load_dataset, load_embeddings,
                          parse_manifest, save_dataset)
from gtc.evaluation import SplitSpec, linear_probe_accuracy, make_split
from gtc.graph import compose_metapath_adjacency, mine_contrastive_sets

MINI = os.path.join(os.path.dirname(__file__), "data", "mini", "mini.manifest")


def write_dataset(tmp_path, manifest, files=None):
    for name, text in (files or {}).items():
        (tmp_path / name).write_text(text)
    path = tmp_path / "data.manifest"
    path.write_text(manifest)
    return path


# -- manifest parsing ---------------------------------------------------------------


def test_parse_mini_manifest():
    m = parse_manifest(MINI)
    assert m.top["target"] == "paper"
    assert set(m.types) == {"paper", "author"}
    assert m.types["paper"]["count"] == "6"
    assert set(m.relations) == {"p_a", "a_p"}
    assert m.relations["a_p"]["reverse_of"] == "p_a"
    assert m.metapaths["pap"]["steps"] == "p_a a_p"
    assert m.directory == os.path.dirname(MINI)


@pytest.mark.parametrize("line, fragment", [
    ("[group x]", "section must be"),
    ("[type paper", "unterminated"),
    ("just some words", "expected 'key: value'"),
    ("key:", "empty key or value"),
    ("[type a b]", "section must be"),
])
def test_manifest_rejects_malformed_lines(tmp_path, line, fragment):
    path = write_dataset(tmp_path, f"target: t\n{line}\n")
    with pytest.raises(DataError, match=fragment) as err:
        parse_manifest(path)
    assert ":2:" in str(err.value)  # file:line prefix


def test_manifest_rejects_duplicates(tmp_path):
    path = write_dataset(tmp_path, "target: t\ntarget: u\n")
    with pytest.raises(DataError, match="duplicate key"):
        parse_manifest(path)
    path = write_dataset(tmp_path, "[type a]\nfeatures: x\n[type a]\n")
    with pytest.raises(DataError, match="duplicate type section"):
        parse_manifest(path)


def test_manifest_missing_file_named(tmp_path):
    with pytest.raises(DataError, match="cannot read manifest"):
        parse_manifest(tmp_path / "absent.manifest")


# -- dataset loading ----------------------------------------------------------------


def test_load_mini_dataset():
    graph, labels = load_dataset(MINI)
    assert graph.target_type == "paper"
    assert graph.count("paper") == 6 and graph.count("author") == 3
    assert graph.features["paper"].shape == (6, 2)
    pa = graph.relations["p_a"].adj.to_dense()
    expect = np.zeros((6, 3))
    for p, a in [(0, 0), (0, 1), (1, 0), (2, 1), (3, 1), (4, 2), (5, 2)]:
        expect[p, a] = 1.0
    npt.assert_array_equal(pa, expect)
    # reverse relation materialized as the exact transpose
    npt.assert_array_equal(graph.relations["a_p"].adj.to_dense(), expect.T)
    npt.assert_array_equal(labels, [0, 0, 1, 1, 0, -1])
    pap = compose_metapath_adjacency(graph, graph.metapath("pap")).to_dense()
    assert pap[0, 1] == 1.0 and pap[2, 3] == 1.0 and pap[0, 4] == 0.0


MINIMAL_ONE_TYPE = """target: t

[type t]
features: t.csv
"""


def test_load_errors_name_location(tmp_path):
    # dangling edge endpoint carries file and line of the bad row
    manifest = MINIMAL_ONE_TYPE + "\n[relation r]\nsrc: t\ndst: t\nedges: e.tsv\n"
    path = write_dataset(tmp_path, manifest,
                         {"t.csv": "1.0\n2.0\n", "e.tsv": "0\t1\n1\t5\n"})
    with pytest.raises(DataError, match=r"e\.tsv:2: node id 5 out of range"):
        load_dataset(path)


def test_load_rejects_missing_pieces(tmp_path):
    with pytest.raises(DataError, match="no 'target'"):
        load_dataset(write_dataset(tmp_path, "name: x\n"))
    with pytest.raises(DataError, match="has no \\[type\\] section"):
        load_dataset(write_dataset(tmp_path, "target: ghost\n"))
    with pytest.raises(DataError, match="missing 'features'"):
        load_dataset(write_dataset(tmp_path, "target: t\n\n[type t]\ncount: 3\n"))


def test_load_count_mismatch(tmp_path):
    manifest = "target: t\n\n[type t]\nfeatures: t.csv\ncount: 5\n"
    path = write_dataset(tmp_path, manifest, {"t.csv": "1.0\n2.0\n"})
    with pytest.raises(DataError, match="declares count 5 but"):
        load_dataset(path)


def test_load_relation_validation(tmp_path):
    base = MINIMAL_ONE_TYPE
    path = write_dataset(tmp_path, base + "\n[relation r]\nsrc: ghost\ndst: t\nedges: e.tsv\n",
                         {"t.csv": "1.0\n", "e.tsv": ""})
    with pytest.raises(DataError, match="unknown type 'ghost'"):
        load_dataset(path)
    path = write_dataset(tmp_path, base + "\n[relation r]\nsrc: t\ndst: t\n",
                         {"t.csv": "1.0\n"})
    with pytest.raises(DataError, match="needs 'edges' or 'reverse_of'"):
        load_dataset(path)
    path = write_dataset(tmp_path, base + "\n[relation r]\nsrc: t\ndst: t\nreverse_of: later\n",
                         {"t.csv": "1.0\n"})
    with pytest.raises(DataError, match="must name an earlier relation"):
        load_dataset(path)


def test_reverse_of_endpoint_mirror_check(tmp_path):
    manifest = """target: t

[type t]
features: t.csv

[type u]
features: u.csv

[relation fwd]
src: t
dst: u
edges: e.tsv

[relation bad]
src: t
dst: u
reverse_of: fwd
"""
    path = write_dataset(tmp_path, manifest,
                         {"t.csv": "1.0\n2.0\n", "u.csv": "3.0\n", "e.tsv": "0\t0\n"})
    with pytest.raises(DataError, match="do not mirror"):
        load_dataset(path)


def test_feature_file_errors_carry_line(tmp_path):
    path = write_dataset(tmp_path, MINIMAL_ONE_TYPE, {"t.csv": "1.0,2.0\n3.0\n"})
    with pytest.raises(DataError, match=r"t\.csv:2: row has 1 values, expected 2"):
        load_dataset(path)
    path = write_dataset(tmp_path, MINIMAL_ONE_TYPE, {"t.csv": "1.0\npotato\n"})
    with pytest.raises(DataError, match=r"t\.csv:2: non-numeric"):
        load_dataset(path)
    path = write_dataset(tmp_path, MINIMAL_ONE_TYPE, {"t.csv": "1.0\nnan\n"})
    with pytest.raises(DataError, match=r"t\.csv:2: non-finite"):
        load_dataset(path)


def test_label_file_validation(tmp_path):
    manifest = "target: t\n\n[type t]\nfeatures: t.csv\nlabels: y.tsv\n"
    files = {"t.csv": "1.0\n2.0\n"}
    path = write_dataset(tmp_path, manifest, {**files, "y.tsv": "0\t0\n5\t1\n"})
    with pytest.raises(DataError, match=r"y\.tsv:2: node id 5 out of range"):
        load_dataset(path)
    path = write_dataset(tmp_path, manifest, {**files, "y.tsv": "0\t-2\n"})
    with pytest.raises(DataError, match="negative class"):
        load_dataset(path)
    path = write_dataset(tmp_path, manifest, {**files, "y.tsv": "0\t0\n0\t1\n"})
    with pytest.raises(DataError, match="labeled twice"):
        load_dataset(path)
    path = write_dataset(tmp_path, manifest, {**files, "y.tsv": "0\t0\t0\n"})
    with pytest.raises(DataError, match="2 tab-separated fields"):
        load_dataset(path)


def test_edge_file_comments_and_blanks_skipped(tmp_path):
    manifest = MINIMAL_ONE_TYPE + "\n[relation r]\nsrc: t\ndst: t\nedges: e.tsv\n"
    path = write_dataset(tmp_path, manifest,
                         {"t.csv": "1.0\n2.0\n", "e.tsv": "# header\n\n0\t1\n"})
    graph, _ = load_dataset(path)
    assert graph.relations["r"].adj.nnz == 1


# -- save / load round trip ------------------------------------------------------------


def test_save_load_roundtrip(small_synth, tmp_path):
    graph, labels = small_synth
    manifest = save_dataset(graph, tmp_path / "out", name="resaved", labels=labels)
    g2, y2 = load_dataset(manifest)
    assert set(g2.node_types) == set(graph.node_types)
    npt.assert_array_equal(y2, labels)
    for t in graph.node_types:
        npt.assert_allclose(g2.features[t], graph.features[t], rtol=0, atol=0)
    for name, rel in graph.relations.items():
        npt.assert_array_equal(g2.relations[name].adj.to_dense(), rel.adj.to_dense())
    assert {m.name for m in g2.metapaths} == {m.name for m in graph.metapaths}


# -- synthetic generator ----------------------------------------------------------------


def test_synthetic_deterministic():
    a_graph, a_y = generate_synthetic(SyntheticConfig())
    b_graph, b_y = generate_synthetic(SyntheticConfig())
    npt.assert_array_equal(a_y, b_y)
    for t in a_graph.node_types:
        npt.assert_array_equal(a_graph.features[t], b_graph.features[t])
    for name, rel in a_graph.relations.items():
        npt.assert_array_equal(rel.adj.indices, b_graph.relations[name].adj.indices)
        npt.assert_array_equal(rel.adj.indptr, b_graph.relations[name].adj.indptr)


def test_synthetic_default_shape():
    graph, y = generate_synthetic(SyntheticConfig())
    assert graph.n_target == 300
    assert graph.count("aux0") == graph.count("aux1") == 150
    assert graph.features["target"].shape == (300, 32)
    npt.assert_array_equal(np.bincount(y), [100, 100, 100])
    assert {m.name for m in graph.metapaths} == {"via_aux0", "via_aux1"}


def test_synthetic_class_mean_distance_matches_separation():
    config = SyntheticConfig()
    graph, y = generate_synthetic(config)
    x = graph.features["target"]
    means = np.stack([x[y == c].mean(axis=0) for c in range(config.n_classes)])
    for i in range(3):
        for j in range(i + 1, 3):
            dist = np.linalg.norm(means[i] - means[j])
            assert abs(dist - config.separation) < 0.15


def test_synthetic_pure_within_class_edges():
    config = SyntheticConfig(n_target=90, aux_sizes=(45,), p_in=0.3, p_out=0.0, seed=1)
    graph, y = generate_synthetic(config)
    sets = mine_contrastive_sets(graph, theta_pos=1)
    for i, pos in enumerate(sets.positives):
        assert all(p == i or y[p] == y[i] for p in pos)


def test_synthetic_equal_probs_carry_no_degree_signal():
    config = SyntheticConfig(n_target=150, aux_sizes=(75,), p_in=0.1, p_out=0.1,
                             seed=2)
    graph, y = generate_synthetic(config)
    adj = compose_metapath_adjacency(graph, graph.metapath("via_aux0"), "counts")
    degree = adj.to_dense().sum(axis=1, keepdims=True)
    split = make_split(y, SplitSpec(n_labels_per_class=15, seed=0))
    acc = linear_probe_accuracy(degree, y, split, part="test")
    assert abs(acc - 1.0 / 3.0) < 0.18


def test_synthetic_config_validation():
    with pytest.raises(ConfigError):
        SyntheticConfig(n_classes=1).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(n_target=4, n_classes=3).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(d_feat=2, n_classes=3).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(aux_sizes=()).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(p_in=0.1, p_out=0.5).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(noise_std=-1.0).validate()


# -- embedding export --------------------------------------------------------------------


def test_export_csv_exact_line(tmp_path):
    path = tmp_path / "z.csv"
    export_embeddings(path, np.array([[1.5, -2.0]]))
    assert path.read_text().strip() == "1.5,-2.0"


def test_export_csv_full_precision_roundtrip(tmp_path, rng):
    z = rng.standard_normal((7, 3))
    path = tmp_path / "z.csv"
    export_embeddings(path, z)
    npt.assert_array_equal(load_embeddings(path), z)


def test_export_binary_bit_identical(tmp_path, rng):
    z = rng.standard_normal((100, 64))
    path = tmp_path / "z.gtck"
    export_embeddings(path, z, format="binary")
    back = load_embeddings(path)
    assert back.tobytes() == z.tobytes()


def test_export_row_count(tmp_path, rng):
    path = tmp_path / "z.csv"
    export_embeddings(path, rng.standard_normal((100, 64)))
    assert len(path.read_text().strip().splitlines()) == 100


def test_export_validates(tmp_path, rng):
    with pytest.raises(ValueError, match="2-d"):
        export_embeddings(tmp_path / "z.csv", np.zeros(4))
    with pytest.raises(ValueError, match="format"):
        export_embeddings(tmp_path / "z.x", np.zeros((2, 2)), format="parquet")


def test_load_embeddings_rejects_multi_entry_checkpoint(tmp_path, rng):
    from gtc.checkpoint import save_params

    path = tmp_path / "many.gtck"
    save_params(path, {"A": np.zeros((2, 2)), "B": np.ones((2, 2))})
    with pytest.raises(DataError, match="single embedding entry"):
        load_embeddings(path)
