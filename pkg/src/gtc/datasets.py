"""Dataset io: manifest dialect, loaders, writers, and a synthetic generator.

A dataset is a directory with one manifest and one file per payload. The
manifest is UTF-8 ``key: value`` lines grouped under ``[type NAME]``,
``[relation NAME]`` and ``[metapath NAME]`` sections; ``target`` is the one
required top-level key. Features are CSV with one node per row; edges and
labels are two-column TSV. Every relation direction must be declared, either
with its own edge file or as ``reverse_of`` another relation; nothing is
symmetrized silently.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .graph import HeteroGraph, Metapath, Relation
from .sparse import SparseMatrix

_SECTION_KINDS = ("type", "relation", "metapath")


@dataclass
class Manifest:
    """Parsed manifest: raw key/value maps, nothing loaded yet."""

    path: str
    top: dict = field(default_factory=dict)
    types: dict = field(default_factory=dict)
    relations: dict = field(default_factory=dict)
    metapaths: dict = field(default_factory=dict)

    @property
    def directory(self) -> str:
        return os.path.dirname(os.path.abspath(self.path))


def parse_manifest(path) -> Manifest:
    m = Manifest(path=str(path))
    by_kind = {"type": m.types, "relation": m.relations, "metapath": m.metapaths}
    current = m.top
    where = "top level"
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise DataError(f"{path}: cannot read manifest: {e}") from e
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: manifest is not valid UTF-8: {e}") from e
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise DataError(f"{path}:{lineno}: unterminated section header {line!r}")
            fields = line[1:-1].split()
            if len(fields) != 2 or fields[0] not in _SECTION_KINDS:
                raise DataError(
                    f"{path}:{lineno}: section must be [type|relation|metapath NAME], got {line!r}"
                )
            kind, name = fields
            if name in by_kind[kind]:
                raise DataError(f"{path}:{lineno}: duplicate {kind} section {name!r}")
            current = by_kind[kind][name] = {}
            where = f"[{kind} {name}]"
            continue
        if ":" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
        key, _, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise DataError(f"{path}:{lineno}: empty key or value in {line!r}")
        if key in current:
            raise DataError(f"{path}:{lineno}: duplicate key {key!r} in {where}")
        current[key] = value
    return m


def _read_features(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError as e:
        raise DataError(f"{path}: cannot read features: {e}") from e
    except ValueError:
        # re-scan to name the offending line
        with open(path, encoding="utf-8") as f:
            width = None
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                fields = line.split(",")
                if width is None:
                    width = len(fields)
                if len(fields) != width:
                    raise DataError(
                        f"{path}:{lineno}: row has {len(fields)} values, expected {width}"
                    ) from None
                try:
                    np.array(fields, dtype=np.float64)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
        raise DataError(f"{path}: malformed features CSV") from None
    if arr.size == 0:
        raise DataError(f"{path}: features file is empty")
    if not np.isfinite(arr).all():
        row = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0]) + 1
        raise DataError(f"{path}:{row}: non-finite feature value")
    return arr


def _read_pairs(path, what: str) -> np.ndarray:
    """Two-column integer TSV -> (m, 2) int64 array; names file and line on error."""
    rows = []
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise DataError(
                        f"{path}:{lineno}: {what} row needs 2 tab-separated fields, "
                        f"got {len(fields)}"
                    )
                try:
                    rows.append((int(fields[0]), int(fields[1]), lineno))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-integer {what} value") from None
    except OSError as e:
        raise DataError(f"{path}: cannot read {what}: {e}") from e
    if not rows:
        return np.zeros((0, 3), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def _load_relation(name: str, section: dict, counts: dict, base: str,
                   loaded: dict, manifest_path: str) -> Relation:
    for key in ("src", "dst"):
        if key not in section:
            raise DataError(f"{manifest_path}: [relation {name}] is missing {key!r}")
        if section[key] not in counts:
            raise DataError(
                f"{manifest_path}: [relation {name}] {key} names unknown type {section[key]!r}"
            )
    src, dst = section["src"], section["dst"]
    n_src, n_dst = counts[src], counts[dst]
    if "reverse_of" in section:
        other = loaded.get(section["reverse_of"])
        if other is None:
            raise DataError(
                f"{manifest_path}: [relation {name}] reverse_of {section['reverse_of']!r} "
                "must name an earlier relation"
            )
        if (other.src, other.dst) != (dst, src):
            raise DataError(
                f"{manifest_path}: [relation {name}] endpoints do not mirror "
                f"{section['reverse_of']!r}"
            )
        return Relation(name=name, src=src, dst=dst, adj=other.adj.transpose())
    if "edges" not in section:
        raise DataError(f"{manifest_path}: [relation {name}] needs 'edges' or 'reverse_of'")
    path = os.path.join(base, section["edges"])
    triples = _read_pairs(path, "edge")
    for col, bound, side in ((0, n_src, src), (1, n_dst, dst)):
        vals = triples[:, col]
        bad = np.flatnonzero((vals < 0) | (vals >= bound))
        if len(bad):
            lineno = int(triples[bad[0], 2])
            raise DataError(
                f"{path}:{lineno}: node id {int(vals[bad[0]])} out of range for "
                f"type {side!r} with {bound} nodes"
            )
    adj = SparseMatrix.from_edges(triples[:, 0], triples[:, 1], (n_src, n_dst))
    return Relation(name=name, src=src, dst=dst, adj=adj)


def _load_labels(path, n_nodes: int) -> np.ndarray:
    triples = _read_pairs(path, "label")
    labels = np.full(n_nodes, -1, dtype=np.int64)
    for node, lab, lineno in triples:
        if not 0 <= node < n_nodes:
            raise DataError(f"{path}:{lineno}: node id {node} out of range for {n_nodes} nodes")
        if lab < 0:
            raise DataError(f"{path}:{lineno}: negative class id {lab}")
        if labels[node] != -1:
            raise DataError(f"{path}:{lineno}: node {node} labeled twice")
        labels[node] = lab
    return labels


def load_dataset(manifest_path):
    """Load a dataset directory: returns (HeteroGraph, target labels or None)."""
    m = parse_manifest(manifest_path)
    if "target" not in m.top:
        raise DataError(f"{manifest_path}: manifest has no 'target' key")
    target = m.top["target"]
    if target not in m.types:
        raise DataError(f"{manifest_path}: target type {target!r} has no [type] section")
    base = m.directory

    features = {}
    for t, section in m.types.items():
        if "features" not in section:
            raise DataError(f"{manifest_path}: [type {t}] is missing 'features'")
        feats = _read_features(os.path.join(base, section["features"]))
        if "count" in section and int(section["count"]) != feats.shape[0]:
            raise DataError(
                f"{manifest_path}: [type {t}] declares count {section['count']} but "
                f"features file has {feats.shape[0]} rows"
            )
        features[t] = feats
    counts = {t: x.shape[0] for t, x in features.items()}

    relations = {}
    for name, section in m.relations.items():
        relations[name] = _load_relation(name, section, counts, base, relations, str(manifest_path))

    metapaths = []
    for name, section in m.metapaths.items():
        if "steps" not in section:
            raise DataError(f"{manifest_path}: [metapath {name}] is missing 'steps'")
        metapaths.append(Metapath(name=name, steps=tuple(section["steps"].split())))

    try:
        graph = HeteroGraph(features, list(relations.values()), metapaths, target)
    except Exception as e:
        raise DataError(f"{manifest_path}: inconsistent dataset: {e}") from e

    labels = None
    if "labels" in m.types[target]:
        labels = _load_labels(os.path.join(base, m.types[target]["labels"]), counts[target])
    return graph, labels


def save_dataset(graph: HeteroGraph, out_dir, name: str = "dataset", labels=None) -> str:
    """Write a graph (and optional target labels) as a loadable dataset dir."""
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"name: {name}", f"target: {graph.target_type}"]
    for t in graph.node_types:
        feat_file = f"{t}_features.csv"
        np.savetxt(os.path.join(out_dir, feat_file), graph.features[t],
                   delimiter=",", fmt="%.17g")
        lines += ["", f"[type {t}]", f"features: {feat_file}", f"count: {graph.count(t)}"]
        if t == graph.target_type and labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            lab_file = f"{t}_labels.tsv"
            rows = np.flatnonzero(labels >= 0)
            np.savetxt(os.path.join(out_dir, lab_file),
                       np.column_stack([rows, labels[rows]]), delimiter="\t", fmt="%d")
            lines.append(f"labels: {lab_file}")
    for r in graph.relations.values():
        edge_file = f"{r.name}_edges.tsv"
        coo = r.adj.to_scipy().tocoo()
        order = np.lexsort((coo.col, coo.row))
        np.savetxt(os.path.join(out_dir, edge_file),
                   np.column_stack([coo.row[order], coo.col[order]]),
                   delimiter="\t", fmt="%d")
        lines += ["", f"[relation {r.name}]", f"src: {r.src}", f"dst: {r.dst}",
                  f"edges: {edge_file}"]
    for mp in graph.metapaths:
        lines += ["", f"[metapath {mp.name}]", f"steps: {' '.join(mp.steps)}"]
    manifest_path = os.path.join(out_dir, f"{name}.manifest")
    with open(manifest_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return manifest_path


# -- synthetic generator -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Block-structured heterogeneous graph with class-informative features.

    Target features are class-centered Gaussians: the class means sit at
    separation / sqrt(2) along distinct axes, so any two means are exactly
    ``separation`` apart. Auxiliary node types carry pure-noise features and
    connect to targets with probability ``p_in`` inside a latent class and
    ``p_out`` across classes; one target-aux-target metapath is declared per
    auxiliary type.
    """

    n_target: int = 300
    n_classes: int = 3
    d_feat: int = 32
    separation: float = 1.0
    noise_std: float = 0.5
    aux_sizes: tuple = (150, 150)
    d_aux: int = 16
    p_in: float = 0.2
    p_out: float = 0.02
    seed: int = 7

    def validate(self):
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_target < 2 * self.n_classes:
            raise ConfigError(f"{self.n_target} target nodes cannot cover "
                              f"{self.n_classes} classes twice")
        if self.d_feat < self.n_classes:
            raise ConfigError(f"feature dim {self.d_feat} < {self.n_classes} classes; "
                              "class means need distinct axes")
        if not self.aux_sizes:
            raise ConfigError("need at least one auxiliary type")
        if any(s < self.n_classes for s in self.aux_sizes):
            raise ConfigError("each auxiliary type needs at least one node per class")
        if not (0.0 <= self.p_out <= self.p_in <= 1.0):
            raise ConfigError(f"need 0 <= p_out <= p_in <= 1, got "
                              f"p_in={self.p_in}, p_out={self.p_out}")
        if self.noise_std < 0 or self.separation < 0:
            raise ConfigError("separation and noise_std must be non-negative")
        if self.d_aux < 1:
            raise ConfigError(f"auxiliary feature dim must be >= 1, got {self.d_aux}")


def _balanced_classes(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.permutation(np.arange(n, dtype=np.int64) % k)


def generate_synthetic(config: SyntheticConfig = SyntheticConfig()):
    """Deterministic synthetic dataset: returns (HeteroGraph, labels)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    k = config.n_classes
    y = _balanced_classes(rng, config.n_target, k)
    means = np.zeros((k, config.d_feat))
    means[np.arange(k), np.arange(k)] = config.separation / np.sqrt(2.0)
    x_target = means[y] + config.noise_std * rng.standard_normal((config.n_target, config.d_feat))

    features = {"target": x_target}
    relations = []
    metapaths = []
    for a, m in enumerate(config.aux_sizes):
        aux = f"aux{a}"
        features[aux] = rng.standard_normal((m, config.d_aux))
        c_aux = _balanced_classes(rng, m, k)
        prob = np.where(y[:, None] == c_aux[None, :], config.p_in, config.p_out)
        mask = rng.random((config.n_target, m)) < prob
        src, dst = np.nonzero(mask)
        fwd = SparseMatrix.from_edges(src, dst, (config.n_target, m))
        relations.append(Relation(name=f"t_{aux}", src="target", dst=aux, adj=fwd))
        relations.append(Relation(name=f"{aux}_t", src=aux, dst="target", adj=fwd.transpose()))
        metapaths.append(Metapath(name=f"via_{aux}", steps=(f"t_{aux}", f"{aux}_t")))
    graph = HeteroGraph(features, relations, metapaths, "target")
    return graph, y


# -- embedding export ----------------------------------------------------------


def export_embeddings(path, z: np.ndarray, format: str = "csv") -> None:
    """Write embeddings, node i on row i.

    ``csv`` prints full-precision decimal text (shortest round-trip repr);
    ``binary`` reuses the checkpoint layout with a single entry named "Z",
    which reloads bit-identically.
    """
    z = np.asarray(z)
    if z.ndim != 2:
        raise ValueError(f"embeddings must be 2-d, got shape {z.shape}")
    if format == "csv":
        np.savetxt(path, z.astype(np.float64), delimiter=",", fmt="%s")
    elif format == "binary":
        from .checkpoint import save_params

        save_params(path, {"Z": z})
    else:
        raise ValueError(f"format must be 'csv' or 'binary', got {format!r}")


def load_embeddings(path) -> np.ndarray:
    """Read back either export format (sniffed from the leading magic)."""
    from .checkpoint import MAGIC, load_params

    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
    if head == MAGIC:
        entries = load_params(path)
        if set(entries) != {"Z"}:
            raise DataError(f"{path}: expected a single embedding entry 'Z', "
                            f"found {sorted(entries)}")
        return entries["Z"]
    return _read_features(path)
