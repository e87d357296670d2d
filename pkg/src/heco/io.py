"""Dataset bundles, synthetic graphs, embeddings and checkpoints on disk.

Bundle layout (one directory)::

    schema.json            types, target, relations, meta-paths
    nodes_<type>.tsv       id [label]            (label column for the target type)
    features_<type>.tsv    id f_0 ... f_k        (absent for one-hot types)
    edges_<relation>.tsv   src dst
    splits_<L>.json        {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import LoadError
from .evaluation import Split, make_split
from .hin import HeteroGraph, MetaPath, Relation, validate_graph

SPLIT_SIZES = (20, 40, 60)


@dataclass
class Dataset:
    name: str
    graph: HeteroGraph
    splits: dict[int, Split] = field(default_factory=dict)


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_tsv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise LoadError(f"missing file {path.name}")
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise LoadError(f"{path.name}: empty file")
    header = lines[0].split("\t")
    rows = []
    for k, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise LoadError(f"{path.name}:{k}: expected {len(header)} columns, got {len(cells)}")
        rows.append(cells)
    return header, rows


def _parse(path: Path, line: int, cast, value: str):
    try:
        return cast(value)
    except ValueError:
        raise LoadError(f"{path.name}:{line}: cannot parse {value!r}") from None


def load_dataset(path, l2_normalize: bool = False) -> Dataset:
    root = Path(path)
    schema_path = root / "schema.json"
    if not schema_path.exists():
        raise LoadError(f"{root}: missing schema.json")
    try:
        schema = json.loads(schema_path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"schema.json:{exc.lineno}: {exc.msg}") from None

    types = list(schema["types"])
    target = schema["target"]
    num_nodes, features, kinds = {}, {}, {}
    labels = None
    for t in types:
        p = root / f"nodes_{t}.tsv"
        header, rows = _read_tsv(p)
        ids = [_parse(p, k + 2, int, r[0]) for k, r in enumerate(rows)]
        if ids != list(range(len(ids))):
            raise LoadError(f"{p.name}: ids must be dense 0..n-1 in order")
        num_nodes[t] = len(ids)
        if t == target and "label" in header:
            col = header.index("label")
            labels = np.array([_parse(p, k + 2, int, r[col]) for k, r in enumerate(rows)], dtype=np.int64)
        kind = schema["types"][t].get("features", "dense")
        kinds[t] = kind
        if kind == "onehot":
            features[t] = sp.identity(len(ids), format="csr")
            continue
        fp = root / f"features_{t}.tsv"
        _, frows = _read_tsv(fp)
        if len(frows) != len(ids):
            raise LoadError(f"{fp.name}: {len(frows)} rows for {len(ids)} nodes")
        mat = []
        for k, r in enumerate(frows):
            if _parse(fp, k + 2, int, r[0]) != k:
                raise LoadError(f"{fp.name}:{k + 2}: id out of order")
            mat.append([_parse(fp, k + 2, float, v) for v in r[1:]])
        x = np.array(mat, dtype=np.float64)
        if l2_normalize:
            norm = np.linalg.norm(x, axis=1, keepdims=True)
            x = x / np.where(norm > 0, norm, 1.0)
        features[t] = x

    relations = {}
    for spec in schema["relations"]:
        name = spec["name"]
        for end in ("src", "dst"):
            if spec[end] not in types:
                raise LoadError(f"relation {name!r} uses undeclared type {spec[end]!r}")
        ep = root / f"edges_{name}.tsv"
        if not ep.exists():
            raise LoadError(f"missing edges file for relation {name!r} ({ep.name})")
        _, rows = _read_tsv(ep)
        edges = np.array(
            [[_parse(ep, k + 2, int, r[0]), _parse(ep, k + 2, int, r[1])] for k, r in enumerate(rows)],
            dtype=np.int64,
        ).reshape(-1, 2)
        relations[name] = Relation(name, spec["src"], spec["dst"], edges)

    metapaths = []
    for mp in schema.get("metapaths", []):
        for step in mp["relations"]:
            if step.lstrip("~") not in relations:
                raise LoadError(f"meta-path {mp['name']!r} uses undeclared relation {step!r}")
        metapaths.append(MetaPath(mp["name"], tuple(mp["relations"])))

    g = HeteroGraph(types, target, num_nodes, features, relations, metapaths, labels, kinds)
    validate_graph(g)

    splits = {}
    for p in sorted(root.glob("splits_*.json")):
        per_class = int(p.stem.split("_")[1])
        d = json.loads(p.read_text())
        s = Split(*(np.array(d[k], dtype=np.int64) for k in ("train", "val", "test")), per_class=per_class)
        for part in (s.train, s.val, s.test):
            if part.size and (part.min() < 0 or part.max() >= g.num_targets):
                raise LoadError(f"{p.name}: node id out of range")
        splits[per_class] = s
    return Dataset(schema.get("name", root.name), g, splits)


def save_dataset(ds: Dataset, path) -> Path:
    """Write a bundle; output bytes depend only on the dataset contents."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    g = ds.graph
    schema = {
        "name": ds.name,
        "target": g.target,
        "types": {t: {"features": g.feature_kinds.get(t, "dense")} for t in g.node_types},
        "relations": [{"name": r.name, "src": r.src, "dst": r.dst} for r in g.relations.values()],
        "metapaths": [{"name": p.name, "relations": list(p.steps)} for p in g.metapaths],
    }
    (root / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    for t in g.node_types:
        lines = []
        if t == g.target and g.labels is not None:
            lines.append("id\tlabel")
            lines += [f"{i}\t{int(c)}" for i, c in enumerate(g.labels)]
        else:
            lines.append("id")
            lines += [str(i) for i in range(g.num_nodes[t])]
        (root / f"nodes_{t}.tsv").write_text("\n".join(lines) + "\n")
        if g.feature_kinds.get(t, "dense") == "onehot":
            continue
        x = np.asarray(g.features[t])
        header = "\t".join(["id"] + [f"f_{k}" for k in range(x.shape[1])])
        flines = [header] + [f"{i}\t" + "\t".join(_fmt(v) for v in row) for i, row in enumerate(x)]
        (root / f"features_{t}.tsv").write_text("\n".join(flines) + "\n")
    for r in g.relations.values():
        elines = ["src\tdst"] + [f"{a}\t{b}" for a, b in r.edges]
        (root / f"edges_{r.name}.tsv").write_text("\n".join(elines) + "\n")
    for per_class, s in sorted(ds.splits.items()):
        d = {k: np.asarray(getattr(s, k)).tolist() for k in ("train", "val", "test")}
        (root / f"splits_{per_class}.json").write_text(json.dumps(d) + "\n")
    return root


# -- synthetic planted-partition graphs ----------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Planted-partition HIN: every node carries a latent class, and target-to-
    auxiliary edges appear with probability ``p_in`` inside a class and
    ``p_out`` across classes."""

    n_classes: int = 3
    targets_per_class: int = 100
    aux_types: dict[str, int] = field(default_factory=lambda: {"author": 300, "subject": 150})
    p_in: dict[str, float] | float = 0.05
    p_out: dict[str, float] | float = 0.005
    feature_dim: int = 32
    feature_signal: float = 0.3
    feature_noise: float = 1.0
    target: str = "paper"

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        for t in self.aux_types:
            for p in (self.prob_in(t), self.prob_out(t)):
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"edge probability {p} for {t} outside [0, 1]")

    def prob_in(self, t: str) -> float:
        return self.p_in[t] if isinstance(self.p_in, dict) else self.p_in

    def prob_out(self, t: str) -> float:
        return self.p_out[t] if isinstance(self.p_out, dict) else self.p_out


def generate_synthetic_hin(spec: SynthSpec, seed: int) -> Dataset:
    rng = np.random.default_rng([seed, 1000])
    C, n_t = spec.n_classes, spec.n_classes * spec.targets_per_class
    labels = np.repeat(np.arange(C), spec.targets_per_class)
    means = spec.feature_signal * rng.standard_normal((C, spec.feature_dim))
    feats = means[labels] + spec.feature_noise * rng.standard_normal((n_t, spec.feature_dim))
    target = spec.target
    types = [target] + list(spec.aux_types)
    num_nodes = {target: n_t, **spec.aux_types}
    features = {target: feats}
    kinds = {target: "dense"}
    relations = {}
    metapaths = []
    for t, count in spec.aux_types.items():
        aux_class = np.arange(count) % C
        same = labels[:, None] == aux_class[None, :]
        prob = np.where(same, spec.prob_in(t), spec.prob_out(t))
        src, dst = np.nonzero(rng.random((n_t, count)) < prob)
        name = f"{target[0]}{t[0]}"
        relations[name] = Relation(name, target, t, np.stack([src, dst], axis=1).astype(np.int64))
        features[t] = sp.identity(count, format="csr")
        kinds[t] = "onehot"
        abbrev = (target[0] + t[0] + target[0]).upper()
        metapaths.append(MetaPath(abbrev, (name, "~" + name)))
    g = HeteroGraph(types, target, num_nodes, features, relations, metapaths, labels, kinds)
    validate_graph(g)
    split_rng = np.random.default_rng([seed, 1001])
    splits = {}
    for L in SPLIT_SIZES:
        if L <= spec.targets_per_class - 2:
            splits[L] = make_split(labels, L, split_rng)
    return Dataset("synthetic", g, splits)


# -- embeddings --------------------------------------------------------------


def export_embeddings(z: np.ndarray, path, variant: str, seed: int) -> Path:
    """TSV with a metadata header, then one row per target node: id and d values."""
    z = np.asarray(z)
    lines = [f"# variant={variant}\tseed={seed}\td={z.shape[1]}"]
    lines += [f"{i}\t" + "\t".join(f"{v:.9g}" for v in row) for i, row in enumerate(z)]
    p = Path(path)
    p.write_text("\n".join(lines) + "\n")
    return p


def load_embeddings(path) -> tuple[np.ndarray, dict[str, str]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise LoadError(f"{path}: missing metadata header")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].strip().split("\t"))
    rows = []
    for k, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if int(cells[0]) != k - 2:
            raise LoadError(f"{path}:{k}: id out of order")
        rows.append([float(v) for v in cells[1:]])
    z = np.array(rows, dtype=np.float64)
    if z.shape[1] != int(meta["d"]):
        raise LoadError(f"{path}: header says d={meta['d']}, rows have {z.shape[1]}")
    return z, meta


# -- checkpoints -------------------------------------------------------------

_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(
    params: dict[str, np.ndarray], config: dict, digest: str, path, data: dict | None = None
) -> Path:
    """Zip of ``.npy`` arrays plus ``meta.json``; fixed timestamps keep it byte-stable.

    ``data`` records how the training graph was loaded (bundle path, normalisation).
    """
    p = Path(path)
    meta = {"config": config, "config_hash": digest, "data": data or {},
            "shapes": {k: list(np.shape(v)) for k, v in params.items()}}
    with zipfile.ZipFile(p, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_TIME), json.dumps(meta, sort_keys=True))
        for name, arr in params.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", _ZIP_TIME), buf.getvalue())
    return p


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(Path(path)) as zf:
        meta = json.loads(zf.read("meta.json"))
        params = {}
        for name in meta["shapes"]:
            params[name] = np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
    for name, shape in meta["shapes"].items():
        if list(params[name].shape) != shape:
            raise LoadError(f"checkpoint tensor {name} has shape {params[name].shape}, expected {shape}")
    return params, meta


# -- logs --------------------------------------------------------------------


def write_csv(path, columns, rows) -> Path:
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c, "") for c in columns]
            w.writerow([_cell(v) for v in row])
    return p


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def toy_acm_path() -> Path:
    """Bundled four-paper ACM-style example."""
    return Path(__file__).parent / "data" / "toy_acm"
