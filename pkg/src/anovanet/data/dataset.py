"""Normalised datasets: generation, CSV ingestion, splitting, snapshots."""

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from anovanet.data import constants as C
from anovanet.data.testfn import FUNCTIONS, resolve
from anovanet.errors import DegenerateColumn, ParseError, SchemaMismatch

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class TestFunctionSpec:
    kind: str
    n_samples: int = C.DEFAULT_SAMPLES
    a: float = C.ISHIGAMI_A
    b: float = C.ISHIGAMI_B
    sampling: str = "random"
    box: tuple | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "kind", resolve(self.kind))
        if self.n_samples < 10:
            raise ValueError("need at least 10 samples")
        if self.sampling not in ("random", "grid"):
            raise ValueError("sampling must be 'random' or 'grid'")

    @property
    def raw_box(self):
        return tuple(self.box) if self.box is not None else FUNCTIONS[self.kind][1]

    def evaluate(self, x_raw):
        fn = FUNCTIONS[self.kind][0]
        if self.kind == "ishigami":
            return fn(x_raw, self.a, self.b)
        return fn(x_raw)

    def to_dict(self):
        return {"kind": self.kind, "n_samples": self.n_samples, "a": self.a, "b": self.b,
                "sampling": self.sampling, "box": [list(iv) for iv in self.raw_box]}


@dataclass(frozen=True)
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    input_maps: tuple
    output_map: tuple
    provenance: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.X.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def part(self, which):
        """``(X, y)`` of one split, by name or label."""
        label = SPLIT_NAMES.index(which) if isinstance(which, str) else which
        sel = self.split == label
        return self.X[sel], self.y[sel]

    def split_sizes(self):
        return tuple(int(np.sum(self.split == s)) for s in (TRAIN, VAL, TEST))

    def normalize_x(self, x_raw):
        lo, hi = np.array(self.input_maps).T
        return (np.asarray(x_raw, dtype=np.float64) - lo) / (hi - lo)

    def denormalize_x(self, x):
        lo, hi = np.array(self.input_maps).T
        return lo + np.asarray(x, dtype=np.float64) * (hi - lo)

    def normalize_y(self, y_raw):
        lo, hi = self.output_map
        return (np.asarray(y_raw, dtype=np.float64) - lo) / (hi - lo)

    def denormalize_y(self, y):
        lo, hi = self.output_map
        return lo + np.asarray(y, dtype=np.float64) * (hi - lo)

    def normalization(self):
        return {"input_maps": [list(m) for m in self.input_maps],
                "output_map": list(self.output_map)}


def split(dataset, seed):
    """Seeded 60/20/20 assignment: floor train, floor val, remainder test."""
    n = dataset.n
    if n < 5:
        raise ValueError("need at least 5 rows to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(C.SPLIT_FRACTIONS[0] * n)
    n_val = math.floor(C.SPLIT_FRACTIONS[1] * n)
    labels = np.full(n, TEST, dtype=np.int8)
    labels[perm[:n_train]] = TRAIN
    labels[perm[n_train:n_train + n_val]] = VAL
    return replace(dataset, split=labels)


def _minmax(col, what):
    lo, hi = float(np.min(col)), float(np.max(col))
    if not hi > lo:
        raise DegenerateColumn(f"{what} has zero range")
    return lo, hi


def generate(spec, seed):
    """Sample a test function on its raw box and normalise to the unit cube."""
    box = np.array(spec.raw_box, dtype=np.float64)
    K = len(box)
    rng = np.random.default_rng(seed)
    if spec.sampling == "random":
        u = rng.uniform(size=(spec.n_samples, K))
    else:
        m = round(spec.n_samples ** (1.0 / K))
        if m ** K != spec.n_samples:
            raise ValueError(f"grid sampling needs a perfect {K}-th power of samples")
        ax = np.linspace(0.0, 1.0, m)
        u = np.stack(np.meshgrid(*([ax] * K), indexing="ij"), axis=-1).reshape(-1, K)
    x_raw = box[:, 0] + u * (box[:, 1] - box[:, 0])
    y_raw = spec.evaluate(x_raw)
    input_maps = tuple((float(lo), float(hi)) for lo, hi in box)
    output_map = _minmax(y_raw, "output")
    ds = Dataset(
        name=spec.kind,
        X=(x_raw - box[:, 0]) / (box[:, 1] - box[:, 0]),
        y=(y_raw - output_map[0]) / (output_map[1] - output_map[0]),
        split=np.zeros(spec.n_samples, dtype=np.int8),
        input_maps=input_maps,
        output_map=output_map,
        provenance={"generator": spec.to_dict(), "seed": int(seed)},
    )
    return split(ds, seed)


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _detect_delimiter(line):
    for d in (";", ",", "\t"):
        if d in line:
            return d
    return None


def _tokenize(line, delim):
    return [t.strip() for t in (line.split(delim) if delim else line.split())]


def ingest_csv(path, schema="generic", seed=0, name=None):
    """Read a numeric table (target last), normalise by observed min-max, split."""
    schema = schema.lower()
    if schema not in (*C.CSV_SCHEMAS, "generic"):
        raise SchemaMismatch(f"unknown schema {schema!r}")
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8-sig")
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty file")
    delim = _detect_delimiter(lines[0][1])
    first = _tokenize(lines[0][1], delim)
    if not all(_is_number(t) for t in first):
        header = first
        lines = lines[1:]
    else:
        header = None
    rows = []
    width = None
    for lineno, ln in lines:
        toks = _tokenize(ln, delim)
        if width is None:
            width = len(toks)
        if len(toks) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(toks)}",
                             row=lineno, col=len(toks))
        vals = []
        for j, t in enumerate(toks):
            try:
                vals.append(float(t))
            except ValueError:
                raise ParseError(f"{path}:{lineno}:{j + 1}: not a number: {t!r}",
                                 row=lineno, col=j + 1) from None
        rows.append(vals)
    data = np.array(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 2:
        raise SchemaMismatch(f"{path}: need at least one feature and a target column")
    K = data.shape[1] - 1
    if schema in C.CSV_SCHEMAS and K != C.CSV_SCHEMAS[schema]:
        raise SchemaMismatch(f"{path}: schema {schema} expects {C.CSV_SCHEMAS[schema]} "
                             f"features, file has {K}")
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite values present")
    x_raw, y_raw = data[:, :-1], data[:, -1]
    input_maps = tuple(_minmax(x_raw[:, j], f"column {j + 1}") for j in range(K))
    output_map = _minmax(y_raw, "target column")
    lo, hi = np.array(input_maps).T
    ds = Dataset(
        name=name or os.path.splitext(os.path.basename(path))[0],
        X=(x_raw - lo) / (hi - lo),
        y=(y_raw - output_map[0]) / (output_map[1] - output_map[0]),
        split=np.zeros(len(data), dtype=np.int8),
        input_maps=input_maps,
        output_map=output_map,
        provenance={"source": os.path.basename(path), "sha256": hashlib.sha256(raw).hexdigest(),
                    "schema": schema, "header": header, "seed": int(seed)},
    )
    return split(ds, seed)


def sidecar_path(csv_path):
    return os.path.splitext(csv_path)[0] + ".json"


def save_dataset(dataset, csv_path):
    """Write the normalised snapshot CSV plus its JSON metadata sidecar."""
    cols = [f"x{j + 1}" for j in range(dataset.K)] + ["y", "split"]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for xi, yi, si in zip(dataset.X, dataset.y, dataset.split):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi)), SPLIT_NAMES[si]])
    meta = {"format": "anovanet-dataset", "version": SNAPSHOT_VERSION, "name": dataset.name,
            "K": dataset.K, "n": dataset.n, "split_sizes": list(dataset.split_sizes()),
            **dataset.normalization(), "provenance": dataset.provenance}
    with open(sidecar_path(csv_path), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return meta


def load_dataset(csv_path):
    with open(sidecar_path(csv_path)) as fh:
        meta = json.load(fh)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    K = meta["K"]
    X = np.array([[float(v) for v in r[:K]] for r in rows], dtype=np.float64).reshape(-1, K)
    y = np.array([float(r[K]) for r in rows], dtype=np.float64)
    labels = np.array([SPLIT_NAMES.index(r[K + 1]) for r in rows], dtype=np.int8)
    return Dataset(meta["name"], X, y, labels,
                   tuple(tuple(m) for m in meta["input_maps"]),
                   tuple(meta["output_map"]), meta["provenance"])
