"""Text dataset formats, split files and the ``MLSG`` binary matrix container.

Container layout (little-endian)::

    b"MLSG"  u32 version  u64 n  u64 d  payload

Versions 1 and 2 are dense row-major float64 / int64 payloads. Versions 3
and 4 are sparse: ``u64 nnz`` followed by ``nnz`` int64 rows, ``nnz`` int64
columns and ``nnz`` float64 / int64 values.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import BoundsError, DataError, IntegrityError, LabelError, ParseError
from .graph import UNLABELED, LabeledDataset, SparseGraph

MAGIC = b"MLSG"
DENSE_F64, DENSE_I64, SPARSE_F64, SPARSE_I64 = 1, 2, 3, 4
_HEADER = struct.Struct("<4sIQQ")


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line_no, line


def read_features(path):
    """Dense CSV rows, or ``sparse n d`` followed by ``i j v`` triplets."""
    lines = list(_data_lines(path))
    if not lines:
        raise ParseError(path, 1, "empty feature file")
    first_no, first = lines[0]
    head = first.split()
    if head[0] == "sparse":
        if len(head) != 3:
            raise ParseError(path, first_no, "expected header 'sparse n d'")
        try:
            n, d = int(head[1]), int(head[2])
        except ValueError:
            raise ParseError(path, first_no, "bad sparse header") from None
        rows, cols, vals = [], [], []
        for line_no, line in lines[1:]:
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(path, line_no, "expected 'i j v'")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"cannot parse {line!r}") from None
            if not (0 <= i < n and 0 <= j < d):
                raise BoundsError(f"{path}:{line_no}: index ({i}, {j}) outside {n}x{d}")
            if not np.isfinite(v):
                raise ParseError(path, line_no, "non-finite feature value")
            rows.append(i)
            cols.append(j)
            vals.append(v)
        x = sp.csr_matrix((vals, (rows, cols)), shape=(n, d), dtype=np.float64)
        x.sum_duplicates()
        x.sort_indices()
        return x
    data = []
    for line_no, line in lines:
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise ParseError(path, line_no, f"cannot parse {line[:40]!r}") from None
        if data and len(row) != len(data[0]):
            raise ParseError(path, line_no, f"expected {len(data[0])} columns, got {len(row)}")
        if not all(np.isfinite(row)):
            raise ParseError(path, line_no, "non-finite feature value")
        data.append(row)
    return np.array(data, dtype=np.float64)


def read_edges(path, n):
    edges = []
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(path, line_no, "expected 'src dst'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, line_no, f"cannot parse {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise BoundsError(f"{path}:{line_no}: node id outside [0, {n})")
        edges.append((u, v))
    return SparseGraph.from_edges(n, edges)


def read_labels(path, n, n_classes=None):
    labels = np.full(n, UNLABELED, dtype=np.int64)
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(path, line_no, "expected 'node_id class_id'")
        try:
            node, cls = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, line_no, f"cannot parse {line!r}") from None
        if not 0 <= node < n:
            raise BoundsError(f"{path}:{line_no}: node id {node} outside [0, {n})")
        if cls < 0 or (n_classes is not None and cls >= n_classes):
            raise LabelError(f"{path}:{line_no}: class id {cls} outside [0, {n_classes})")
        labels[node] = cls
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if (labels >= 0).any() else 0
    counts = np.bincount(labels[labels >= 0], minlength=n_classes)
    if n_classes and (counts == 0).any():
        raise LabelError(f"classes without labeled nodes: {np.flatnonzero(counts == 0).tolist()}")
    return labels, n_classes


def load_dataset(feature_path, edge_path, label_path, n_classes=None, name=None):
    features = read_features(feature_path)
    n = features.shape[0]
    topology = read_edges(edge_path, n)
    labels, n_classes = read_labels(label_path, n, n_classes)
    return LabeledDataset(
        features=features,
        topology=topology,
        labels=labels,
        n_classes=n_classes,
        name=name or Path(feature_path).stem,
    )


def write_features(path, features):
    with open(path, "w", encoding="utf-8") as fh:
        if sp.issparse(features):
            coo = sp.coo_matrix(features)
            order = np.lexsort((coo.col, coo.row))
            fh.write(f"sparse {features.shape[0]} {features.shape[1]}\n")
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i} {j} {float(v)!r}\n")
        else:
            for row in np.asarray(features, dtype=np.float64):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_edges(path, graph):
    upper = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in zip(upper.row[order], upper.col[order]):
            fh.write(f"{u} {v}\n")


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for node, cls in enumerate(labels):
            if cls != UNLABELED:
                fh.write(f"{node} {cls}\n")


def save_dataset(dataset, directory, stem=None):
    """Write features, edges and labels; returns the three paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or dataset.name
    paths = (
        directory / f"{stem}.feature",
        directory / f"{stem}.edge",
        directory / f"{stem}.label",
    )
    write_features(paths[0], dataset.features)
    write_edges(paths[1], dataset.topology)
    write_labels(paths[2], dataset.labels)
    return paths


def write_splits(path, train, val, test):
    with open(path, "w", encoding="utf-8") as fh:
        for name, ids in (("train", train), ("val", val), ("test", test)):
            fh.write(f"{name}:\n")
            for i in ids:
                fh.write(f"{int(i)}\n")


def read_splits(path):
    sections = {}
    current = None
    for line_no, line in _data_lines(path):
        if line.endswith(":"):
            current = line[:-1]
            if current not in ("train", "val", "test"):
                raise ParseError(path, line_no, f"unknown section {current!r}")
            sections[current] = []
            continue
        if current is None:
            raise ParseError(path, line_no, "node id before any section header")
        try:
            sections[current].append(int(line))
        except ValueError:
            raise ParseError(path, line_no, f"cannot parse {line!r}") from None
    missing = {"train", "val", "test"} - sections.keys()
    if missing:
        raise ParseError(path, 0, f"missing sections {sorted(missing)}")
    return tuple(np.array(sections[k], dtype=np.int64) for k in ("train", "val", "test"))


def write_matrix(path, matrix):
    """Store a dense or sparse 2-D array in the ``MLSG`` container."""
    if sp.issparse(matrix):
        coo = sp.coo_matrix(matrix)
        order = np.lexsort((coo.col, coo.row))
        is_int = np.issubdtype(coo.dtype, np.integer)
        version = SPARSE_I64 if is_int else SPARSE_F64
        vdtype = "<i8" if is_int else "<f8"
        n, d = coo.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, version, n, d))
            fh.write(struct.pack("<Q", coo.nnz))
            fh.write(coo.row[order].astype("<i8").tobytes())
            fh.write(coo.col[order].astype("<i8").tobytes())
            fh.write(coo.data[order].astype(vdtype).tobytes())
        return
    a = np.asarray(matrix)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DataError(f"only 2-D arrays can be cached, got shape {a.shape}")
    is_int = np.issubdtype(a.dtype, np.integer)
    version = DENSE_I64 if is_int else DENSE_F64
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, a.shape[0], a.shape[1]))
        fh.write(np.ascontiguousarray(a, dtype="<i8" if is_int else "<f8").tobytes())


def read_matrix(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise IntegrityError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise IntegrityError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if version in (DENSE_F64, DENSE_I64):
        dtype = "<f8" if version == DENSE_F64 else "<i8"
        if len(body) != n * d * 8:
            raise IntegrityError(f"{path}: expected {n * d * 8} payload bytes, got {len(body)}")
        return np.frombuffer(body, dtype=dtype).reshape(n, d).astype(dtype[1:], copy=True)
    if version in (SPARSE_F64, SPARSE_I64):
        (nnz,) = struct.unpack_from("<Q", body)
        if len(body) != 8 + 24 * nnz:
            raise IntegrityError(f"{path}: sparse payload size mismatch")
        rows = np.frombuffer(body, "<i8", nnz, 8)
        cols = np.frombuffer(body, "<i8", nnz, 8 + 8 * nnz)
        vals = np.frombuffer(body, "<i8" if version == SPARSE_I64 else "<f8", nnz, 8 + 16 * nnz)
        m = sp.csr_matrix((vals.copy(), (rows, cols)), shape=(n, d))
        m.sort_indices()
        return m
    raise IntegrityError(f"{path}: unknown container version {version}")
