"""Batch commands behind the ``mlsgnn`` front-end.

Each command takes a :class:`~mlsgnn.config.RunConfig`, writes its outputs
under ``config.out_dir`` and returns the in-memory results so scripts and
tests can use them directly.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .attention import attention_statistics, format_statistics
from .errors import ConfigError, DataError, IntegrityError
from .graph import UNLABELED, make_splits, normalize_adjacency
from .io import load_dataset, read_matrix, read_splits, write_matrix, write_splits
from .measures import build_measure_subgraphs
from .semantic import build_semantic_graph
from .training import (
    CHANNELS,
    ModelGraphs,
    TrainConfig,
    evaluate_accuracy,
    format_history,
    forward_full,
    init_model,
    train,
)

CACHE_FORMAT = 1
EXPORT_TAGS = CHANNELS + ("agg",)


class CacheWarning(UserWarning):
    """A cache was stale or corrupted and has been rebuilt."""


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_text(path, text):
    # newline="\n" keeps the bytes identical across platforms
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cache_dir(config):
    env = os.environ.get("MLSG_CACHE_DIR")
    return Path(env) if env else Path(config.out_dir) / "cache"


def load_run_dataset(config):
    """Read the dataset files and attach splits (from file, else sampled)."""
    paths = config.data.resolved()
    for p in paths:
        if not Path(p).exists():
            raise DataError(f"dataset file not found: {p}")
    ds = load_dataset(*paths, n_classes=config.data.n_classes, name=config.data.name)
    if config.data.splits is not None:
        if not Path(config.data.splits).exists():
            raise DataError(f"split file not found: {config.data.splits}")
        return ds.with_splits(*read_splits(config.data.splits))
    s = config.split
    return make_splits(ds, s.labels_per_class, s.val_size, s.test_size, seed=s.seed)


def _config_fingerprint(config):
    return {
        "format": CACHE_FORMAT,
        "measures": [asdict(m) for m in config.measure_kinds()],
        "k": config.k,
        "walk": asdict(config.walk),
    }


def _cache_files(q):
    return [f"A{i + 1}.mlsg" for i in range(q)] + ["F.mlsg", "P.mlsg", "P_norm.mlsg"]


@dataclass
class Prepared:
    dataset: object
    graphs: ModelGraphs
    subgraphs: list
    F: sp.csr_matrix
    P: sp.csr_matrix
    P_norm: sp.csr_matrix
    recomputed: bool
    directory: Path


def _canonical(m):
    m = sp.csr_matrix(m, copy=True)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def cmd_prepare(config, dataset=None, workers=None):
    """Build (or reuse) the measure subgraphs, frequency matrix and PPMI graph."""
    ds = load_run_dataset(config) if dataset is None else dataset
    directory = cache_dir(config)
    manifest_path = directory / "manifest.json"
    inputs = {Path(p).name: _sha256(p) for p in config.data.resolved()}
    fingerprint = _config_fingerprint(config)
    config_hash = hashlib.sha256(json.dumps(fingerprint, sort_keys=True).encode()).hexdigest()
    input_hash = hashlib.sha256(json.dumps(inputs, sort_keys=True).encode()).hexdigest()
    names = _cache_files(len(config.measures))

    if manifest_path.exists():
        reason = None
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            manifest, reason = {}, "unreadable manifest"
        if reason is None and (manifest.get("input_hash") != input_hash
                               or manifest.get("config_hash") != config_hash):
            reason = "inputs or configuration changed"
        if reason is None:
            files = manifest.get("files", {})
            for name in names:
                path = directory / name
                if not path.exists() or files.get(name) != _sha256(path):
                    reason = f"checksum mismatch for {name}"
                    break
        if reason is None:
            mats = [read_matrix(directory / name) for name in names]
            q = len(config.measures)
            return _assemble(ds, mats[:q], *mats[q:], False, directory)
        warnings.warn(f"cache at {directory} rebuilt: {reason}", CacheWarning, stacklevel=2)

    workers = workers or 1
    subs = build_measure_subgraphs(ds.features, config.measure_kinds(), config.k)
    freq, ppmi = build_semantic_graph(ds.topology, config.walk, workers=workers)
    mats = [_canonical(s.adjacency.adjacency) for s in subs]
    counts = _canonical(freq.counts).astype(np.int64)
    mats += [counts, _canonical(ppmi.P), _canonical(ppmi.P_norm)]
    directory.mkdir(parents=True, exist_ok=True)
    for name, m in zip(names, mats):
        write_matrix(directory / name, m)
    manifest = {
        "input_hash": input_hash,
        "config_hash": config_hash,
        "inputs": inputs,
        "config": fingerprint,
        "files": {name: _sha256(directory / name) for name in names},
    }
    _write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    # reload so fresh and cached runs see bit-identical matrices
    mats = [read_matrix(directory / name) for name in names]
    q = len(config.measures)
    return _assemble(ds, mats[:q], *mats[q:], True, directory)


def _assemble(ds, subs, f, p, p_norm, recomputed, directory):
    graphs = ModelGraphs(list(subs), normalize_adjacency(ds.topology).values, p_norm)
    return Prepared(ds, graphs, list(subs), f, p, p_norm, recomputed, directory)


# -- checkpoints ------------------------------------------------------------

def _config_dict(tc):
    out = {f.name: getattr(tc, f.name) for f in fields(tc)}
    out["channels"] = list(out["channels"])
    return out


def save_checkpoint(directory, model, train_config, dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    for name, arr in params.items():
        write_matrix(directory / f"{name}.mlsg", arr)
    meta = {
        "n": dataset.n,
        "d": dataset.d,
        "n_classes": dataset.n_classes,
        "dataset": dataset.name,
        "train_config": _config_dict(train_config),
        "shapes": {k: list(v.shape) for k, v in params.items()},
    }
    _write_text(directory / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory):
    """Returns ``(ModelParams, TrainConfig)``."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise DataError(f"no checkpoint at {directory}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    tc = TrainConfig(**meta["train_config"])
    model = init_model(meta["n"], meta["d"], meta["n_classes"], tc)
    for name, arr in model.parameters().items():
        path = directory / f"{name}.mlsg"
        if not path.exists():
            raise DataError(f"checkpoint is missing {path.name}")
        stored = read_matrix(path)
        shape = tuple(meta["shapes"][name])
        if stored.size != arr.size or shape != arr.shape:
            raise IntegrityError(f"{path.name}: shape {stored.shape} does not match {arr.shape}")
        arr[...] = stored.reshape(shape)
    return model, tc


# -- training ---------------------------------------------------------------

@dataclass
class RunSummary:
    dataset: str
    label_rate: int
    seed: int
    test_acc: float
    val_acc: float
    epochs: int

    def line(self):
        return f"{self.dataset}\t{self.label_rate}\t{self.seed}\t{self.test_acc!r}"


SUMMARY_COLUMNS = ("dataset", "label_rate", "seed", "test_acc")


def format_summary(rows):
    return "\t".join(SUMMARY_COLUMNS) + "\n" + "".join(r.line() + "\n" for r in rows)


def parse_summary(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if tuple(lines[0].split("\t")) != SUMMARY_COLUMNS:
        raise IntegrityError("unexpected summary header")
    out = []
    for ln in lines[1:]:
        name, rate, seed, acc = ln.split("\t")
        out.append((name, int(rate), int(seed), float(acc)))
    return out


def fit(dataset, graphs, train_config):
    """Train one model; returns ``(best_model, history, test_acc, val_acc)``."""
    model = init_model(dataset.n, dataset.d, dataset.n_classes, train_config)
    best, history = train(model, dataset, graphs, train_config)
    ev = forward_full(best, dataset, graphs, train_config)
    return (best, history, evaluate_accuracy(ev.predictions, dataset.labels, dataset.test),
            evaluate_accuracy(ev.predictions, dataset.labels, dataset.val))


def _label_rate(config, ds):
    if config.data.splits is None:
        return config.split.labels_per_class
    return int(round(ds.train.size / ds.n_classes))


def seed_dir(config, seed):
    return Path(config.out_dir) / f"seed-{seed}"


def cmd_train(config, prepared=None, workers=None):
    """Train once per configured seed; returns the per-seed :class:`RunSummary` list."""
    prep = cmd_prepare(config, workers=workers) if prepared is None else prepared
    ds = prep.dataset
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_splits(out / "splits.txt", ds.train, ds.val, ds.test)
    rows = []
    for seed in config.seeds:
        tc = config.train.replace(seed=seed)
        best, history, test_acc, val_acc = fit(ds, prep.graphs, tc)
        sd = seed_dir(config, seed)
        save_checkpoint(sd / "checkpoint", best, tc, ds)
        _write_text(sd / "history.tsv", format_history(history))
        rows.append(RunSummary(ds.name, _label_rate(config, ds), seed, test_acc, val_acc,
                               len(history)))
    _write_text(out / "summary.tsv", format_summary(rows))
    return rows


def best_run(rows):
    """Highest test accuracy, ties to the earliest seed."""
    return max(rows, key=lambda r: (r.test_acc, -rows.index(r)))


def best_val_run(rows):
    """Highest validation accuracy, ties to the earliest seed."""
    return max(rows, key=lambda r: (r.val_acc, -rows.index(r)))


# -- sweep ------------------------------------------------------------------

def format_sweep(alphas, betas, grid):
    lines = ["\t".join(["alpha\\beta"] + [repr(float(b)) for b in betas])]
    for a, row in zip(alphas, grid):
        lines.append("\t".join([repr(float(a))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def parse_sweep(text):
    """Returns ``(alphas, betas, grid)``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split("\t")
    if head[0] != "alpha\\beta":
        raise IntegrityError("unexpected sweep header")
    betas = np.array([float(v) for v in head[1:]])
    alphas, grid = [], []
    for ln in lines[1:]:
        parts = ln.split("\t")
        alphas.append(float(parts[0]))
        grid.append([float(v) for v in parts[1:]])
    return np.array(alphas), betas, np.array(grid)


def cmd_sweep(config, alpha_grid=None, beta_grid=None, prepared=None, workers=None):
    """Test accuracy over an alpha x beta grid, for the first configured seed."""
    alphas = tuple(config.alpha_grid if alpha_grid is None else alpha_grid)
    betas = tuple(config.beta_grid if beta_grid is None else beta_grid)
    if not alphas or not betas:
        raise ConfigError("sweep grids must be non-empty")
    prep = cmd_prepare(config, workers=workers) if prepared is None else prepared
    seed = config.seeds[0]
    grid = np.empty((len(alphas), len(betas)))
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            tc = config.train.replace(alpha=float(a), beta=float(b), seed=seed)
            grid[i, j] = fit(prep.dataset, prep.graphs, tc)[2]
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "sweep.tsv", format_sweep(alphas, betas, grid))
    return alphas, betas, grid


# -- attention statistics and embeddings ------------------------------------

def attention_tables(model, dataset, graphs, train_config, measure_names):
    """Returns ``(measure_rows, channel_rows)``; measure rows are empty without ``fea``."""
    ev = forward_full(model, dataset, graphs, train_config)
    measure_rows = []
    if ev.graph_weights is not None:
        measure_rows = attention_statistics(ev.graph_weights.T, measure_names)
    channel_rows = attention_statistics(ev.channel_weights, train_config.channels)
    return measure_rows, channel_rows


def _measure_names(config):
    names = []
    for tag in config.measures:
        names.append(tag if tag not in names else f"{tag}{names.count(tag) + 1}")
    return names


def _checkpoint(config, seed, checkpoint):
    return Path(checkpoint) if checkpoint is not None else seed_dir(config, seed) / "checkpoint"


def cmd_attention_stats(config, seed=None, checkpoint=None, prepared=None, workers=None):
    seed = config.seeds[0] if seed is None else seed
    model, tc = load_checkpoint(_checkpoint(config, seed, checkpoint))
    prep = cmd_prepare(config, workers=workers) if prepared is None else prepared
    mrows, crows = attention_tables(model, prep.dataset, prep.graphs, tc, _measure_names(config))
    sd = seed_dir(config, seed)
    sd.mkdir(parents=True, exist_ok=True)
    _write_text(sd / "attention-measures.tsv", format_statistics(mrows))
    _write_text(sd / "attention-channels.tsv", format_statistics(crows))
    return mrows, crows


def format_embeddings(z, labels):
    lines = []
    for row, y in zip(np.asarray(z, dtype=np.float64), labels):
        lines.append("\t".join([repr(float(v)) for v in row] + [str(int(y))]))
    return "\n".join(lines) + "\n"


def read_embeddings(path):
    """Returns ``(Z, labels)`` from an exported embedding table."""
    rows = [ln.split("\t") for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
    z = np.array([[float(v) for v in r[:-1]] for r in rows])
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return z, labels


def cmd_export_embeddings(config, which="agg", seed=None, checkpoint=None, prepared=None,
                          workers=None):
    """Write ``n x nhid2`` embeddings plus a label column (``-1`` when unlabeled)."""
    if which not in EXPORT_TAGS:
        raise ConfigError(f"unknown embedding {which!r}; choose from {EXPORT_TAGS}")
    seed = config.seeds[0] if seed is None else seed
    model, tc = load_checkpoint(_checkpoint(config, seed, checkpoint))
    if which != "agg" and which not in tc.channels:
        raise ConfigError(f"channel {which!r} is not part of this model ({tc.channels})")
    prep = cmd_prepare(config, workers=workers) if prepared is None else prepared
    ev = forward_full(model, prep.dataset, prep.graphs, tc)
    labels = np.where(prep.dataset.labels >= 0, prep.dataset.labels, UNLABELED)
    sd = seed_dir(config, seed)
    sd.mkdir(parents=True, exist_ok=True)
    path = sd / f"embeddings-{which}.tsv"
    _write_text(path, format_embeddings(ev.embeddings[which], labels))
    return path
