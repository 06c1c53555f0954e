# netma/fileio.py
# Plain-text file formats: the multilayer edge list with a typed header,
# the parallel ground-truth and holdout sidecars keyed by (layer, i, j),
# weight/prediction tables, and the JSON run manifest. Node and layer ids
# are 1-based in files, 0-based in memory. Floats are written with repr()
# so exports round-trip bit-exactly.

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .core import (
    EdgeFamily,
    InvalidInputError,
    LayerData,
    MultilayerDataset,
)

EDGELIST_TAG = "netma-edgelist 1"
TRUTH_TAG = "netma-truth 1"
HOLDOUT_TAG = "netma-holdout 1"

WEIGHT_COLUMNS = ["layer", "dim", "weight", "standalone_cv"]
PREDICTION_COLUMNS = ["i", "j", "value"]


def atomic_write(path, write_fn, mode="w", newline=None):
    """Write via a temp file in the same directory, then rename."""
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, mode, newline=newline, encoding="utf-8") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _parse_error(path, msg):
    return InvalidInputError(f"{path}: {msg}")


# ---------------------------------------------------------------------------
# Edge lists
# ---------------------------------------------------------------------------

def write_dataset(path, dataset: MultilayerDataset):
    def body(fh):
        fh.write(EDGELIST_TAG + "\n")
        fh.write(f"n {dataset.n}\n")
        fh.write(f"R {dataset.R}\n")
        fh.write("families " + " ".join(f.value for f in dataset.families) + "\n")
        fh.write("directedness undirected\n")
        fh.write("edges\n")
        for r, layer in enumerate(dataset.layers):
            for (i, j), v in zip(layer.edges, layer.values):
                fh.write(f"{r + 1} {i + 1} {j + 1} {float(v)!r}\n")

    atomic_write(path, body)


def _read_header(lines, path, tag):
    if not lines or lines[0].strip() != tag:
        raise _parse_error(path, f"expected header line {tag!r}")
    fields = {}
    pos = 1
    for pos in range(1, len(lines)):
        line = lines[pos].strip()
        if line in ("edges", "means", "values"):
            return fields, pos + 1
        key, _, rest = line.partition(" ")
        fields[key] = rest.strip()
    raise _parse_error(path, "missing section marker")


def read_dataset(path) -> MultilayerDataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    fields, start = _read_header(lines, path, EDGELIST_TAG)
    try:
        n = int(fields["n"])
        R = int(fields["R"])
        families = tuple(EdgeFamily(f) for f in fields["families"].split())
    except (KeyError, ValueError) as err:
        raise _parse_error(path, f"bad header: {err}")
    if fields.get("directedness") != "undirected":
        raise _parse_error(path, "directedness flag must be 'undirected'")
    if len(families) != R:
        raise _parse_error(path, "families must list one family per layer")
    rows = {r: ([], []) for r in range(R)}
    for ln in lines[start:]:
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 4:
            raise _parse_error(path, f"bad edge row: {ln!r}")
        r, i, j = int(parts[0]) - 1, int(parts[1]) - 1, int(parts[2]) - 1
        if not (0 <= r < R):
            raise _parse_error(path, f"layer out of range in row: {ln!r}")
        rows[r][0].append((i, j))
        rows[r][1].append(float(parts[3]))
    layers = []
    for r in range(R):
        e, v = rows[r]
        edges = np.array(e, dtype=np.int64).reshape(-1, 2)
        layers.append(LayerData(n=n, edges=edges, values=np.array(v, dtype=float)))
    return MultilayerDataset(layers=tuple(layers), families=families)


# ---------------------------------------------------------------------------
# Truth / holdout sidecars: rows (layer, i, j, value)
# ---------------------------------------------------------------------------

def _write_keyed(path, tag, section, n, R, row_iter):
    def body(fh):
        fh.write(tag + "\n")
        fh.write(f"n {n}\n")
        fh.write(f"R {R}\n")
        fh.write(section + "\n")
        for r, i, j, v in row_iter:
            fh.write(f"{r + 1} {i + 1} {j + 1} {v!r}\n")

    atomic_write(path, body)


def _read_keyed(path, tag):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    fields, start = _read_header(lines, path, tag)
    n, R = int(fields["n"]), int(fields["R"])
    out = []
    for ln in lines[start:]:
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 4:
            raise _parse_error(path, f"bad row: {ln!r}")
        out.append((int(parts[0]) - 1, int(parts[1]) - 1, int(parts[2]) - 1, float(parts[3])))
    return n, R, out


def write_truth(path, mean_star):
    """Ground-truth means for all pairs of every layer."""
    n = mean_star[0].shape[0]
    rows = ((r, i, j, float(mean_star[r][i, j]))
            for r in range(len(mean_star))
            for i in range(n) for j in range(i + 1, n))
    _write_keyed(path, TRUTH_TAG, "means", n, len(mean_star), rows)


def read_truth(path):
    """Returns per-layer (n, n) matrices (NaN where a pair is absent)."""
    n, R, rows = _read_keyed(path, TRUTH_TAG)
    mats = [np.full((n, n), np.nan) for _ in range(R)]
    for r, i, j, v in rows:
        mats[r][i, j] = v
        mats[r][j, i] = v
    return mats


def write_holdout(path, n, holdouts):
    """holdouts[r] = (edges, values) for the masked pairs of layer r."""
    rows = ((r, int(i), int(j), float(v))
            for r, (edges, values) in enumerate(holdouts)
            for (i, j), v in zip(edges, values))
    _write_keyed(path, HOLDOUT_TAG, "values", n, len(holdouts), rows)


def read_holdout(path):
    """Returns per-layer (edges, values) arrays."""
    n, R, rows = _read_keyed(path, HOLDOUT_TAG)
    out = []
    for r in range(R):
        mine = [(i, j, v) for (rr, i, j, v) in rows if rr == r]
        edges = np.array([(i, j) for i, j, _ in mine], dtype=np.int64).reshape(-1, 2)
        values = np.array([v for *_, v in mine], dtype=float)
        out.append((edges, values))
    return out


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def write_weights(path, weights, dims, candidate_cv):
    """Weight report: layer (1-based), candidate dim, weight, standalone CV."""
    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(WEIGHT_COLUMNS)
        for pos, (r, m) in enumerate(weights.index):
            writer.writerow([r + 1, dims[m], repr(float(weights.w[pos])),
                             repr(float(candidate_cv[pos]))])

    atomic_write(path, body, newline="")


def write_predictions(path, edges, values):
    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_COLUMNS)
        for (i, j), v in zip(edges, values):
            writer.writerow([int(i) + 1, int(j) + 1, repr(float(v))])

    atomic_write(path, body, newline="")


def read_predictions(path):
    edges, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            edges.append((int(row["i"]) - 1, int(row["j"]) - 1))
            values.append(float(row["value"]))
    return np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(values, dtype=float)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def write_manifest(path, manifest: dict):
    atomic_write(path, lambda fh: (json.dump(manifest, fh, indent=2, sort_keys=True),
                                   fh.write("\n")))


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
