"""CSV readers/writers for responses and parameters, plus run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
from pathlib import Path

import numpy as np

from .data import ResponseMatrix
from .errors import EmptyDataError, InvalidArgumentError, ParseError
from .model import ModelSpec, ParameterSet

TRIPLET_HEADER = ["person_id", "item_id", "response"]
NA_TOKENS = {"", "NA", "na", "NaN", "nan"}


def fmt(v) -> str:
    """Shortest round-tripping float text, so reruns write identical bytes."""
    return repr(float(v))


def load_triplets(path) -> ResponseMatrix:
    """Read ``person_id,item_id,response`` rows; ids are interned in order of first appearance."""
    persons, items, responses = [], [], []
    pmap, imap, seen = {}, {}, {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataError(f"{path} is empty")
        if [h.strip() for h in header] != TRIPLET_HEADER:
            raise ParseError(f"expected header {','.join(TRIPLET_HEADER)}, got {','.join(header)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", lineno)
            pid, iid, val = (c.strip() for c in row)
            if val not in ("0", "1"):
                raise ParseError(f"response must be 0 or 1, got {val!r}", lineno)
            p = pmap.setdefault(pid, len(pmap))
            i = imap.setdefault(iid, len(imap))
            if (p, i) in seen:
                raise ParseError(f"duplicate cell ({pid}, {iid}), first seen on line {seen[(p, i)]}", lineno)
            seen[(p, i)] = lineno
            persons.append(p)
            items.append(i)
            responses.append(int(val))
    if not responses:
        raise EmptyDataError(f"{path} has no data rows")
    return ResponseMatrix(
        persons, items, responses, (len(pmap), len(imap)),
        np.array(list(pmap), dtype=object), np.array(list(imap), dtype=object),
    )


def save_triplets(U: ResponseMatrix, path) -> None:
    order = np.lexsort((U.items, U.persons))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIPLET_HEADER)
        for k in order:
            w.writerow([U.person_ids[U.persons[k]], U.item_ids[U.items[k]], int(U.responses[k])])


def load_dense(path) -> ResponseMatrix:
    """Read a rectangular 0/1/NA matrix.

    When the first cell is ``person_id`` the first row holds item ids and the
    first column person ids; otherwise rows and columns are numbered from 0.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyDataError(f"{path} is empty")
    labelled = rows[0][0].strip() == "person_id"
    if labelled:
        item_ids = [c.strip() for c in rows[0][1:]]
        body = rows[1:]
        first_line = 2
    else:
        item_ids = [str(j) for j in range(len(rows[0]))]
        body = rows
        first_line = 1
    width = len(item_ids) + int(labelled)
    person_ids, values = [], []
    for k, row in enumerate(body):
        if len(row) != width:
            raise ParseError(f"ragged row: expected {width} fields, got {len(row)}", first_line + k)
        cells = row[1:] if labelled else row
        person_ids.append(row[0].strip() if labelled else str(k))
        parsed = []
        for c in cells:
            c = c.strip()
            if c in NA_TOKENS:
                parsed.append(np.nan)
            elif c in ("0", "1"):
                parsed.append(float(c))
            else:
                raise ParseError(f"cell must be 0, 1 or NA, got {c!r}", first_line + k)
        values.append(parsed)
    if not values:
        raise EmptyDataError(f"{path} has no data rows")
    return ResponseMatrix.from_dense(
        np.array(values, dtype=np.float64),
        np.array(person_ids, dtype=object),
        np.array(item_ids, dtype=object),
    )


def load_responses(path) -> ResponseMatrix:
    """Triplet file when the header says so, dense matrix otherwise."""
    with open(path, newline="") as fh:
        first = fh.readline()
    if [h.strip() for h in first.strip().split(",")] == TRIPLET_HEADER:
        return load_triplets(path)
    return load_dense(path)


def _param_header(kind: str, intercept: bool, r: int):
    return [f"{kind}_id"] + (["intercept"] if intercept else []) + [f"f{k + 1}" for k in range(r)]


def save_matrix(path, kind: str, ids, values, intercept: bool, r: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_param_header(kind, intercept, r))
        for pid, row in zip(ids, values):
            w.writerow([pid] + [fmt(v) for v in row])


def save_params(spec: ModelSpec, params: ParameterSet, person_ids, item_ids, person_path, item_path) -> None:
    save_matrix(person_path, "person", person_ids, params.theta, spec.person_intercept, spec.r)
    save_matrix(item_path, "item", item_ids, params.x, spec.item_intercept, spec.r)


def load_matrix(path, kind: str):
    """Read a parameter file; returns ``(ids, values, has_intercept, r)``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise EmptyDataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != f"{kind}_id":
        raise ParseError(f"expected first column {kind}_id", 1)
    intercept = len(header) > 1 and header[1] == "intercept"
    r = len(header) - 1 - int(intercept)
    expected = _param_header(kind, intercept, r)
    if header != expected:
        raise ParseError(f"expected header {','.join(expected)}", 1)
    ids, values = [], []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", k)
        ids.append(row[0].strip())
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise ParseError(f"non-numeric parameter: {exc}", k) from exc
    return np.array(ids, dtype=object), np.array(values, dtype=np.float64).reshape(len(ids), len(header) - 1), intercept, r


def load_params(person_path, item_path):
    """Read a person/item parameter pair; returns ``(spec, params, person_ids, item_ids)``."""
    pids, theta, p_int, r1 = load_matrix(person_path, "person")
    iids, x, i_int, r2 = load_matrix(item_path, "item")
    if r1 != r2:
        raise InvalidArgumentError(f"person file has {r1} factors but item file has {r2}")
    spec = ModelSpec(r1, person_intercept=p_int, item_intercept=i_int)
    return spec, ParameterSet(theta, x), pids, iids


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, subcommand: str, config: dict, seed, inputs=(), timings=None, outputs=()) -> Path:
    from . import __version__

    out = Path(out_dir) / "manifest.json"
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "jobs_env": os.environ.get("MIRTCF_JOBS"),
        "timings_seconds": timings or {},
    }
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return out


def align(U: ResponseMatrix, person_ids=None, item_ids=None) -> ResponseMatrix:
    """Re-express ``U`` on the given id sets; ``None`` keeps that axis as is.

    Ids of ``U`` missing from the target set raise InvalidArgumentError.
    """
    persons, pids = U.persons, U.person_ids
    items, iids = U.items, U.item_ids
    if person_ids is not None:
        persons, pids = _remap(U.person_ids, persons, person_ids, "person")
    if item_ids is not None:
        items, iids = _remap(U.item_ids, items, item_ids, "item")
    return ResponseMatrix(persons, items, U.responses, (len(pids), len(iids)), pids, iids)


def _remap(old_ids, index, new_ids, kind):
    lookup = {str(v): k for k, v in enumerate(new_ids)}
    unknown = [str(v) for v in old_ids if str(v) not in lookup]
    if unknown:
        raise InvalidArgumentError(f"{len(unknown)} {kind} id(s) not in the reference set, e.g. {unknown[0]!r}")
    table = np.array([lookup[str(v)] for v in old_ids], dtype=np.int64)
    return table[index] if len(index) else index, np.asarray(new_ids, dtype=object)
