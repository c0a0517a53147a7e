"""Chain CSV and summary JSON serialization.

Floats are written with 17 significant digits, which round-trips every IEEE
double exactly.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .samplers import Chain

FLOAT_FORMAT = ".17g"


def _fmt(value: float) -> str:
    return format(float(value), FLOAT_FORMAT)


def chain_header(dim: int):
    return ["iter"] + [f"x{i + 1}" for i in range(dim)] + ["accepted", "delta_H", "weight", "diverged"]


def write_chain_csv(chain: Chain, path) -> None:
    """Write one row per sample under the header ``iter,x1..xd,accepted,delta_H,weight,diverged``."""
    d = chain.samples.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(chain_header(d))
        for i in range(len(chain)):
            writer.writerow(
                [str(i)]
                + [_fmt(v) for v in chain.samples[i]]
                + [
                    "1" if chain.accepted[i] else "0",
                    _fmt(chain.energy_errors[i]),
                    _fmt(chain.weights[i]),
                    "1" if chain.diverged[i] else "0",
                ]
            )


def read_chain_csv(path) -> Chain:
    """Inverse of :func:`write_chain_csv`.

    Raises:
        ValueError: if the header does not match the chain schema.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    d = len(header) - 5
    if d < 1 or header != chain_header(d):
        raise ValueError(f"{path}: unexpected header {','.join(header)}")
    body = rows[1:]
    n = len(body)
    if n == 0:
        return Chain.empty(d)
    for lineno, row in enumerate(body, start=2):
        if len(row) != d + 5:
            raise ValueError(f"{path}:{lineno}: expected {d + 5} fields, got {len(row)}")
    samples = np.array([[float(v) for v in row[1 : d + 1]] for row in body])
    accepted = np.array([row[d + 1] == "1" for row in body])
    dH = np.array([float(row[d + 2]) for row in body])
    weights = np.array([float(row[d + 3]) for row in body])
    diverged = np.array([row[d + 4] == "1" for row in body])
    return Chain(samples, accepted, dH, weights, diverged)


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays for ``json``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))


def write_table_csv(rows, columns, path) -> None:
    """Write dict-like rows; floats use the round-trip format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return _fmt(value)
    return str(value)
