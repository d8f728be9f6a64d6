"""File formats.

Dataset CSV::

    y,censored,x1,...,xd
    0.0,1,0.31,...
    1.7,0,-0.2,...

``censored`` is 0/1, the intercept column is implicit and added at load, and
floats are written in shortest round-trip form so a write/read cycle is
bit-exact.  Shard manifest (``shards.json``)::

    {"machines": M, "c0": 0.0, "shards": [{"machine_id": 0, "file": "shard_0.csv", "n": 200}, ...]}
"""

from __future__ import annotations

import csv
import json
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import RNG_ALGORITHM
from .errors import DataError, SchemaError
from .model import CensoredDataset, ModelParams, Theta, theta_to_params
from .solver_dist import Shard

__all__ = [
    "write_dataset_csv",
    "read_dataset_csv",
    "write_shards",
    "read_shard_manifest",
    "write_truth",
    "read_truth",
    "write_json",
    "read_json",
    "write_trace_csv",
    "write_table_csv",
    "theta_payload",
    "make_manifest",
]


def _fmt(v) -> str:
    return repr(float(v))


def write_dataset_csv(path, dataset: CensoredDataset) -> None:
    path = Path(path)
    header = ["y", "censored"] + [f"x{j}" for j in range(1, dataset.d + 1)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [_fmt(dataset.y[i]), "1" if dataset.censored[i] else "0"]
            row.extend(_fmt(v) for v in dataset.x[i, 1:])
            writer.writerow(row)


def read_dataset_csv(path, c0: float = 0.0) -> CensoredDataset:
    """Parse a dataset CSV; schema problems raise :class:`SchemaError` with the line number."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        d = len(header) - 2
        expected = ["y", "censored"] + [f"x{j}" for j in range(1, d + 1)]
        if d < 0 or header != expected:
            raise SchemaError(f"{path}:1: header must be y,censored,x1,...,xd")
        ys, flags, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise SchemaError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
            if row[1] not in ("0", "1"):
                raise SchemaError(f"{path}:{lineno}: censored must be 0 or 1, got {row[1]!r}")
            try:
                values = [float(v) for v in row[2:]]
                y = float(row[0])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            ys.append(y)
            flags.append(row[1] == "1")
            rows.append(values)
    if not ys:
        raise SchemaError(f"{path}: no data rows")
    features = np.array(rows, dtype=float).reshape(len(ys), d)
    return CensoredDataset.from_features(features, np.array(ys), c0=c0, censored=np.array(flags))


def write_shards(out_dir, shards, c0: float = 0.0) -> Path:
    out_dir = Path(out_dir)
    entries = []
    for shard in sorted(shards, key=lambda s: s.machine_id):
        name = f"shard_{shard.machine_id}.csv"
        write_dataset_csv(out_dir / name, shard.data)
        entries.append({"machine_id": shard.machine_id, "file": name, "n": shard.data.n})
    manifest = out_dir / "shards.json"
    write_json(manifest, {"machines": len(entries), "c0": c0, "shards": entries})
    return manifest


def read_shard_manifest(path):
    path = Path(path)
    meta = read_json(path)
    try:
        c0 = float(meta.get("c0", 0.0))
        entries = meta["shards"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed shard manifest ({exc})") from None
    shards = []
    for entry in entries:
        file = path.parent / entry["file"]
        if not file.exists():
            raise DataError(f"shard {entry['machine_id']}: missing file {file}")
        data = read_dataset_csv(file, c0=c0)
        if "n" in entry and int(entry["n"]) != data.n:
            raise DataError(f"shard {entry['machine_id']}: manifest says n={entry['n']}, file has {data.n}")
        shards.append(Shard(int(entry["machine_id"]), data))
    return shards, c0


def write_truth(path, truth: ModelParams, c0: float, s0: int) -> None:
    write_json(path, {"beta": truth.beta.tolist(), "sigma": truth.sigma, "c0": c0, "s0": s0})


def read_truth(path):
    meta = read_json(path)
    try:
        truth = ModelParams(np.array(meta["beta"], dtype=float), float(meta["sigma"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed truth file ({exc})") from None
    return truth, float(meta.get("c0", 0.0))


def write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def write_table_csv(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def write_trace_csv(path, trace, with_round=False) -> None:
    header = ["iter", "nll", "step_norm", "support_size", "eta_used"]
    if with_round:
        header = ["round"] + header
    rows = []
    for rec in trace:
        row = [rec.iter, rec.nll, rec.step_norm, len(rec.support), rec.eta_used]
        rows.append([rec.round] + row if with_round else row)
    write_table_csv(path, header, rows)


def theta_payload(theta: Theta, c0: float = 0.0) -> dict:
    """JSON-ready estimate.  ``beta`` is reported on the original (unshifted) scale."""
    params = theta_to_params(theta)
    beta = params.beta.copy()
    beta[0] += c0
    return {
        "theta": {"delta": theta.delta.tolist(), "gamma": theta.gamma},
        "beta": beta.tolist(),
        "sigma": params.sigma,
        "support": theta.support.tolist(),
    }


def make_manifest(command: str, config: dict, seed) -> dict:
    """Run manifest.  ``SOURCE_DATE_EPOCH`` pins the timestamp when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "timestamp": when.strftime("%Y-%m-%dT%H:%M:%SZ"),
    }
