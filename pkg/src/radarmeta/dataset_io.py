"""Binary dataset files and their JSON manifests.

Layout of a ``.rmds`` file (all integers little-endian):

    magic   5 bytes   b"RMDS1"
    k       uint32    vector dimension K
    count   uint64    number of records Q
    len     uint16    UTF-8 byte length of the environment label
    label   len bytes
    seed    uint64    generation seed
    records Q x (2K float64 interleaved re/im, then 1 uint8 label)

One record is therefore 16*K + 1 bytes; the complex payload is exactly the
numpy complex128 little-endian layout, so records map straight onto a
structured dtype and large files can be opened memory-mapped.

A JSON manifest with the same stem records the full environment
specification and the generating configuration hash.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .signal_env import Dataset, EnvironmentSpec

__all__ = [
    "MAGIC",
    "save_dataset",
    "load_dataset",
    "write_manifest",
    "read_manifest",
]

MAGIC = b"RMDS1"
_FIXED_HEADER = struct.Struct("<5sIQH")
_SEED = struct.Struct("<Q")


def _record_dtype(k: int) -> np.dtype:
    return np.dtype([("z", "<c16", (k,)), ("label", "u1")])


def save_dataset(path, dataset: Dataset) -> None:
    """Write a dataset to ``path`` in the RMDS1 binary layout."""
    label_bytes = dataset.env_label.encode("utf-8")
    if len(label_bytes) > 0xFFFF:
        raise ValueError("environment label too long")
    records = np.empty(len(dataset), dtype=_record_dtype(dataset.k))
    records["z"] = dataset.z
    records["label"] = dataset.labels
    with open(path, "wb") as fh:
        fh.write(_FIXED_HEADER.pack(MAGIC, dataset.k, len(dataset), len(label_bytes)))
        fh.write(label_bytes)
        fh.write(_SEED.pack(dataset.seed & 0xFFFFFFFFFFFFFFFF))
        records.tofile(fh)


def load_dataset(path, mmap: bool = False) -> Dataset:
    """Read an RMDS1 file; with ``mmap=True`` records stay on disk until touched."""
    path = Path(path)
    with open(path, "rb") as fh:
        fixed = fh.read(_FIXED_HEADER.size)
        if len(fixed) < _FIXED_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, k, count, label_len = _FIXED_HEADER.unpack(fixed)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a RMDS1 dataset file")
        label = fh.read(label_len).decode("utf-8")
        seed = _SEED.unpack(fh.read(_SEED.size))[0]
        offset = fh.tell()
        dtype = _record_dtype(k)
        expected = offset + count * dtype.itemsize
        if path.stat().st_size != expected:
            raise ValueError(
                f"{path}: size {path.stat().st_size} does not match header "
                f"(expected {expected})"
            )
        if mmap:
            records = np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=(count,))
        else:
            records = np.fromfile(fh, dtype=dtype, count=count)
    return Dataset(z=records["z"], labels=records["label"], env_label=label, seed=int(seed))


def write_manifest(
    path,
    env: EnvironmentSpec,
    count: int,
    seed: int,
    data_hash: str,
    kind: str,
    k: int,
    hypothesis: int | None = None,
) -> None:
    """JSON sidecar describing how the matching ``.rmds`` file was generated."""
    doc = {
        "format": MAGIC.decode(),
        "kind": kind,
        "k": k,
        "count": count,
        "seed": seed,
        "data_hash": data_hash,
        "env": asdict(env),
    }
    if hypothesis is not None:
        doc["hypothesis"] = hypothesis
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MAGIC.decode():
        raise ValueError(f"{path}: unrecognized manifest format")
    return doc
