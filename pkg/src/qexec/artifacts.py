"""On-disk artifacts: content hashes, metadata headers, feature tables and graph archives.

Every file written here is UTF-8 text and a pure function of its inputs. Headers
carry the seed, a config hash and the hashes of the inputs, never a timestamp, so a
rerun with the same inputs reproduces the bytes exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

class ArtifactError(ValueError):
    """A required artifact is missing, malformed or out of date."""


class StaleArtifactError(ArtifactError):
    pass


class LockHeld(RuntimeError):
    pass


# -- hashing ---------------------------------------------------------------------------


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(paths: Iterable[str | Path]) -> str:
    """Hash of (file name, content hash) pairs in name order; directory location is ignored."""
    h = hashlib.sha256()
    for p in sorted((Path(p) for p in paths), key=lambda p: p.name):
        h.update(p.name.encode("utf-8") + b"\0" + sha256_file(p).encode("ascii") + b"\n")
    return h.hexdigest()


def config_hash(config: Mapping) -> str:
    return sha256_bytes(json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8"))


# -- headers -----------------------------------------------------------------------------


def header_lines(meta: Mapping[str, object]) -> list[str]:
    """``key=value`` lines in key order, ready to be written as ``# `` comments."""
    return [f"{k}={meta[k]}" for k in sorted(meta)]


def read_header(path: str | Path) -> dict[str, str]:
    """Leading ``# key=value`` comment lines of a text artifact."""
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def write_text(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see half a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def render_table(columns: Sequence[str], rows: Iterable[Sequence[object]], meta: Mapping[str, object] | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines(meta or {}):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_table(path: str | Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}")
    meta = read_header(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ArtifactError(f"{path}: no header row")
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


# -- feature tables ----------------------------------------------------------------------


@dataclass
class FeatureTable:
    ids: list[str]
    names: list[str]
    rows: np.ndarray
    meta: dict

    def row(self, circuit_id: str) -> np.ndarray:
        return self.rows[self.ids.index(circuit_id)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.ids, self.rows))


def write_feature_table(path: str | Path, ids: Sequence[str], names: Sequence[str], rows,
                        meta: Mapping[str, object] | None = None) -> None:
    rows = np.asarray(rows, dtype=np.float64).reshape(len(ids), len(names))
    write_text(path, render_table(["circuit_id", *names], ([i, *r] for i, r in zip(ids, rows)), meta))


def read_feature_table(path: str | Path) -> FeatureTable:
    meta, head, body = read_table(path)
    if not head or head[0] != "circuit_id":
        raise ArtifactError(f"{path}: first column must be circuit_id")
    try:
        rows = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), len(head) - 1)
    except ValueError as exc:
        raise ArtifactError(f"{path}: {exc}") from None
    return FeatureTable([r[0] for r in body], head[1:], rows, meta)


# -- graph table -------------------------------------------------------------------------


def write_graph_table(path: str | Path, graphs: Mapping[str, tuple[np.ndarray, np.ndarray]],
                      meta: Mapping[str, object] | None = None) -> None:
    """One CSV for all samples, ids sorted: ``<id>,node,<values...>`` rows then ``<id>,edge,<src>,<dst>`` rows.

    A sample with no edges still has its node rows, and every sample has at least
    one node (its qubit inits), so ids round-trip.
    """
    def rows():
        for key in sorted(graphs):
            nodes, edges = graphs[key]
            for r in np.asarray(nodes, dtype=np.float64):
                yield [key, "node", *(float(v) for v in r)]
            for a, b in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
                yield [key, "edge", int(a), int(b)]

    write_text(path, render_table(["sample_id", "kind", "values"], rows(), meta))


def read_graph_table(path: str | Path) -> tuple[dict, dict[str, tuple[np.ndarray, np.ndarray]]]:
    meta, head, body = read_table(path)
    if head[:2] != ["sample_id", "kind"]:
        raise ArtifactError(f"{path}: unexpected columns {head}")
    nodes: dict[str, list[list[float]]] = {}
    edges: dict[str, list[tuple[int, int]]] = {}
    try:
        for r in body:
            if r[1] == "node":
                nodes.setdefault(r[0], []).append([float(v) for v in r[2:]])
            elif r[1] == "edge":
                edges.setdefault(r[0], []).append((int(r[2]), int(r[3])))
            else:
                raise ValueError(f"unknown row kind {r[1]!r}")
    except (ValueError, IndexError) as exc:
        raise ArtifactError(f"{path}: {exc}") from None
    out = {
        key: (np.array(rows, dtype=np.float64), np.array(edges.get(key, []), dtype=np.int64).reshape(-1, 2))
        for key, rows in nodes.items()
    }
    return meta, out


# -- staleness and locking -----------------------------------------------------------------


def check_fresh(recorded: Mapping[str, str], current: Mapping[str, str], artifact: str, remedy: str) -> None:
    """Refuse when a recorded input hash no longer matches the current one."""
    for key, value in current.items():
        if recorded.get(key) != value:
            raise StaleArtifactError(f"{artifact} is stale ({key} changed); {remedy}")


class ArtifactLock:
    """Advisory lock: a ``.lock`` file created with O_EXCL inside the artifact directory."""

    def __init__(self, directory: str | Path):
        self.path = Path(directory) / ".lock"
        self._held = False

    def __enter__(self) -> "ArtifactLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        except FileExistsError:
            raise LockHeld(f"{self.path} exists: another command is writing here "
                           "(delete the file if no such process is running)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        self._held = True
        return self

    def __exit__(self, *exc) -> None:
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False
