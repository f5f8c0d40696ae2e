"""Timing manifests, repeated-measure planning and seeded splits.

All shuffling uses numpy's PCG64 bit generator, ``np.random.Generator(np.random.PCG64(seed))``,
so a given seed reproduces the same split on any platform.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TypeVar

import numpy as np

from .circuit import Circuit, GateRegistry, default_global_registry, default_node_registry, to_dag
from .features import BackendCalibration, GlobalFeatures, GraphSample, global_features, graph_sample

T = TypeVar("T")

LOG_SECONDS = "log-seconds"
SECONDS = "seconds"
TARGET_SPACES = (LOG_SECONDS, SECONDS)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class TimingRecord:
    circuit_id: str
    backend_id: str
    shots: int
    repeats: tuple[float, ...]

    def __post_init__(self):
        if not self.repeats:
            raise ManifestError(f"{self.key}: no timing repeats")
        for t in self.repeats:
            if not (math.isfinite(t) and t > 0):
                raise ManifestError(f"{self.key}: execution time {t} is not a finite positive number")

    @property
    def key(self) -> tuple[str, str]:
        return (self.circuit_id, self.backend_id)

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.repeats))


@dataclass
class LabeledSample:
    circuit_id: str
    backend_id: str
    global_vec: np.ndarray
    graph: GraphSample
    target_seconds: float
    global_features: GlobalFeatures | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.target_seconds > 0:
            raise ValueError(f"{self.sample_id}: target must be positive")

    @property
    def sample_id(self) -> str:
        return sample_id(self.circuit_id, self.backend_id)


def sample_id(circuit_id: str, backend_id: str) -> str:
    return f"{circuit_id}@{backend_id}"


def to_model_space(seconds, space: str = LOG_SECONDS) -> np.ndarray:
    seconds = np.asarray(seconds, dtype=np.float64)
    if space == LOG_SECONDS:
        return np.log(seconds)
    if space == SECONDS:
        return seconds
    raise ValueError(f"unknown target space {space!r}")


def from_model_space(values, space: str = LOG_SECONDS) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if space == LOG_SECONDS:
        return np.exp(values)
    if space == SECONDS:
        return values
    raise ValueError(f"unknown target space {space!r}")


@dataclass(frozen=True)
class RepeatedMeasuresPlan:
    mean: float
    stdev: float
    precision: float
    z: float
    n: int


def min_repeats(mean: float, stdev: float, precision: float = 25.0, z: float = 1.960) -> int:
    """Smallest number of timing repeats that hits ``precision`` percent at confidence ``z``.

    ``n = ceil(((100 * z * s) / (r * mean)) ** 2)``, never below 1.
    """
    if not mean > 0:
        raise ValueError("mean execution time must be positive")
    if not precision > 0:
        raise ValueError("precision must be positive")
    if stdev < 0 or not z > 0:
        raise ValueError("stdev must be >= 0 and z > 0")
    n = math.ceil(((100.0 * z * stdev) / (precision * mean)) ** 2)
    return max(1, n)


def plan_repeats(repeats: Sequence[float], precision: float = 25.0, z: float = 1.960) -> RepeatedMeasuresPlan:
    """Plan from observed repeats, using the sample standard deviation (ddof=1)."""
    arr = np.asarray(repeats, dtype=np.float64)
    s = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    x = float(arr.mean())
    return RepeatedMeasuresPlan(x, s, precision, z, min_repeats(x, s, precision, z))


def label_samples(
    circuits: Sequence[Circuit],
    calibrations: Sequence[BackendCalibration],
    records: Sequence[TimingRecord],
    global_registry: GateRegistry | None = None,
    node_registry: GateRegistry | None = None,
) -> list[LabeledSample]:
    """Join timing records with circuit features, in record order.

    Records naming an unknown circuit or backend raise ``KeyError``.
    """
    greg = global_registry or default_global_registry()
    nreg = node_registry or default_node_registry()
    by_name = {c.name: c for c in circuits}
    by_backend = {c.backend_id: c for c in calibrations}
    gcache: dict[str, GlobalFeatures] = {}
    out = []
    for rec in records:
        circ = by_name[rec.circuit_id]
        if rec.circuit_id not in gcache:
            gcache[rec.circuit_id] = global_features(circ, greg)
        gf = gcache[rec.circuit_id]
        graph = graph_sample(to_dag(circ), by_backend[rec.backend_id], nreg, rec.circuit_id)
        out.append(LabeledSample(rec.circuit_id, rec.backend_id, gf.to_vector(), graph, rec.mean_seconds, gf))
    return out


# -- manifest --------------------------------------------------------------------

MANIFEST_HEAD = ["circuit_id", "backend_id", "shots"]


def _data_lines(path: Path):
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip() and not line.lstrip().startswith("#"):
                yield lineno, line


def load_manifest(path: str | Path) -> list[TimingRecord]:
    """Read a manifest; rows sharing (circuit_id, backend_id) are merged in file order."""
    path = Path(path)
    lines = list(_data_lines(path))
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    rows = csv.reader([line for _, line in lines])
    header = [h.strip() for h in next(rows)]
    if header[:3] != MANIFEST_HEAD:
        raise ManifestError(f"{path}:{lines[0][0]}: header must start with {','.join(MANIFEST_HEAD)}")
    merged: dict[tuple[str, str], TimingRecord] = {}
    for (lineno, _), row in zip(lines[1:], rows):
        row = [c.strip() for c in row]
        try:
            if len(row) < 4:
                raise ValueError("need circuit_id, backend_id, shots and at least one time")
            times = tuple(float(c) for c in row[3:] if c != "")
            rec = TimingRecord(row[0], row[1], int(row[2]), times)
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        if rec.key in merged:
            old = merged[rec.key]
            rec = TimingRecord(old.circuit_id, old.backend_id, old.shots, old.repeats + rec.repeats)
        merged[rec.key] = rec
    return list(merged.values())


def write_manifest(records: Sequence[TimingRecord], path: str | Path, header_comments: Sequence[str] = ()) -> None:
    width = max((len(r.repeats) for r in records), default=1)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEAD + [f"t{i + 1}_s" for i in range(width)])
        for r in records:
            w.writerow([r.circuit_id, r.backend_id, r.shots] + [repr(t) for t in r.repeats])


# -- splits ----------------------------------------------------------------------


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split(samples: Sequence[T], ratio: float = 0.9, seed: int = 0) -> tuple[list[T], list[T]]:
    """Seeded shuffle, then the first floor(ratio * n) items train and the rest test."""
    n = len(samples)
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    order = make_rng(seed).permutation(n)
    cut = math.floor(ratio * n)
    return [samples[i] for i in order[:cut]], [samples[i] for i in order[cut:]]


def kfold(samples: Sequence[T], k: int = 10, seed: int = 0) -> list[tuple[list[T], list[T]]]:
    """Shuffle once, cut into k near-equal parts, each part is one fold's test set."""
    n = len(samples)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    order = make_rng(seed).permutation(n)
    parts = np.array_split(order, k)
    folds = []
    for i, test_idx in enumerate(parts):
        train_idx = np.concatenate([p for j, p in enumerate(parts) if j != i])
        folds.append(([samples[t] for t in train_idx], [samples[t] for t in test_idx]))
    return folds


def write_id_list(ids: Sequence[str], path: str | Path, header_comments: Sequence[str] = ()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        for i in ids:
            fh.write(f"{i}\n")


def read_id_list(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]
