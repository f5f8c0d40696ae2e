"""Command-line pipeline: extract, sample, train, finetune, predict, evaluate, importance, repeats.

Every command reads a JSON project config (``--config``); relative paths in it are
resolved against the config file's directory. Outputs go to ``artifact_dir`` and
start with ``# key=value`` metadata lines (command, seed, config hash and the
content hashes of their inputs). Exit codes: 0 success, 1 user error, 2 internal error.

Randomness: the 9:1 split, minibatch order, fold assignment and SHAP permutations
all use the project ``seed`` directly; extraction and sampling are deterministic.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import traceback
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import artifacts as A
from .analysis import UndefinedMetricError, evaluate, shap_importance
from .circuit import GateRegistry, default_global_registry, default_node_registry, to_dag
from .dataset import (
    LOG_SECONDS,
    LabeledSample,
    ManifestError,
    TARGET_SPACES,
    load_manifest,
    plan_repeats,
    sample_id,
    split,
    to_model_space,
)
from .features import BackendCalibration, FeatureError, GraphSample, global_feature_names, global_features, graph_sample
from .model import ModelError
from .qasm import QasmError, load_qasm
from .sampling import build_pool, gsx_select, plan_budget
from .training import FoldFailed, Predictor, TrainConfig, TrainingDiverged, fine_tune_cv, train

log = logging.getLogger("qexec")

DEFAULTS = {
    "corpus_dir": "corpus",
    "calibration_dir": "calibrations",
    "manifest": "manifest.csv",
    "artifact_dir": "artifacts",
    "model": None,  # defaults to <artifact_dir>/model.qxw
    "node_registry": None,  # bundled registries when unset
    "global_registry": None,
    "seed": 0,
    "target_space": LOG_SECONDS,
    "alpha": 0.5,
    "confidence": 95.0,
    "margin": 5.0,
    "precision": 25.0,
    "z": 1.96,
    "folds": 10,
    "n_permutations": 100,
    "train": {"epochs": 500, "batch_size": 128, "learning_rate": 1e-3},
}
PATH_KEYS = ("corpus_dir", "calibration_dir", "manifest", "artifact_dir", "model", "node_registry", "global_registry")


class UserError(Exception):
    pass


USER_ERRORS = (
    UserError,
    A.ArtifactError,
    A.LockHeld,
    ManifestError,
    FeatureError,
    QasmError,
    ModelError,
    UndefinedMetricError,
    FileNotFoundError,
    TrainingDiverged,
    FoldFailed,
)


# -- project config ----------------------------------------------------------------------------


@dataclass
class Project:
    raw: dict
    root: Path

    def path(self, key: str) -> Path | None:
        v = self.raw.get(key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.root / p

    @property
    def artifact_dir(self) -> Path:
        return self.path("artifact_dir")

    @property
    def features_dir(self) -> Path:
        return self.artifact_dir / "features"

    @property
    def model_path(self) -> Path:
        return self.path("model") or self.artifact_dir / "model.qxw"

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def hash(self) -> str:
        return A.config_hash(self.raw)

    def train_config(self, **over) -> TrainConfig:
        t = dict(self.raw["train"])
        t.update({k: v for k, v in over.items() if v is not None})
        return TrainConfig(
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            learning_rate=float(t["learning_rate"]),
            seed=self.seed,
            target_space=self.raw["target_space"],
        )

    def registries(self) -> tuple[GateRegistry, GateRegistry]:
        n = self.path("node_registry")
        g = self.path("global_registry")
        node = GateRegistry.from_file(n) if n else default_node_registry()
        glob = GateRegistry.from_file(g) if g else default_global_registry()
        return node, glob

    def meta(self, command: str, **inputs: str) -> dict:
        return {"command": command, "seed": self.seed, "config_hash": self.hash, "qexec_version": __version__, **inputs}


def load_project(path: str | Path, overrides: dict) -> Project:
    path = Path(path)
    if not path.exists():
        raise UserError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UserError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise UserError(f"{path}: top level must be an object")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise UserError(f"{path}: unknown config keys {unknown}")
    cfg = json.loads(json.dumps(DEFAULTS))
    train_over = raw.pop("train", {}) or {}
    cfg.update(raw)
    cfg["train"].update(train_over)
    for k, v in overrides.items():
        if v is None:
            continue
        if k in cfg["train"]:
            cfg["train"][k] = v
        else:
            cfg[k] = v
    if cfg["target_space"] not in TARGET_SPACES:
        raise UserError(f"target_space must be one of {TARGET_SPACES}")
    if not 0.0 <= float(cfg["alpha"]) <= 1.0:
        raise UserError("alpha must lie in [0, 1]")
    return Project(cfg, path.resolve().parent)


# -- inputs ---------------------------------------------------------------------------------


def _corpus_files(project: Project) -> list[Path]:
    d = project.path("corpus_dir")
    if not d.is_dir():
        raise UserError(f"corpus directory not found: {d}")
    return sorted(d.glob("*.qasm"))


def _calibration_files(project: Project) -> list[Path]:
    d = project.path("calibration_dir")
    if not d.is_dir():
        raise UserError(f"calibration directory not found: {d}")
    return sorted(d.glob("*.txt"))


def _input_hashes(project: Project) -> dict[str, str]:
    node, glob = project.registries()
    return {
        "corpus_hash": A.tree_digest(_corpus_files(project)),
        "calibration_hash": A.tree_digest(_calibration_files(project)),
        "registry_hash": A.sha256_bytes((node.to_text() + "\n" + glob.to_text()).encode("utf-8")),
    }


@dataclass
class Features:
    table: A.FeatureTable
    graphs: dict[str, tuple[np.ndarray, np.ndarray]]
    hashes: dict[str, str]

    def sample(self, sid: str, target: float = 1.0) -> LabeledSample:
        circuit_id, backend_id = sid.rsplit("@", 1)
        nodes, edges = self.graphs[sid]
        g = GraphSample(nodes, edges, circuit_id, backend_id)
        return LabeledSample(circuit_id, backend_id, self.table.row(circuit_id), g, target)


def _load_features(project: Project) -> Features:
    table_path = project.features_dir / "global.csv"
    graph_path = project.features_dir / "graphs.csv"
    for p in (table_path, graph_path):
        if not p.exists():
            raise A.ArtifactError(f"missing prerequisite {p}; run `qexec extract` first")
    table = A.read_feature_table(table_path)
    current = _input_hashes(project)
    A.check_fresh(table.meta, current, str(table_path), "re-run `qexec extract`")
    meta, graphs = A.read_graph_table(graph_path)
    A.check_fresh(meta, current, str(graph_path), "re-run `qexec extract`")
    return Features(table, graphs, {"features_hash": A.sha256_file(table_path), "graphs_hash": A.sha256_file(graph_path)})


def _read_selection(path: Path) -> list[str]:
    _, head, rows = A.read_table(path)
    if "sample_id" not in head:
        raise A.ArtifactError(f"{path}: no sample_id column")
    col = head.index("sample_id")
    return [r[col] for r in rows]


def _labeled(project: Project, feats: Features, selection: Path | None) -> tuple[list[LabeledSample], dict[str, str]]:
    manifest = project.path("manifest")
    if not manifest.exists():
        raise UserError(f"manifest not found: {manifest}")
    records = load_manifest(manifest)
    wanted = set(_read_selection(selection)) if selection else None
    out = []
    for rec in records:
        sid = sample_id(rec.circuit_id, rec.backend_id)
        if sid in feats.graphs and (wanted is None or sid in wanted):
            out.append(feats.sample(sid, rec.mean_seconds))
    out.sort(key=lambda s: s.sample_id)
    hashes = {"manifest_hash": A.sha256_file(manifest), **feats.hashes}
    if selection:
        hashes["selection_hash"] = A.sha256_file(selection)
    if not out:
        raise UserError("no manifest rows match the extracted features" + (" and the selection" if selection else ""))
    return out, hashes


# -- commands ----------------------------------------------------------------------------------


def cmd_extract(project: Project, args) -> int:
    node_reg, glob_reg = project.registries()
    files = _corpus_files(project)
    if not files:
        raise UserError(f"empty corpus: no .qasm files in {project.path('corpus_dir')}")
    calibs = []
    for p in _calibration_files(project):
        calibs.append(BackendCalibration.from_file(p))
    if not calibs:
        raise UserError(f"no calibration files (*.txt) in {project.path('calibration_dir')}")
    errors: list[str] = []
    ids, rows, graphs = [], [], {}
    for path in files:
        try:
            circ = load_qasm(path, node_reg)
            gf = global_features(circ, glob_reg)
        except (QasmError, FeatureError, KeyError, ValueError) as exc:
            errors.append(f"{path.name}: {exc}")
            continue
        dag = to_dag(circ)
        pair_graphs = {}
        for cal in calibs:
            try:
                gs = graph_sample(dag, cal, node_reg, circ.name)
            except FeatureError as exc:
                errors.append(f"{path.name}@{cal.backend_id}: {exc}")
                continue
            pair_graphs[sample_id(circ.name, cal.backend_id)] = (gs.node_features, gs.edges)
        if not pair_graphs:
            continue
        ids.append(circ.name)
        rows.append(gf.to_vector())
        graphs.update(pair_graphs)
    if not ids:
        raise UserError(f"no circuit in the corpus could be extracted ({len(errors)} errors, see below)\n" + "\n".join(errors))
    meta = project.meta("extract", **_input_hashes(project))
    out = project.features_dir
    with A.ArtifactLock(project.artifact_dir):
        A.write_feature_table(out / "global.csv", ids, global_feature_names(glob_reg), np.stack(rows), meta)
        A.write_graph_table(out / "graphs.csv", graphs, meta)
        A.write_text(out / "errors.log", "".join(f"# {ln}\n" for ln in A.header_lines(meta)) + "".join(e + "\n" for e in errors))
    for e in errors:
        log.warning("skipped %s", e)
    print(f"extracted {len(ids)} circuits, {len(graphs)} circuit/backend pairs, {len(errors)} errors -> {out}")
    return 0


def cmd_sample(project: Project, args) -> int:
    feats = _load_features(project)
    sids = sorted(feats.graphs)
    if not sids:
        raise UserError("the feature archive holds no circuit/backend pairs")
    k = args.k if args.k is not None else plan_budget(len(sids), project.raw["confidence"], project.raw["margin"])
    if k > len(sids):
        raise UserError(f"K={k} exceeds the candidate pool of {len(sids)} circuit/backend pairs")
    table = feats.table.as_dict()
    pool = build_pool(
        sids,
        np.stack([table[s.rsplit("@", 1)[0]] for s in sids]),
        [feats.graphs[s][0] for s in sids],
        float(project.raw["alpha"]),
    )
    res = gsx_select(pool, k)
    meta = project.meta("sample", k=k, alpha=project.raw["alpha"], pool_hash=pool.digest(), **feats.hashes)
    rows = [(i + 1, sid, d) for i, (sid, d) in enumerate(zip(res.selected_ids, res.distances_at_selection))]
    out = project.artifact_dir / "selection.csv"
    with A.ArtifactLock(project.artifact_dir):
        A.write_text(out, A.render_table(["rank", "sample_id", "distance_at_selection"], rows, meta))
    print(f"selected {k} of {len(sids)} pairs -> {out}")
    return 0


def _train_outputs(project: Project, prefix: str, predictor: Predictor, report, meta: dict, model_path: Path,
                   train_ids: Sequence[str], test_ids: Sequence[str]) -> None:
    d = project.artifact_dir
    head = "".join(f"# {ln}\n" for ln in A.header_lines(meta))
    predictor.save(model_path, meta={k: str(v) for k, v in meta.items()})
    A.write_text(d / f"{prefix}_report.csv", head + report.to_text())
    A.write_text(d / f"{prefix}_split.csv", A.render_table(
        ["sample_id", "role"], [(i, "train") for i in train_ids] + [(i, "test") for i in test_ids], meta))
    ev = report.best_eval
    rows = [] if ev is None else [(ev.space, ev.n, ev.mse, ev.r_squared, ev.nmse)]
    A.write_text(d / f"{prefix}_eval.csv", A.render_table(["space", "n", "mse", "r_squared", "nmse"], rows, meta))


def cmd_train(project: Project, args) -> int:
    feats = _load_features(project)
    samples, hashes = _labeled(project, feats, args.selection)
    if len(samples) < 10:
        raise UserError(f"need at least 10 labelled samples to split 9:1, got {len(samples)}")
    cfg = project.train_config()
    tr, te = split(samples, 0.9, cfg.seed)
    predictor, report = train(tr, te, cfg)
    meta = project.meta("train", **hashes)
    with A.ArtifactLock(project.artifact_dir):
        _train_outputs(project, "train", predictor, report, meta, project.model_path,
                       [s.sample_id for s in tr], [s.sample_id for s in te])
    ev = report.best_eval
    r2 = f"{ev.r_squared:.4f}" if ev else "n/a"
    print(f"trained on {len(tr)}, tested on {len(te)}; best epoch {report.best_epoch}, "
          f"test MSE {report.best_test_mse:.6g}, R^2 {r2} -> {project.model_path}")
    return 0


def _load_model(path: Path) -> Predictor:
    if not path.exists():
        raise A.ArtifactError(f"missing prerequisite model {path}; run `qexec train` first")
    return Predictor.load(path)


def cmd_finetune(project: Project, args) -> int:
    pre_path = args.model or project.model_path
    pretrained = _load_model(pre_path)
    feats = _load_features(project)
    samples, hashes = _labeled(project, feats, args.selection)
    if args.backend:
        samples = [s for s in samples if s.backend_id == args.backend]
    k = int(project.raw["folds"])
    if len(samples) < k:
        raise UserError(f"need at least {k} samples for {k}-fold fine-tuning, got {len(samples)}")
    cfg = project.train_config()
    cv = fine_tune_cv(pretrained, samples, k, cfg)
    tr, te = split(samples, 0.9, cfg.seed) if len(samples) >= 10 else (samples, samples)
    tuned, report = train(tr, te, cfg, init=pretrained)
    meta = project.meta("finetune", pretrained_hash=A.sha256_file(pre_path), backend=args.backend or "*", **hashes)
    out_model = project.artifact_dir / "finetuned.qxw"
    with A.ArtifactLock(project.artifact_dir):
        A.write_text(project.artifact_dir / "finetune_cv.csv",
                     "".join(f"# {ln}\n" for ln in A.header_lines(meta)) + cv.to_text())
        _train_outputs(project, "finetune", tuned, report, meta, out_model,
                       [s.sample_id for s in tr], [s.sample_id for s in te])
    print(f"{k}-fold fine-tuning: mean best MSE {cv.mean_mse:.6g}, mean R^2 {cv.mean_r_squared:.4f} -> {out_model}")
    return 0


def _adhoc_samples(project: Project, qasm_files: Sequence[Path], backend: str) -> list[LabeledSample]:
    node_reg, glob_reg = project.registries()
    cal_path = project.path("calibration_dir") / f"{backend}.txt"
    if not cal_path.exists():
        raise UserError(f"no calibration for backend {backend!r} ({cal_path})")
    cal = BackendCalibration.from_file(cal_path)
    out = []
    for p in qasm_files:
        circ = load_qasm(p, node_reg)
        gs = graph_sample(to_dag(circ), cal, node_reg, circ.name)
        gs.backend_id = cal.backend_id
        out.append(LabeledSample(circ.name, cal.backend_id, global_features(circ, glob_reg).to_vector(), gs, 1.0))
    return out


def cmd_predict(project: Project, args) -> int:
    model_path = args.model or project.model_path
    predictor = _load_model(model_path)
    inputs = {"model_hash": A.sha256_file(model_path)}
    if args.qasm:
        if not args.backend:
            raise UserError("--qasm needs --backend")
        files = [Path(p) for p in args.qasm]
        samples = _adhoc_samples(project, files, args.backend)
        inputs["qasm_hash"] = A.tree_digest(files)
    else:
        feats = _load_features(project)
        sids = sorted(feats.graphs)
        if args.selection:
            sids = [s for s in _read_selection(args.selection) if s in feats.graphs]
            inputs["selection_hash"] = A.sha256_file(args.selection)
        if args.backend:
            sids = [s for s in sids if s.rsplit("@", 1)[1] == args.backend]
        if not sids:
            raise UserError("nothing to predict")
        samples = [feats.sample(s) for s in sids]
        inputs.update(feats.hashes)
    preds = predictor.predict(samples)
    meta = project.meta("predict", **inputs)
    out = Path(args.out) if args.out else project.artifact_dir / "predictions.csv"
    rows = [(p.circuit_id, p.backend_id, p.predicted_time) for p in preds]
    with A.ArtifactLock(project.artifact_dir):
        A.write_text(out, A.render_table(["circuit_id", "backend_id", "predicted_seconds"], rows, meta))
    for p in preds[:10]:
        print(f"{p.circuit_id}@{p.backend_id}: {p.predicted_time:.6g} s")
    if len(preds) > 10:
        print(f"... {len(preds) - 10} more")
    print(f"wrote {len(preds)} predictions -> {out}")
    return 0


def cmd_evaluate(project: Project, args) -> int:
    pred_path = Path(args.predictions) if args.predictions else project.artifact_dir / "predictions.csv"
    if not pred_path.exists():
        raise A.ArtifactError(f"missing prerequisite {pred_path}; run `qexec predict` first")
    manifest = project.path("manifest")
    if not manifest.exists():
        raise UserError(f"manifest not found: {manifest}")
    _, head, rows = A.read_table(pred_path)
    if head[:3] != ["circuit_id", "backend_id", "predicted_seconds"]:
        raise A.ArtifactError(f"{pred_path}: unexpected columns {head}")
    predicted = {(r[0], r[1]): float(r[2]) for r in rows}
    actual = {rec.key: rec.mean_seconds for rec in load_manifest(manifest)}
    keys = sorted(set(predicted) & set(actual))
    if not keys:
        raise UserError(f"no (circuit_id, backend_id) pairs in common between {pred_path.name} and the manifest")
    y = np.array([actual[k] for k in keys])
    yhat = np.array([predicted[k] for k in keys])
    space = project.raw["target_space"]
    reports = [evaluate(to_model_space(y, space), to_model_space(yhat, space), space)]
    if space != "seconds":
        reports.append(evaluate(y, yhat, "seconds"))
    meta = project.meta("evaluate", predictions_hash=A.sha256_file(pred_path), manifest_hash=A.sha256_file(manifest))
    out = project.artifact_dir / "evaluation.csv"
    with A.ArtifactLock(project.artifact_dir):
        A.write_text(out, A.render_table(["space", "n", "mse", "r_squared", "nmse"],
                                         [(r.space, r.n, r.mse, r.r_squared, r.nmse) for r in reports], meta))
    for r in reports:
        print(f"[{r.space}] n={r.n} MSE={r.mse:.6g} R^2={r.r_squared:.4f} NMSE={r.nmse:.4f}")
    return 0


def cmd_importance(project: Project, args) -> int:
    model_path = args.model or project.model_path
    predictor = _load_model(model_path)
    if predictor.global_mean is None:
        raise A.ArtifactError(f"{model_path} carries no training-set feature mean to use as SHAP baseline")
    feats = _load_features(project)
    sids = sorted(feats.graphs)
    if args.selection:
        sids = [s for s in _read_selection(args.selection) if s in feats.graphs]
    if args.limit:
        sids = sids[: args.limit]
    if not sids:
        raise UserError("no samples to explain")
    n_perm = int(project.raw["n_permutations"])
    if n_perm < 1:
        raise UserError("n_permutations must be >= 1")
    _, glob_reg = project.registries()
    rep = shap_importance(predictor, [feats.sample(s) for s in sids], predictor.global_mean,
                          global_feature_names(glob_reg), n_perm, project.seed)
    meta = project.meta("importance", model_hash=A.sha256_file(model_path), n_samples=len(sids),
                        n_permutations=n_perm, **feats.hashes)
    head = "".join(f"# {ln}\n" for ln in A.header_lines(meta))
    with A.ArtifactLock(project.artifact_dir):
        A.write_text(project.artifact_dir / "importance.csv", head + rep.to_text())
        A.write_text(project.artifact_dir / "importance_top10.csv",
                     A.render_table(["feature", "mean_abs_shap"], rep.top(10), meta))
    for name, v in rep.top(10):
        print(f"{name:28s} {v:.6g}")
    return 0


def cmd_repeats(project: Project, args) -> int:
    manifest = project.path("manifest")
    if not manifest.exists():
        raise UserError(f"manifest not found: {manifest}")
    r, z = float(project.raw["precision"]), float(project.raw["z"])
    rows = []
    for rec in load_manifest(manifest):
        plan = plan_repeats(rec.repeats, r, z)
        rows.append((rec.circuit_id, rec.backend_id, len(rec.repeats), plan.mean, plan.stdev, plan.n,
                     "yes" if len(rec.repeats) >= plan.n else "no"))
    meta = project.meta("repeats", manifest_hash=A.sha256_file(manifest), precision=r, z=z)
    out = project.artifact_dir / "repeats.csv"
    with A.ArtifactLock(project.artifact_dir):
        A.write_text(out, A.render_table(
            ["circuit_id", "backend_id", "observed", "mean_s", "stdev_s", "required", "enough"], rows, meta))
    short = sum(row[-1] == "no" for row in rows)
    print(f"{len(rows)} records, {short} need more repeats -> {out}")
    return 0


# -- argument parsing --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


COMMANDS = {
    "extract": cmd_extract,
    "sample": cmd_sample,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "repeats": cmd_repeats,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="project JSON config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="qexec", description="Quantum circuit execution-time prediction pipeline.")
    p.add_argument("--version", action="version", version=f"qexec {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("extract", parents=[common], help="parse the corpus and write feature tables")
    s = sub.add_parser("sample", parents=[common], help="greedy input-space selection of K pairs")
    s.add_argument("--k", type=_positive_int, help="number of pairs (default: sample-size formula)")
    s.add_argument("--alpha", type=float, help="weight of the global-feature distance")

    def train_flags(sp):
        sp.add_argument("--epochs", type=_positive_int)
        sp.add_argument("--batch-size", dest="batch_size", type=_positive_int)
        sp.add_argument("--learning-rate", dest="learning_rate", type=float)
        sp.add_argument("--selection", type=Path, help="restrict to ids in a selection.csv")

    train_flags(sub.add_parser("train", parents=[common], help="pretrain on the manifest"))
    f = sub.add_parser("finetune", parents=[common], help="k-fold fine-tuning from a pretrained model")
    train_flags(f)
    f.add_argument("--model", type=Path, help="pretrained weights (default: config model)")
    f.add_argument("--backend", help="only use samples from this backend")
    f.add_argument("--folds", type=_positive_int)

    pr = sub.add_parser("predict", parents=[common], help="predict execution times")
    pr.add_argument("--model", type=Path)
    pr.add_argument("--qasm", nargs="+", help="predict these files instead of the extracted corpus")
    pr.add_argument("--backend")
    pr.add_argument("--selection", type=Path)
    pr.add_argument("--out", type=Path)

    ev = sub.add_parser("evaluate", parents=[common], help="compare predictions with the manifest")
    ev.add_argument("--predictions", type=Path)

    im = sub.add_parser("importance", parents=[common], help="Shapley importance of the global features")
    im.add_argument("--model", type=Path)
    im.add_argument("--selection", type=Path)
    im.add_argument("--limit", type=_positive_int, help="explain only the first N samples")
    im.add_argument("--n-permutations", dest="n_permutations", type=_positive_int)

    rp = sub.add_parser("repeats", parents=[common], help="required timing repeats per record")
    rp.add_argument("--precision", type=float)
    rp.add_argument("--z", type=float)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    over_keys = ("seed", "alpha", "epochs", "batch_size", "learning_rate", "folds", "n_permutations", "precision", "z")
    overrides = {k: getattr(args, k, None) for k in over_keys}
    try:
        project = load_project(args.config, overrides)
        return COMMANDS[args.command](project, args)
    except USER_ERRORS as exc:
        msg = str(exc) if not isinstance(exc, FileNotFoundError) else f"file not found: {exc.filename}"
        print(f"qexec {args.command}: error: {msg}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        print(f"qexec {args.command}: internal error", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
