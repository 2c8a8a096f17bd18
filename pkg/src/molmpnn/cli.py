"""Command-line entry points for the molmpnn workbench.

One command per run: ``featurize`` turns a CSV/SDF dataset into a binary graph
cache, ``train``/``evaluate``/``predict`` operate on caches and checkpoints,
``relevance`` exports per-atom scores, ``select-features``/``tune`` drive the
search loops, ``diversity`` clusters fingerprints and ``ablate3d`` reruns
training across the 2D / 3D / noisy-3D arms.

Exit codes: 0 on success, 1 on input errors (unreadable files, mismatched
manifests, bad flag values), 2 on internal invariant violations.  Flags can be
pre-seeded from an INI config file (section per command); explicit flags win.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import elements
from .chem.mol import Molecule
from .chem.sdf import read_sdf, SdfError
from .chem.smiles import parse_smiles, SmilesError
from .chem.standardize import standardize, perturb_coordinates, EmptyMoleculeError
from .container import read_container, write_container, ContainerError
from .depict import relevance_svg
from .diversity import cluster, fingerprint, shannon_entropy
from .featurize import FeatureMask, FeaturizedGraph, featurize
from .model import (
    Model,
    ModelSpec,
    VARIANTS,
    TASKS,
    load_checkpoint,
    make_batch,
    save_checkpoint,
)
from .selection import SelectionConfig, select_features
from .training import (
    TrainConfig,
    TrainingDivergedError,
    activity_threshold,
    blind_split,
    evaluate_model,
    train_model,
)
from .tuning import AllTrialsPrunedError, tune
from . import report

log = logging.getLogger("molmpnn")

CACHE_KIND = "graph_cache"


class CliInputError(Exception):
    """User-facing input problem; maps to exit code 1."""


# -- small shared helpers -----------------------------------------------------------


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _aggregate(values: list[float]) -> dict:
    """Mean with a 95% t-interval margin of error across seeds."""
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    if n == 0 or np.isnan(arr).any():
        return {"mean": float("nan"), "moe95": float("nan"), "n": int(n)}
    mean = float(arr.mean())
    if n < 2:
        return {"mean": mean, "moe95": 0.0, "n": int(n)}
    sem = float(arr.std(ddof=1)) / float(np.sqrt(n))
    moe = float(stats.t.ppf(0.975, n - 1)) * sem
    return {"mean": mean, "moe95": moe, "n": int(n)}


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(tok) for tok in text.replace(" ", "").split(",") if tok]
    except ValueError:
        raise CliInputError(f"bad seed list {text!r}; expected e.g. '0,1,2,3,4'")
    if not seeds:
        raise CliInputError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise CliInputError(f"duplicate seeds in {text!r}")
    return seeds


def _parse_mode(text: str) -> tuple[str, float]:
    """'2d' | '3d' | 'noisy3d:SIGMA' -> (mode, sigma)."""
    if text in ("2d", "3d"):
        return text, 0.0
    if text.startswith("noisy3d:"):
        try:
            sigma = float(text.split(":", 1)[1])
        except ValueError:
            raise CliInputError(f"bad noise level in --mode {text!r}")
        if not np.isfinite(sigma) or sigma < 0:
            raise CliInputError(f"noise level must be finite and >= 0, got {sigma}")
        return "noisy3d", sigma
    raise CliInputError(f"unknown mode {text!r}; expected 2d, 3d or noisy3d:SIGMA")


def _run_manifest(outdir: Path, command: str, args: argparse.Namespace,
                  inputs: list[Path]) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "command") and not k.startswith("_")
    }
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256_file(p) for p in inputs},
    }
    _write_json(outdir / "manifest.json", manifest)


# -- graph cache --------------------------------------------------------------------


def write_graph_cache(path: Path, graphs: list[FeaturizedGraph],
                      mode: str, sigma: float) -> None:
    if not graphs:
        raise CliInputError("no graphs survived featurization; refusing to write an empty cache")
    mask = graphs[0].mask
    has_labels = all(g.y is not None for g in graphs)
    if not has_labels and any(g.y is not None for g in graphs):
        raise CliInputError("mixed labeled/unlabeled molecules in one cache")
    meta = {
        "kind": CACHE_KIND,
        "feature_manifest": mask.manifest(),
        "manifest_hash": mask.manifest_hash(),
        "mode": mode,
        "sigma": sigma,
        "count": len(graphs),
        "names": [g.name for g in graphs],
        "smiles": [g.smiles for g in graphs],
        "has_labels": has_labels,
    }
    arrays: dict[str, np.ndarray] = {}
    for i, g in enumerate(graphs):
        arrays[f"g{i}/x"] = g.x
        arrays[f"g{i}/edge_index"] = g.edge_index.astype(np.float64)
        arrays[f"g{i}/edge_attr"] = g.edge_attr
        arrays[f"g{i}/u"] = g.u
    if has_labels:
        arrays["y"] = np.asarray([g.y for g in graphs], dtype=np.float64)
    write_container(path, meta, arrays)


def read_graph_cache(path: Path) -> tuple[list[FeaturizedGraph], dict]:
    meta, arrays = read_container(path)
    if meta.get("kind") != CACHE_KIND:
        raise CliInputError(f"{path}: not a graph cache (kind={meta.get('kind')!r})")
    manifest = meta["feature_manifest"]
    mask = FeatureMask.from_active(
        list(manifest["atom"]) + list(manifest["bond"]) + list(manifest["global"]))
    if mask.manifest_hash() != meta["manifest_hash"]:
        raise CliInputError(f"{path}: feature manifest does not match its stored hash")
    y = arrays.get("y")
    graphs = []
    for i in range(meta["count"]):
        graphs.append(FeaturizedGraph(
            x=arrays[f"g{i}/x"],
            edge_index=arrays[f"g{i}/edge_index"].astype(np.int64),
            edge_attr=arrays[f"g{i}/edge_attr"],
            u=arrays[f"g{i}/u"],
            y=float(y[i]) if y is not None else None,
            name=meta["names"][i],
            smiles=meta["smiles"][i],
            mask=mask,
        ))
    return graphs, meta


def _require_labels(graphs: list[FeaturizedGraph], what: str) -> np.ndarray:
    if any(g.y is None for g in graphs):
        raise CliInputError(f"{what} requires a labeled cache")
    return np.asarray([g.y for g in graphs], dtype=np.float64)


def _check_manifest(checkpoint_meta: dict, cache_meta: dict) -> None:
    ck = checkpoint_meta.get("feature_manifest_hash")
    ca = cache_meta.get("manifest_hash")
    if ck != ca:
        raise CliInputError(
            "feature manifest mismatch: checkpoint was trained on "
            f"{ck} but the cache was featurized as {ca}")


# -- dataset ingestion --------------------------------------------------------------


def _load_rows(path: Path, label_prop: str) -> list[dict]:
    """Uniform rows from CSV (name,smiles[,label]) or SDF.

    Each row: {"row": 1-based data row, "name", "mol": Molecule | None,
    "label": str | None, "error": str | None}.  Molecules are raw (not yet
    standardized) so featurization failures stay attributable to their row.
    """
    suffix = path.suffix.lower()
    rows: list[dict] = []
    if suffix in (".csv", ".smi", ".txt"):
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise CliInputError(f"{path}: empty CSV")
            missing = {"name", "smiles"} - set(reader.fieldnames)
            if missing:
                raise CliInputError(f"{path}: missing CSV columns {sorted(missing)}")
            has_label = "label" in reader.fieldnames
            for i, rec in enumerate(reader, start=1):
                name = (rec.get("name") or f"row{i}").strip()
                smiles = (rec.get("smiles") or "").strip()
                label = rec.get("label") if has_label else None
                row = {"row": i, "name": name, "mol": None, "label": label, "error": None}
                try:
                    row["mol"] = parse_smiles(smiles, name=name)
                except (SmilesError, ValueError) as exc:
                    row["error"] = str(exc)
                rows.append(row)
    elif suffix in (".sdf", ".mol", ".sd"):
        for i, (mol, props) in enumerate(read_sdf(path), start=1):
            name = mol.name or f"record{i}"
            rows.append({
                "row": i,
                "name": name,
                "mol": mol,
                "label": props.get(label_prop),
                "error": None,
            })
    else:
        raise CliInputError(f"{path}: unsupported dataset extension {suffix!r}")
    if not rows:
        raise CliInputError(f"{path}: no data rows")
    return rows


def _convert_label(text: str | None, ic50_threshold: float | None):
    if text is None or text == "":
        return None
    value = float(text)
    if ic50_threshold is not None:
        return float(activity_threshold(
            np.asarray([value]), threshold_nm=ic50_threshold)[0])
    return value


def _featurize_row(row: dict, mask: FeatureMask, mode: str, sigma: float,
                   ic50_threshold: float | None):
    """(FeaturizedGraph | None, error | None) for one dataset row."""
    if row["error"]:
        return None, row["error"]
    mol = row["mol"]
    try:
        y = _convert_label(row["label"], ic50_threshold)
        if mode in ("3d", "noisy3d") and not mol.has_3d:
            raise ValueError(f"mode {mode} needs 3D coordinates (SDF input)")
        if mode == "noisy3d":
            mol = perturb_coordinates(mol, sigma, seed=row["row"])
        elif mode == "2d":
            mol = mol.copy()
            mol.has_3d = False
        mol = standardize(mol)
        return featurize(mol, mask, y=y), None
    except (SmilesError, EmptyMoleculeError, ValueError) as exc:
        return None, str(exc)


def _featurize_rows(rows: list[dict], mask: FeatureMask, mode: str, sigma: float,
                    ic50_threshold: float | None, workers: int = 1
                    ) -> tuple[list[FeaturizedGraph], int]:
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                _featurize_row, rows,
                [mask] * len(rows), [mode] * len(rows),
                [sigma] * len(rows), [ic50_threshold] * len(rows),
                chunksize=16))
    else:
        results = [_featurize_row(r, mask, mode, sigma, ic50_threshold) for r in rows]
    graphs, failed = [], 0
    for row, (graph, error) in zip(rows, results):
        if error is not None:
            failed += 1
            log.warning("row %d (%s) skipped: %s", row["row"], row["name"], error)
        else:
            graphs.append(graph)
    return graphs, failed


def _load_mask(path: str | None) -> FeatureMask:
    if path is None:
        return FeatureMask.full()
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    if isinstance(spec, dict):
        names = list(spec.get("atom", [])) + list(spec.get("bond", [])) \
            + list(spec.get("global", []))
    else:
        names = list(spec)
    return FeatureMask.from_active(names)


# -- training helpers ---------------------------------------------------------------


def _spec_from_args(args, cache_meta: dict) -> ModelSpec:
    manifest = cache_meta["feature_manifest"]
    return ModelSpec(
        variant=args.variant,
        task=args.task,
        hidden_channels=args.hidden,
        dropout=args.dropout,
        attention_heads=args.heads,
        n_atom_features=len(manifest["atom"]),
        n_bond_features=len(manifest["bond"]),
        n_global_features=len(manifest["global"]),
    )


def _three_way_split(labels: np.ndarray, seed: int, stratify: bool):
    """80/20 blind test split, then 80/20 train/val inside the pool."""
    pool, test = blind_split(labels, seed=seed, test_fraction=0.2, stratify=stratify)
    inner_pool, inner_val = blind_split(labels[pool], seed=seed, test_fraction=0.2,
                                        stratify=stratify)
    return pool[inner_pool], pool[inner_val], test


def _train_one_seed(graphs: list[FeaturizedGraph], labels: np.ndarray,
                    spec: ModelSpec, config: TrainConfig):
    stratify = config.task == "classification"
    tr, va, te = _three_way_split(labels, config.seed, stratify)
    model = Model(spec, seed=config.seed)
    result = train_model(model, [graphs[i] for i in tr], [graphs[i] for i in va], config)
    test_metrics = evaluate_model(model, [graphs[i] for i in te])
    return model, result, test_metrics


_AGG_SKIP = {"n"}


def _aggregate_records(records: list[dict]) -> dict:
    keys = sorted(k for k in records[0] if k not in _AGG_SKIP
                  and isinstance(records[0][k], float))
    return {k: _aggregate([r[k] for r in records]) for k in keys}


# -- commands -----------------------------------------------------------------------


def cmd_featurize(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise CliInputError(f"input not found: {path}")
    mode, sigma = _parse_mode(args.mode)
    if mode != "2d" and path.suffix.lower() not in (".sdf", ".mol", ".sd"):
        raise CliInputError(f"mode {mode!r} needs an SDF input with coordinates")
    mask = _load_mask(args.mask)
    rows = _load_rows(path, args.label_prop)
    graphs, failed = _featurize_rows(rows, mask, mode, sigma,
                                     args.ic50_threshold, args.workers)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph_cache(out, graphs, mode, sigma)
    log.info("wrote %d graphs to %s (%d rows skipped)", len(graphs), out, failed)
    return 0


def cmd_train(args) -> int:
    cache_path = Path(args.cache)
    graphs, cache_meta = read_graph_cache(cache_path)
    labels = _require_labels(graphs, "train")
    if args.task == "classification" and len(np.unique(labels)) < 2:
        raise CliInputError("training cache has a single class")
    seeds = _parse_seeds(args.seeds)
    spec = _spec_from_args(args, cache_meta)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    records, histories = [], {}
    for seed in seeds:
        config = TrainConfig(
            lr=args.lr, batch_size=args.batch_size, epochs=args.epochs,
            seed=seed, sampler=args.sampler, augment_minority=args.augment_minority,
            task=args.task,
        )
        model, result, test_metrics = _train_one_seed(graphs, labels, spec, config)
        save_checkpoint(outdir / f"seed_{seed}.ckpt", model,
                        cache_meta["manifest_hash"],
                        extra_meta={"seed": seed, "train_cache": str(cache_path)})
        record = {"seed": seed, "n": test_metrics.pop("n")}
        record.update({k: float(v) for k, v in test_metrics.items()})
        records.append(record)
        histories[f"seed {seed}"] = (result.train_loss, result.val_loss)
        log.info("seed %d: %s", seed,
                 " ".join(f"{k}={v:.4f}" for k, v in sorted(record.items())
                          if isinstance(v, float)))

    aggregate = _aggregate_records(records)
    metrics = {
        "variant": spec.variant, "task": spec.task, "seeds": seeds,
        "records": records, "aggregate": aggregate,
    }
    _write_json(outdir / "metrics.json", metrics)
    header = ["seed"] + sorted(k for k in records[0] if k != "seed")
    _write_csv(outdir / "metrics.csv", header,
               [[r["seed"]] + [r[k] for k in header[1:]] for r in records])
    report.loss_curves(histories, outdir / "loss_curves.png")
    bar_keys = ("f1", "accuracy", "auc", "rmse")
    report.metric_bars({k: v for k, v in aggregate.items() if k in bar_keys},
                       outdir / "metric_bars.png")
    _run_manifest(outdir, "train", args, [cache_path])
    log.info("aggregate: %s",
             " ".join(f"{k}={v['mean']:.4f}±{v['moe95']:.4f}"
                      for k, v in sorted(aggregate.items())))
    return 0


def _load_pair(args) -> tuple[Model, dict, list[FeaturizedGraph], dict]:
    model, ckpt_meta = load_checkpoint(Path(args.checkpoint))
    graphs, cache_meta = read_graph_cache(Path(args.cache))
    _check_manifest(ckpt_meta, cache_meta)
    return model, ckpt_meta, graphs, cache_meta


def cmd_evaluate(args) -> int:
    model, _, graphs, _ = _load_pair(args)
    _require_labels(graphs, "evaluate")
    metrics = {k: (float(v) if isinstance(v, (float, np.floating)) else v)
               for k, v in evaluate_model(model, graphs).items()}
    payload = json.dumps(metrics, indent=2, sort_keys=True)
    print(payload)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    model, _, graphs, _ = _load_pair(args)
    preds = []
    for start in range(0, len(graphs), 64):
        chunk = graphs[start:start + 64]
        preds.append(model.predict(make_batch(chunk)))
    preds = np.concatenate(preds)
    _write_csv(Path(args.out), ["name", "prediction"],
               [[g.name, f"{p:.10g}"] for g, p in zip(graphs, preds)])
    log.info("wrote %d predictions to %s", len(graphs), args.out)
    return 0


def cmd_relevance(args) -> int:
    model, _, graphs, _ = _load_pair(args)
    svg_dir = Path(args.svg_dir) if args.svg_dir else None
    if svg_dir:
        svg_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for g in graphs:
        if not g.smiles:
            raise CliInputError(
                f"{g.name}: cache stores no SMILES; relevance needs re-parsed molecules")
        mol = standardize(parse_smiles(g.smiles, name=g.name))
        if len(mol) != g.x.shape[0]:
            raise CliInputError(
                f"{g.name}: re-parsed molecule has {len(mol)} atoms "
                f"but the cached graph has {g.x.shape[0]}")
        batch = make_batch([g])
        out = model.forward(batch, training=False)
        scores = model.node_relevance(out["node_embeddings"].data,
                                      batch.node_graph, batch.n_graphs)
        for idx, atom in enumerate(mol.atoms):
            rows.append([g.name, idx, elements.symbol(atom.atomic_number),
                         f"{scores[idx]:.6f}"])
        if svg_dir:
            svg = relevance_svg(mol, scores, title=g.name)
            safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in g.name)
            (svg_dir / f"{safe}.svg").write_text(svg, encoding="utf-8")
    _write_csv(Path(args.out), ["molecule", "atom_index", "element", "score"], rows)
    log.info("wrote %d atom scores to %s", len(rows), args.out)
    return 0


def cmd_select_features(args) -> int:
    graphs, _ = read_graph_cache(Path(args.cache))
    _require_labels(graphs, "select-features")
    config = SelectionConfig(
        variant=args.variant, hidden_channels=args.hidden, lr=args.lr,
        batch_size=args.batch_size, epochs=args.epochs, dropout=args.dropout,
        cv_folds=args.folds, seed=args.seed, max_rounds=args.max_rounds,
    )
    result = select_features(graphs, config)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "mask.json", result.mask.manifest())
    _write_json(outdir / "selection.json", {
        "baseline_f1": result.baseline_f1,
        "final_f1": result.final_f1,
        "eliminated": result.eliminated,
        "rounds": result.rounds,
    })
    _write_csv(outdir / "ranking.csv",
               ["feature", "cumulative_points", "final_rank", "retained",
                "points_per_round"],
               [[r["feature"], r["cumulative_points"], r["final_rank"],
                 int(r["retained"]), ";".join(str(p) for p in r["points_per_round"])]
                for r in result.ranking])
    report.ranking_chart(result.ranking, outdir / "ranking.png")
    _run_manifest(outdir, "select-features", args, [Path(args.cache)])
    log.info("retained %d features (F1 %.4f -> %.4f); eliminated: %s",
             len(result.mask.active_names()), result.baseline_f1, result.final_f1,
             ", ".join(result.eliminated) or "none")
    return 0


def cmd_tune(args) -> int:
    graphs, cache_meta = read_graph_cache(Path(args.cache))
    _require_labels(graphs, "tune")
    manifest = cache_meta["feature_manifest"]
    dims = (len(manifest["atom"]), len(manifest["bond"]), len(manifest["global"]))
    result = tune(graphs, variant=args.variant, n_trials=args.trials,
                  seed=args.seed, task=args.task, cv_folds=args.folds,
                  epochs=args.epochs, lr=args.lr, feature_dims=dims)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    trial_dicts = [vars(t).copy() for t in result.trials]
    _write_json(outdir / "trials.json", {
        "trials": trial_dicts, "pareto_ids": result.pareto_ids,
        "best_id": result.best_id,
    })
    _write_json(outdir / "best.json", vars(result.best).copy())
    _write_csv(outdir / "pareto.csv",
               ["trial_id", "hidden_channels", "dropout", "batch_size",
                "loss_gap", "score", "pruned", "pareto"],
               [[t.trial_id, t.hidden_channels, f"{t.dropout:.6f}", t.batch_size,
                 f"{t.loss_gap:.6f}", f"{t.score:.6f}", int(t.pruned), int(t.pareto)]
                for t in result.trials])
    score_name = "F1" if args.task == "classification" else "RMSE"
    report.pareto_scatter(result.trials, outdir / "pareto.png", score_name=score_name)
    _run_manifest(outdir, "tune", args, [Path(args.cache)])
    best = result.best
    log.info("best trial %d: hidden=%d dropout=%.3f batch=%d score=%.4f gap=%.4f",
             best.trial_id, best.hidden_channels, best.dropout, best.batch_size,
             best.score, best.loss_gap)
    return 0


def cmd_diversity(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise CliInputError(f"input not found: {path}")
    rows = _load_rows(path, args.label_prop)
    mols, names = [], []
    for row in rows:
        if row["error"]:
            log.warning("row %d (%s) skipped: %s", row["row"], row["name"], row["error"])
            continue
        try:
            mols.append(standardize(row["mol"]))
            names.append(row["name"])
        except EmptyMoleculeError as exc:
            log.warning("row %d (%s) skipped: %s", row["row"], row["name"], exc)
    if not mols:
        raise CliInputError("no molecules survived parsing")
    if args.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.workers) as pool:
            fps = list(pool.map(fingerprint, mols))
    else:
        fps = [fingerprint(m) for m in mols]
    report_ = cluster(fps, threshold=args.threshold)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(outdir / "clusters.csv", ["molecule", "cluster"],
               [[n, int(c)] for n, c in zip(names, report_.assignments)])
    _write_json(outdir / "summary.json", {
        "molecules": len(mols),
        "clusters": len(report_.sizes),
        "singletons": report_.singletons,
        "entropy_bits": report_.entropy_bits,
        "threshold": args.threshold,
    })
    report.cluster_histogram(report_.sizes, outdir / "cluster_sizes.png")
    _run_manifest(outdir, "diversity", args, [path])
    log.info("%d molecules -> %d clusters (%d singletons), entropy %.4f bits",
             len(mols), len(report_.sizes), report_.singletons, report_.entropy_bits)
    return 0


def cmd_ablate3d(args) -> int:
    path = Path(args.input)
    if path.suffix.lower() not in (".sdf", ".mol", ".sd"):
        raise CliInputError("ablate3d needs an SDF input with 3D coordinates")
    rows = _load_rows(path, args.label_prop)
    mask = _load_mask(args.mask)
    seeds = _parse_seeds(args.seeds)
    arms = [("3d", "3d", 0.0), ("noisy3d", "noisy3d", args.sigma), ("2d", "2d", 0.0)]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    arm_records: dict[str, list[dict]] = {}
    for arm_name, mode, sigma in arms:
        graphs, failed = _featurize_rows(rows, mask, mode, sigma,
                                         args.ic50_threshold, args.workers)
        if failed:
            log.warning("arm %s: %d rows skipped", arm_name, failed)
        labels = _require_labels(graphs, "ablate3d")
        spec = _spec_from_args(args, {"feature_manifest": mask.manifest()})
        records = []
        for seed in seeds:
            config = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                                 epochs=args.epochs, seed=seed,
                                 sampler=args.sampler, task=args.task)
            _, _, test_metrics = _train_one_seed(graphs, labels, spec, config)
            record = {"seed": seed, "n": test_metrics.pop("n")}
            record.update({k: float(v) for k, v in test_metrics.items()})
            records.append(record)
            log.info("arm %s seed %d: %s", arm_name, seed,
                     " ".join(f"{k}={v:.4f}" for k, v in sorted(record.items())
                              if isinstance(v, float)))
        arm_records[arm_name] = records

    aggregates = {arm: _aggregate_records(records)
                  for arm, records in arm_records.items()}
    metric_names = sorted(next(iter(aggregates.values())).keys())
    _write_csv(outdir / "ablation.csv",
               ["arm", "metric", "mean", "moe95"],
               [[arm, m, f"{aggregates[arm][m]['mean']:.6f}",
                 f"{aggregates[arm][m]['moe95']:.6f}"]
                for arm in arm_records for m in metric_names])
    _write_json(outdir / "ablation.json",
                {"records": arm_records, "aggregate": aggregates, "seeds": seeds})
    key_metric = "f1" if args.task == "classification" else "rmse"
    report.ablation_bars({arm: aggregates[arm][key_metric] for arm in arm_records},
                         key_metric, outdir / "ablation_bars.png")
    _run_manifest(outdir, "ablate3d", args, [path])
    for arm in arm_records:
        agg = aggregates[arm][key_metric]
        log.info("arm %s: %s=%.4f±%.4f", arm, key_metric, agg["mean"], agg["moe95"])
    return 0


# -- argument plumbing --------------------------------------------------------------

# Converters shared by flags and config-file values; keys are destination names.
_OPTION_TYPES = {
    "epochs": int, "batch_size": int, "hidden": int, "heads": int,
    "folds": int, "seed": int, "trials": int, "max_rounds": int, "workers": int,
    "lr": float, "dropout": float, "sigma": float, "threshold": float,
    "ic50_threshold": float,
    "augment_minority": lambda s: s.lower() in ("1", "true", "yes", "on"),
}

_DEFAULTS = {
    "mode": "2d", "label_prop": "label", "mask": None, "ic50_threshold": None,
    "variant": "BMP", "task": "classification", "seeds": "0,1,2,3,4",
    "epochs": 50, "lr": 0.003, "batch_size": 32, "hidden": 250, "dropout": 0.25,
    "heads": 1, "sampler": "weighted", "augment_minority": False, "out": None,
    "svg_dir": None, "folds": 5, "seed": 0, "max_rounds": 10, "trials": 20,
    "threshold": 0.70, "sigma": 0.5, "workers": 1,
}


def _add(parser: argparse.ArgumentParser, *names, **kwargs) -> None:
    # default=None so the config file can tell "unset" apart from "explicit".
    kwargs.setdefault("default", None)
    parser.add_argument(*names, **kwargs)


def _training_flags(p: argparse.ArgumentParser) -> None:
    _add(p, "--variant", choices=VARIANTS)
    _add(p, "--task", choices=TASKS)
    _add(p, "--epochs", type=int)
    _add(p, "--lr", type=float)
    _add(p, "--batch-size", type=int)
    _add(p, "--hidden", type=int)
    _add(p, "--dropout", type=float)
    _add(p, "--heads", type=int)
    _add(p, "--sampler", choices=("weighted", "uniform"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molmpnn",
        description="Molecular property prediction with message-passing networks.")
    parser.add_argument("--config", default=None,
                        help="INI file with one section per command; flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="CSV/SDF dataset -> binary graph cache")
    p.add_argument("input")
    p.add_argument("--output", "-o", required=True)
    _add(p, "--mode", help="2d, 3d or noisy3d:SIGMA")
    _add(p, "--mask", help="JSON feature mask (manifest or list of names)")
    _add(p, "--ic50-threshold", type=float,
         help="treat labels as IC50 nM; active iff <= threshold")
    _add(p, "--label-prop", help="SDF property holding the label")
    _add(p, "--workers", type=int)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one variant across seeds")
    p.add_argument("--cache", required=True)
    p.add_argument("--outdir", required=True)
    _add(p, "--seeds", help="comma-separated seed list")
    _add(p, "--augment-minority", action="store_const", const=True,
         help="oversample the minority class with re-featurized SMILES copies")
    _training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled cache")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    _add(p, "--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-molecule probabilities/values CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("relevance", help="per-atom normalized relevance scores")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    _add(p, "--svg-dir", help="write one colored-depiction SVG per molecule")
    p.set_defaults(func=cmd_relevance)

    p = sub.add_parser("select-features",
                       help="iterative CV feature elimination with points ranking")
    p.add_argument("--cache", required=True)
    p.add_argument("--outdir", required=True)
    _add(p, "--variant", choices=VARIANTS)
    _add(p, "--hidden", type=int)
    _add(p, "--lr", type=float)
    _add(p, "--batch-size", type=int)
    _add(p, "--epochs", type=int)
    _add(p, "--dropout", type=float)
    _add(p, "--folds", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--max-rounds", type=int)
    p.set_defaults(func=cmd_select_features)

    p = sub.add_parser("tune", help="random search with pruning and Pareto front")
    p.add_argument("--cache", required=True)
    p.add_argument("--outdir", required=True)
    _add(p, "--variant", choices=VARIANTS)
    _add(p, "--task", choices=TASKS)
    _add(p, "--trials", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--folds", type=int)
    _add(p, "--epochs", type=int)
    _add(p, "--lr", type=float)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("diversity", help="fingerprint clustering and entropy")
    p.add_argument("input")
    p.add_argument("--outdir", required=True)
    _add(p, "--threshold", type=float)
    _add(p, "--label-prop")
    _add(p, "--workers", type=int)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("ablate3d",
                       help="retrain across the 2D / 3D / noisy-3D arms")
    p.add_argument("input")
    p.add_argument("--outdir", required=True)
    _add(p, "--sigma", type=float, help="noise level for the noisy-3D arm")
    _add(p, "--seeds")
    _add(p, "--mask")
    _add(p, "--ic50-threshold", type=float)
    _add(p, "--label-prop")
    _add(p, "--workers", type=int)
    _training_flags(p)
    p.set_defaults(func=cmd_ablate3d)

    return parser


def _merge_config(args: argparse.Namespace) -> None:
    """Fill unset options from the INI section named after the command."""
    if args.config:
        ini = configparser.ConfigParser()
        read = ini.read(args.config, encoding="utf-8")
        if not read:
            raise CliInputError(f"config file not found: {args.config}")
        if ini.has_section(args.command):
            for key, raw in ini.items(args.command):
                dest = key.replace("-", "_")
                if not hasattr(args, dest):
                    raise CliInputError(
                        f"config [{args.command}] has unknown key {key!r}")
                if getattr(args, dest) is None:
                    convert = _OPTION_TYPES.get(dest, str)
                    try:
                        setattr(args, dest, convert(raw))
                    except ValueError:
                        raise CliInputError(
                            f"config [{args.command}] {key} = {raw!r} is not "
                            f"a valid value")
    for dest, value in _DEFAULTS.items():
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except (CliInputError, FileNotFoundError, SmilesError, SdfError,
            EmptyMoleculeError, ContainerError, AllTrialsPrunedError,
            ValueError) as exc:
        log.error("%s", exc)
        return 1
    except TrainingDivergedError as exc:
        log.error("training diverged: %s %s", exc, exc.diagnostics)
        return 2
    except Exception:  # pragma: no cover - safety net for unexpected bugs
        log.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
