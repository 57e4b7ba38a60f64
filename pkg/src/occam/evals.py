"""Report builders behind the service endpoints and CLI commands.

Each runner loads datasets through the manifest backend, computes one
experiment family (object discovery, foreground detection, robust
classification, common/counter gap), and returns a JSON-ready report plus
CSV table mirrors.  All iteration is in sorted-sample-id order and every
reduction is order-independent, so reports are byte-identical across reruns
and thread counts.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .backend import (
    Dataset,
    EnsembleSpec,
    FileBackedEncoder,
    ClassifierHead,
    EmptyMaskGenerator,
    NoisyMaskGenerator,
    PrecomputedMaskGenerator,
    ToyEncoder,
    classify,
    fit_centroid_head,
    load_dataset_manifest,
    masks_from_instances,
    read_embeddings,
    toy_encoder,
)
from .core import LabeledSample, MaskSet, full_mask
from .fgscore import (
    ScoringStrategy,
    bbox_to_mask,
    build_fg_dataset,
    roc_auc,
    score_mask,
)
from .maskops import (
    FULL_IMAGE_INDEX,
    AlphaChannel,
    ApplicationMode,
    FilterConfig,
    GrayBgCrop,
    apply_mask,
    filter_masks,
)
from .metrics import accuracy, fg_ari, mbo, worst_group_accuracy
from .pipeline import Fallback, OccamConfig, run_benchmark

__all__ = [
    "make_mode",
    "run_discovery_eval",
    "run_fg_eval",
    "run_classify_eval",
    "run_gap_eval",
    "inspect_manifest",
    "canonical_json",
]


def canonical_json(obj) -> str:
    """Stable JSON encoding used for every written report."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def make_mode(
    method: str, target_h: int = 64, target_w: int = 64, gray: float = 0.5
) -> ApplicationMode:
    if method in ("gray-crop", "gray"):
        return GrayBgCrop(target_h=target_h, target_w=target_w, gray_value=gray)
    if method == "alpha":
        return AlphaChannel()
    raise ValueError(f"unknown mask method {method!r} (expected gray-crop or alpha)")


def _sorted_samples(dataset: Dataset) -> list[LabeledSample]:
    return sorted(dataset.samples, key=lambda s: s.id)


def _map_samples(samples: Sequence[LabeledSample], fn: Callable, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, samples))
    return [fn(s) for s in samples]


# --------------------------------------------------------------------------
# Object discovery (FG-ARI / mBO)
# --------------------------------------------------------------------------


def run_discovery_eval(
    manifest: str,
    pred_source: str = "manifest",
    shuffle_seed: Optional[int] = None,
    data_root: Optional[str] = None,
    threads: int = 1,
) -> dict:
    """FG-ARI and mBO of predicted masks against ground-truth instances."""
    if pred_source not in ("manifest", "gt"):
        raise ValueError(f"unknown pred_source {pred_source!r}")
    dataset = load_dataset_manifest(manifest, data_root=data_root)
    samples = _sorted_samples(dataset)
    errors = [{"id": e.sample_id, "message": e.message} for e in dataset.errors]

    def one(sample: LabeledSample):
        try:
            gt = dataset.gt_segs.get(sample.id)
            if gt is None:
                raise ValueError("sample has no ground-truth instance segmentation")
            if pred_source == "gt":
                pred = masks_from_instances(gt, include_background=False)
            else:
                pred = dataset.masksets.get(sample.id)
                if pred is None or len(pred) == 0:
                    raise ValueError("sample has no predicted masks")
            if shuffle_seed is not None:
                rng = np.random.default_rng([shuffle_seed, zlib.crc32(sample.id.encode())])
                order = rng.permutation(len(pred))
                pred = MaskSet(masks=tuple(pred.masks[i] for i in order), source=pred.source)
            return sample.id, fg_ari(gt, pred), mbo(gt, pred), None
        except Exception as exc:  # noqa: BLE001 - per-sample isolation
            return sample.id, None, None, str(exc)

    per_sample = []
    ari_sum = 0.0
    mbo_sum = 0.0
    n_used = 0
    for sample_id, ari_value, mbo_value, error in _map_samples(samples, one, threads):
        if error is not None:
            errors.append({"id": sample_id, "message": error})
            continue
        per_sample.append({"id": sample_id, "fg_ari": ari_value, "mbo": mbo_value})
        ari_sum += ari_value
        mbo_sum += mbo_value
        n_used += 1

    metrics = {
        "fg_ari": ari_sum / n_used if n_used else None,
        "mbo": mbo_sum / n_used if n_used else None,
    }
    report = {
        "eval": "discovery",
        "manifest": str(manifest),
        "pred_source": pred_source,
        "n_samples": n_used,
        "n_errors": len(errors),
        "metrics": metrics,
        "per_sample": per_sample,
        "errors": errors,
    }
    tables = {
        "discovery.csv": [
            ["dataset", "fg_ari", "mbo", "n_samples"],
            [Path(str(manifest)).stem, repr(metrics["fg_ari"]), repr(metrics["mbo"]), str(n_used)],
        ]
    }
    return {"report": report, "tables": tables, "audits": {}}


# --------------------------------------------------------------------------
# Ensembles
# --------------------------------------------------------------------------


def _unmasked_features(sample: LabeledSample, mode: ApplicationMode) -> np.ndarray:
    image = sample.image
    applied = apply_mask(image, full_mask(image.height, image.width), mode, FULL_IMAGE_INDEX)
    return toy_encoder(applied).values


def _fit_toy_ensemble(
    train: Dataset,
    mode: ApplicationMode,
    ensemble_size: int,
    temperature: float,
) -> EnsembleSpec:
    """Toy ensemble: per-class-stratified folds, one centroid head per fold."""
    samples = _sorted_samples(train)
    if not samples:
        raise ValueError("cannot fit a classifier head on an empty training split")
    n_classes = train.n_classes
    features = np.stack([_unmasked_features(s, mode) for s in samples])
    labels = np.asarray([s.label for s in samples])

    members = []
    rank_within_class: dict[int, int] = {}
    fold_of = np.empty(len(samples), dtype=np.int64)
    for i, label in enumerate(labels):
        rank = rank_within_class.get(int(label), 0)
        fold_of[i] = rank % ensemble_size
        rank_within_class[int(label)] = rank + 1
    for m in range(ensemble_size):
        chosen = fold_of == m
        if sorted(set(labels[chosen].tolist())) != list(range(n_classes)):
            raise ValueError(
                f"ensemble fold {m} is missing classes; "
                "reduce the ensemble size or provide more training samples per class"
            )
        head = fit_centroid_head(
            features[chosen],
            labels[chosen],
            n_classes=n_classes,
            temperature=temperature,
            group_map=train.group_map,
            class_names=train.class_names or None,
        )
        members.append((ToyEncoder(), head))
    return EnsembleSpec(members=tuple(members))


def _file_head(
    class_embeddings: str, temperature: float, group_map: Optional[dict[int, int]]
) -> ClassifierHead:
    names, values = read_embeddings(class_embeddings)
    return ClassifierHead(
        class_embeddings=values.astype(np.float64),
        temperature=temperature,
        group_map=group_map,
        class_names=tuple(names),
    )


def build_ensemble(
    encoder: str,
    dataset: Dataset,
    train: Dataset,
    mode: ApplicationMode,
    ensemble_size: int = 1,
    temperature: float = 100.0,
    embeddings: Sequence[str] = (),
    class_embeddings: Optional[str] = None,
) -> EnsembleSpec:
    """Assemble the ensemble for one eval run (toy fit or file-backed)."""
    if encoder == "toy":
        return _fit_toy_ensemble(train, mode, ensemble_size, temperature)
    if encoder == "file":
        if not embeddings or class_embeddings is None:
            raise ValueError("file encoder needs --embeddings and --class-embeddings")
        head = _file_head(class_embeddings, temperature, dataset.group_map)
        return EnsembleSpec(
            members=tuple((FileBackedEncoder(path), head) for path in embeddings)
        )
    raise ValueError(f"unknown encoder {encoder!r} (expected toy or file)")


# --------------------------------------------------------------------------
# Foreground detection (AUROC)
# --------------------------------------------------------------------------


def run_fg_eval(
    manifest: str,
    strategies: Sequence[str] = ("class-aided",),
    mode_method: str = "gray-crop",
    target_h: int = 64,
    target_w: int = 64,
    gray: float = 0.5,
    encoder: str = "toy",
    embeddings: Sequence[str] = (),
    class_embeddings: Optional[str] = None,
    train_manifest: Optional[str] = None,
    ensemble_size: int = 1,
    temperature: float = 100.0,
    data_root: Optional[str] = None,
    threads: int = 1,
) -> dict:
    """Foreground-detection AUROC per scoring strategy.

    Candidate masks are filtered, scored per strategy, then labeled
    foreground/background by highest IoU against the ground-truth bounding
    box; AUROC is computed per strategy over all (sample, mask) records.
    """
    chosen = [ScoringStrategy(s) for s in strategies]
    mode = make_mode(mode_method, target_h, target_w, gray)
    dataset = load_dataset_manifest(manifest, data_root=data_root)
    train = load_dataset_manifest(train_manifest, data_root=data_root) if train_manifest else dataset
    ens = build_ensemble(
        encoder, dataset, train, mode, ensemble_size, temperature, embeddings, class_embeddings
    )

    samples = _sorted_samples(dataset)
    errors = [{"id": e.sample_id, "message": e.message} for e in dataset.errors]
    filter_cfg = FilterConfig()

    def one(sample: LabeledSample):
        try:
            raw = dataset.masksets.get(sample.id)
            if raw is None or len(raw) == 0:
                raise ValueError("sample has no candidate masks")
            image = sample.image
            filtered = filter_masks(raw, (image.height, image.width), filter_cfg)
            if len(filtered) == 0:
                raise ValueError("all candidate masks were filtered out")
            if sample.gt_bbox is None:
                return sample, filtered, None, None  # counted by build_fg_dataset
            box = bbox_to_mask(sample.gt_bbox, image.height, image.width)
            per_mask_probs = []
            for index, mask in enumerate(filtered.masks):
                applied = apply_mask(image, mask, mode, index)
                per_mask_probs.append(
                    tuple(classify(head, enc.encode(applied, sample.id)) for enc, head in ens.members)
                )
            scores_by_strategy = {}
            for strategy in chosen:
                scores = []
                for index, mask in enumerate(filtered.masks):
                    probs = per_mask_probs[index]
                    if strategy in (
                        ScoringStrategy.SINGLE_CONFIDENCE,
                        ScoringStrategy.SINGLE_ENTROPY,
                        ScoringStrategy.MAX_PROB,
                    ):
                        probs = (probs[0],)
                    scores.append(
                        score_mask(
                            strategy,
                            probs,
                            label=sample.label if strategy is ScoringStrategy.CLASS_AIDED else None,
                            gt_mask=box if strategy is ScoringStrategy.GROUND_TRUTH_IOU else None,
                            candidate_mask=mask
                            if strategy is ScoringStrategy.GROUND_TRUTH_IOU
                            else None,
                        )
                    )
                scores_by_strategy[strategy] = scores
            return sample, filtered, scores_by_strategy, None
        except Exception as exc:  # noqa: BLE001 - per-sample isolation
            return sample, None, None, str(exc)

    kept_samples = []
    masksets = {}
    scores_per_strategy: dict[ScoringStrategy, dict[str, list[float]]] = {s: {} for s in chosen}
    for sample, filtered, scores_by_strategy, error in _map_samples(samples, one, threads):
        if error is not None:
            errors.append({"id": sample.id, "message": error})
            continue
        kept_samples.append(sample)
        masksets[sample.id] = filtered
        if scores_by_strategy is not None:
            for strategy, scores in scores_by_strategy.items():
                scores_per_strategy[strategy][sample.id] = scores

    strategy_reports = {}
    tables: dict[str, list[list[str]]] = {}
    skipped = 0
    degenerate: tuple[str, ...] = ()
    construction_failures = 0
    for strategy in chosen:
        scored_ids = scores_per_strategy[strategy]
        scorable = [s for s in kept_samples if s.id in scored_ids or s.gt_bbox is None]
        fg_data = build_fg_dataset(scorable, masksets, scored_ids)
        skipped = fg_data.skipped_missing_bbox
        degenerate = fg_data.degenerate_sample_ids
        records = [(r.label, r.score) for r in fg_data.records]
        entry = {
            "n_records": len(records),
            "n_pos": sum(1 for r in fg_data.records if r.label == 1),
            "n_neg": sum(1 for r in fg_data.records if r.label == 0),
        }
        try:
            auroc, points = roc_auc(records)
        except ValueError as exc:
            # Degenerate benchmark construction (e.g. single-candidate
            # samples only): reported per strategy, not fatal.
            entry["auroc"] = None
            entry["error"] = str(exc)
            construction_failures += 1
        else:
            entry["auroc"] = auroc
            tables[f"roc_{strategy.value}.csv"] = [["fpr", "tpr"]] + [
                [repr(fpr), repr(tpr)] for fpr, tpr in points
            ]
        strategy_reports[strategy.value] = entry
    tables["auroc.csv"] = [["strategy", "auroc"]] + [
        [name, repr(entry["auroc"])] for name, entry in sorted(strategy_reports.items())
    ]

    report = {
        "eval": "foreground",
        "manifest": str(manifest),
        "mask_method": mode_method,
        "encoder": encoder,
        "ensemble_size": ensemble_size,
        "n_samples": len(kept_samples),
        "skipped_missing_bbox": skipped,
        "degenerate_samples": list(degenerate),
        "n_errors": len(errors) + construction_failures,
        "strategies": strategy_reports,
        "errors": errors,
    }
    return {"report": report, "tables": tables, "audits": {}}


# --------------------------------------------------------------------------
# Robust classification (accuracy / WGA factor grid)
# --------------------------------------------------------------------------


def _mask_generator(mask_model: str, dataset: Dataset, noisy_px: int, seed: int):
    if mask_model == "none":
        return EmptyMaskGenerator()
    if mask_model == "manifest":
        return PrecomputedMaskGenerator(dataset.masksets)
    gt_sets = {
        s.id: s.gt_masks for s in dataset.samples if s.gt_masks is not None and len(s.gt_masks)
    }
    if len(gt_sets) != len(dataset.samples):
        raise ValueError(f"mask model {mask_model!r} needs ground-truth masks for every sample")
    if mask_model == "gt":
        return PrecomputedMaskGenerator(gt_sets, name="gt")
    if mask_model == "noisy":
        return NoisyMaskGenerator(gt_sets, max_px=noisy_px, seed=seed)
    raise ValueError(f"unknown mask model {mask_model!r}")


def _classify_row(
    dataset: Dataset,
    ens: EnsembleSpec,
    mode: ApplicationMode,
    mode_name: str,
    mask_model: str,
    strategy: Optional[ScoringStrategy],
    fallback: Fallback,
    noisy_px: int,
    seed: int,
    threads: int,
) -> tuple[dict, list[dict]]:
    maskgen = _mask_generator(mask_model, dataset, noisy_px, seed)
    scoring = strategy if strategy is not None else ScoringStrategy.ENSEMBLE_CONFIDENCE
    cfg = OccamConfig(
        application_mode=mode,
        scoring=scoring,
        fallback=fallback,
        evaluation_mode=True,
    )
    bench = run_benchmark(_sorted_samples(dataset), maskgen, ens, cfg, threads=threads)
    row: dict = {
        "mask_method": "-" if mask_model == "none" else mode_name,
        "mask_model": "-" if mask_model == "none" else mask_model,
        "fg_detector": "-" if mask_model == "none" else scoring.value,
        "n": bench.n_evaluated,
        "n_errors": len(bench.errors),
        "errors": [{"id": e.sample_id, "message": e.message} for e in bench.errors],
    }
    if bench.results is not None:
        row["accuracy"] = accuracy(bench.results)
        if all(r.group_id is not None for r in bench.results.records):
            wga, per_group = worst_group_accuracy(bench.results)
            row["wga"] = wga
            row["per_group"] = {str(g): v for g, v in per_group.items()}
    else:
        row["accuracy"] = None
    return row, bench.logs


def run_classify_eval(
    manifest: str,
    train_manifest: Optional[str] = None,
    mask_models: Sequence[str] = ("none", "gt"),
    mode_methods: Sequence[str] = ("gray-crop",),
    strategies: Sequence[str] = ("class-aided",),
    target_h: int = 64,
    target_w: int = 64,
    gray: float = 0.5,
    encoder: str = "toy",
    embeddings: Sequence[str] = (),
    class_embeddings: Optional[str] = None,
    ensemble_size: int = 1,
    temperature: float = 100.0,
    fallback: str = "full-image-mask",
    noisy_px: int = 2,
    seed: int = 0,
    data_root: Optional[str] = None,
    threads: int = 1,
) -> dict:
    """Accuracy / WGA over the (mask method x mask model x detector) grid.

    ``mask_model="none"`` rows are the mask-free baseline (the pipeline with
    zero candidates falling back to the full-image mask).
    """
    dataset = load_dataset_manifest(manifest, data_root=data_root)
    train = load_dataset_manifest(train_manifest, data_root=data_root) if train_manifest else dataset
    fallback_mode = Fallback(fallback)

    rows = []
    audits: dict[str, list[dict]] = {}
    for mode_name in mode_methods:
        mode = make_mode(mode_name, target_h, target_w, gray)
        ens = build_ensemble(
            encoder, dataset, train, mode, ensemble_size, temperature, embeddings, class_embeddings
        )
        for mask_model in mask_models:
            row_strategies: Sequence[Optional[ScoringStrategy]]
            if mask_model == "none":
                row_strategies = (None,)
            else:
                row_strategies = tuple(ScoringStrategy(s) for s in strategies)
            for strategy in row_strategies:
                row, logs = _classify_row(
                    dataset,
                    ens,
                    mode,
                    mode_name,
                    mask_model,
                    strategy,
                    fallback_mode,
                    noisy_px,
                    seed,
                    threads,
                )
                rows.append(row)
                slug = "baseline" if mask_model == "none" else f"{mask_model}_{row['fg_detector']}"
                name = f"audit_{len(rows) - 1:02d}_{mode_name}_{slug}.jsonl".replace("-", "")
                row["audit_log"] = name
                audits[name] = logs

    header = ["mask_method", "mask_model", "fg_detector", "accuracy", "wga", "n", "n_errors"]
    table = [header]
    for row in rows:
        table.append(
            [
                row["mask_method"],
                row["mask_model"],
                row["fg_detector"],
                repr(row["accuracy"]) if row["accuracy"] is not None else "",
                repr(row["wga"]) if row.get("wga") is not None else "",
                str(row["n"]),
                str(row["n_errors"]),
            ]
        )
    report = {
        "eval": "classify",
        "manifest": str(manifest),
        "train_manifest": str(train_manifest) if train_manifest else None,
        "encoder": encoder,
        "ensemble_size": ensemble_size,
        "n_errors": sum(row["n_errors"] for row in rows) + len(dataset.errors),
        "load_errors": [{"id": e.sample_id, "message": e.message} for e in dataset.errors],
        "rows": rows,
    }
    return {"report": report, "tables": {"classify.csv": table}, "audits": audits}


# --------------------------------------------------------------------------
# Common / counter gap
# --------------------------------------------------------------------------


def run_gap_eval(
    manifest_common: str,
    manifest_counter: str,
    train_manifest: Optional[str] = None,
    mask_model: str = "gt",
    mode_method: str = "gray-crop",
    strategy: str = "class-aided",
    target_h: int = 64,
    target_w: int = 64,
    gray: float = 0.5,
    encoder: str = "toy",
    embeddings: Sequence[str] = (),
    class_embeddings: Optional[str] = None,
    ensemble_size: int = 1,
    temperature: float = 100.0,
    noisy_px: int = 2,
    seed: int = 0,
    data_root: Optional[str] = None,
    threads: int = 1,
) -> dict:
    """Accuracy gap between splits, before masking and with the pipeline.

    The classifier head is fitted on the common split unless a training
    manifest is given, mirroring models whose training data is dominated by
    typical backgrounds.
    """
    common = load_dataset_manifest(manifest_common, data_root=data_root)
    counter = load_dataset_manifest(manifest_counter, data_root=data_root)
    train = load_dataset_manifest(train_manifest, data_root=data_root) if train_manifest else common
    mode = make_mode(mode_method, target_h, target_w, gray)
    ens = build_ensemble(
        encoder, common, train, mode, ensemble_size, temperature, embeddings, class_embeddings
    )
    chosen = ScoringStrategy(strategy)

    def split_accuracy(dataset: Dataset, mask_model_name: str, strat: Optional[ScoringStrategy]):
        row, _ = _classify_row(
            dataset,
            ens,
            mode,
            mode_method,
            mask_model_name,
            strat,
            Fallback.FULL_IMAGE_MASK,
            noisy_px,
            seed,
            threads,
        )
        return row

    rows = []
    for config, mask_model_name, strat in (
        ("baseline", "none", None),
        (f"occam-{mask_model}-{chosen.value}", mask_model, chosen),
    ):
        row_common = split_accuracy(common, mask_model_name, strat)
        row_counter = split_accuracy(counter, mask_model_name, strat)
        acc_common = row_common["accuracy"]
        acc_counter = row_counter["accuracy"]
        rows.append(
            {
                "config": config,
                "acc_common": acc_common,
                "acc_counter": acc_counter,
                "gap": acc_common - acc_counter,
                "n_common": row_common["n"],
                "n_counter": row_counter["n"],
                "n_errors": row_common["n_errors"] + row_counter["n_errors"],
            }
        )

    table = [["config", "acc_common", "acc_counter", "gap"]]
    for row in rows:
        table.append([row["config"], repr(row["acc_common"]), repr(row["acc_counter"]), repr(row["gap"])])
    report = {
        "eval": "gap",
        "manifest_common": str(manifest_common),
        "manifest_counter": str(manifest_counter),
        "mask_model": mask_model,
        "mask_method": mode_method,
        "fg_detector": chosen.value,
        "n_errors": sum(row["n_errors"] for row in rows)
        + len(common.errors)
        + len(counter.errors),
        "rows": rows,
    }
    return {"report": report, "tables": {"gap.csv": table}, "audits": {}}


# --------------------------------------------------------------------------
# Manifest inspection (round-trip validation surface)
# --------------------------------------------------------------------------


def inspect_manifest(
    manifest: str,
    data_root: Optional[str] = None,
    embeddings: Sequence[str] = (),
    include_values: bool = False,
) -> dict:
    """Summarize a dataset manifest and optional embedding files.

    Gives external producers a way to verify that what they wrote reloads
    with the expected dimensions, counts, and keys.
    """
    dataset = load_dataset_manifest(manifest, data_root=data_root)
    samples = []
    for sample in _sorted_samples(dataset):
        maskset = dataset.masksets.get(sample.id)
        samples.append(
            {
                "id": sample.id,
                "height": sample.image.height,
                "width": sample.image.width,
                "label": sample.label,
                "group": sample.group,
                "n_masks": len(maskset) if maskset is not None else 0,
                "mask_areas": [m.area for m in maskset] if maskset is not None else [],
                "has_gt_seg": sample.id in dataset.gt_segs,
                "gt_bbox": list(sample.gt_bbox) if sample.gt_bbox else None,
            }
        )
    embedding_summaries = []
    for path in embeddings:
        keys, values = read_embeddings(path)
        entry = {
            "path": str(path),
            "count": int(values.shape[0]),
            "dim": int(values.shape[1]),
            "keys": keys,
        }
        if include_values:
            entry["values"] = [[float(v) for v in row] for row in values]
        embedding_summaries.append(entry)
    return {
        "report": {
            "eval": "inspect",
            "manifest": str(manifest),
            "n_samples": len(samples),
            "n_errors": len(dataset.errors),
            "class_names": dataset.class_names,
            "group_map": {str(k): v for k, v in dataset.group_map.items()}
            if dataset.group_map
            else None,
            "samples": samples,
            "embeddings": embedding_summaries,
            "errors": [{"id": e.sample_id, "message": e.message} for e in dataset.errors],
        },
        "tables": {},
        "audits": {},
    }
