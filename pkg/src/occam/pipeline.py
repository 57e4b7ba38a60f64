"""End-to-end object-centric classification.

For one sample: generate candidate masks, filter them, apply each surviving
mask, encode and classify every application with every ensemble member,
score the candidates, select the foreground mask, and classify from it.
``run_benchmark`` maps that over a dataset deterministically (results are
independent of the thread count).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .backend import EnsembleSpec, MaskGenerator, SampleError, classify, group_predict
from .core import ClassProbabilities, ImageTensor, LabeledSample, full_mask
from .fgscore import EVALUATION_ONLY, ScoredMask, ScoringStrategy, score_mask, select_foreground
from .maskops import (
    FULL_IMAGE_INDEX,
    ApplicationMode,
    FilterConfig,
    GrayBgCrop,
    apply_mask,
    filter_masks,
)
from .metrics import EvalRecord, GroupedResults

__all__ = [
    "Fallback",
    "OccamConfig",
    "OccamOutput",
    "BenchmarkResult",
    "occam_classify",
    "run_benchmark",
]


class Fallback(str, Enum):
    """What to do when filtering leaves zero candidate masks."""

    FULL_IMAGE_MASK = "full-image-mask"
    ERROR = "error"


@dataclass(frozen=True)
class OccamConfig:
    """Pipeline configuration.

    ``evaluation_mode`` gates the scoring strategies that consume ground
    truth (class-aided, ground-truth IoU): they measure representation
    quality and are not deployable detectors, so using one without the flag
    is an error.  ``final_member`` selects a single ensemble member for the
    final classification (and for single-model scores); None means the
    member mean (member 0 for single-model scores).
    """

    application_mode: ApplicationMode = field(default_factory=GrayBgCrop)
    scoring: ScoringStrategy = ScoringStrategy.ENSEMBLE_ENTROPY
    filter: FilterConfig = field(default_factory=FilterConfig)
    fallback: Fallback = Fallback.FULL_IMAGE_MASK
    evaluation_mode: bool = False
    final_member: Optional[int] = None


@dataclass(frozen=True)
class OccamOutput:
    """Classification outcome plus the full per-mask audit trail."""

    final_probs: ClassProbabilities
    selected_mask_index: int
    all_scored: tuple[ScoredMask, ...]
    fallback_used: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "all_scored", tuple(self.all_scored))
        if not self.fallback_used:
            if self.selected_mask_index not in {s.mask_index for s in self.all_scored}:
                raise ValueError("selected mask index missing from the scored candidates")


def _mean_probs(members: Sequence[ClassProbabilities]) -> ClassProbabilities:
    if len(members) == 1:
        return members[0]
    return ClassProbabilities(np.mean([p.probs for p in members], axis=0))


def occam_classify(
    sample: LabeledSample,
    maskgen: MaskGenerator,
    ens: EnsembleSpec,
    cfg: OccamConfig,
    *,
    score_transform: Optional[Callable[[float], float]] = None,
) -> OccamOutput:
    """Classify one sample through mask selection.

    ``score_transform`` is an audit hook applied uniformly to every
    candidate score before selection; any strictly increasing transform
    leaves the output unchanged.
    """
    if not isinstance(sample.image, ImageTensor):
        raise ValueError(f"sample {sample.id}: image reference was not resolved")
    image = sample.image

    if cfg.scoring in EVALUATION_ONLY and not cfg.evaluation_mode:
        raise ValueError(
            f"scoring strategy {cfg.scoring.value!r} uses ground truth; "
            "enable evaluation_mode to acknowledge this"
        )

    raw = maskgen.generate(image, sample.id)
    filtered = filter_masks(raw, (image.height, image.width), cfg.filter)

    fallback_used = False
    if len(filtered) == 0:
        if cfg.fallback is Fallback.ERROR:
            raise ValueError(f"sample {sample.id}: no candidate masks after filtering")
        candidates = [(FULL_IMAGE_INDEX, full_mask(image.height, image.width))]
        fallback_used = True
    else:
        candidates = list(enumerate(filtered.masks))

    gt_fg = sample.gt_masks[0] if sample.gt_masks is not None and len(sample.gt_masks) else None

    scored: list[ScoredMask] = []
    member_probs_by_index: dict[int, tuple[ClassProbabilities, ...]] = {}
    for index, mask in candidates:
        applied = apply_mask(image, mask, cfg.application_mode, index)
        member_probs = []
        for encoder, head in ens.members:
            if applied.image.channels == 4 and not encoder.accepts_alpha:
                raise ValueError(f"encoder {encoder.name!r} does not accept alpha input")
            member_probs.append(classify(head, encoder.encode(applied, sample.id)))
        member_probs = tuple(member_probs)
        member_probs_by_index[index] = member_probs

        if cfg.scoring in (
            ScoringStrategy.SINGLE_CONFIDENCE,
            ScoringStrategy.SINGLE_ENTROPY,
            ScoringStrategy.MAX_PROB,
        ):
            scoring_probs: Sequence[ClassProbabilities] = (
                member_probs[cfg.final_member if cfg.final_member is not None else 0],
            )
        else:
            scoring_probs = member_probs
        score = score_mask(
            cfg.scoring,
            scoring_probs,
            label=sample.label if cfg.scoring is ScoringStrategy.CLASS_AIDED else None,
            gt_mask=gt_fg if cfg.scoring is ScoringStrategy.GROUND_TRUTH_IOU else None,
            candidate_mask=mask if cfg.scoring is ScoringStrategy.GROUND_TRUTH_IOU else None,
        )
        if score_transform is not None:
            score = float(score_transform(score))
        scored.append(ScoredMask(mask_index=index, score=score, per_member_probs=member_probs))

    selected = select_foreground(scored)
    selected_probs = member_probs_by_index[selected]
    if cfg.final_member is not None:
        final = selected_probs[cfg.final_member]
    else:
        final = _mean_probs(selected_probs)
    return OccamOutput(
        final_probs=final,
        selected_mask_index=selected,
        all_scored=tuple(scored),
        fallback_used=fallback_used,
    )


@dataclass
class BenchmarkResult:
    """Benchmark outputs: grouped records, audit log, and the error tally."""

    results: Optional[GroupedResults]
    logs: list[dict]
    errors: list[SampleError]

    @property
    def n_evaluated(self) -> int:
        return len(self.logs)


def _predict(output: OccamOutput, ens: EnsembleSpec) -> int:
    head = ens.members[0][1]
    if head.group_map is not None:
        return group_predict(head, output.final_probs)
    return int(np.argmax(output.final_probs.probs))


def run_benchmark(
    samples: Sequence[LabeledSample],
    maskgen: MaskGenerator,
    ens: EnsembleSpec,
    cfg: OccamConfig,
    threads: int = 1,
) -> BenchmarkResult:
    """Run the pipeline over a dataset split.

    Samples are processed in sorted-id order; per-sample failures are
    counted and excluded rather than silently dropped.  Output is identical
    for any thread count.
    """
    ordered = sorted(samples, key=lambda s: s.id)

    def work(sample: LabeledSample):
        try:
            return occam_classify(sample, maskgen, ens, cfg), None
        except Exception as exc:  # noqa: BLE001 - per-sample isolation contract
            return None, SampleError(sample_id=sample.id, message=str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, ordered))
    else:
        outcomes = [work(s) for s in ordered]

    records: list[EvalRecord] = []
    logs: list[dict] = []
    errors: list[SampleError] = []
    for sample, (output, error) in zip(ordered, outcomes):
        if error is not None:
            errors.append(error)
            continue
        predicted = _predict(output, ens)
        records.append(
            EvalRecord(
                sample_id=sample.id,
                predicted_class=predicted,
                true_class=sample.label,
                group_id=sample.group,
            )
        )
        logs.append(
            {
                "id": sample.id,
                "scores": [[s.mask_index, s.score] for s in output.all_scored],
                "selected": output.selected_mask_index,
                "fallback": output.fallback_used,
                "predicted": predicted,
                "label": sample.label,
                "group": sample.group,
            }
        )
    results = GroupedResults(records=tuple(records)) if records else None
    return BenchmarkResult(results=results, logs=logs, errors=errors)
