"""HTTP service exposing the evaluation pipeline.

The service wraps the core package behind JSON endpoints; the CLI is a thin
client of these endpoints (in-process by default, remote with --server).
Requests carry filesystem paths, so a remote server evaluates datasets on
its own filesystem.
"""

from __future__ import annotations

from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .backend import write_dataset
from .evals import (
    inspect_manifest,
    run_classify_eval,
    run_discovery_eval,
    run_fg_eval,
    run_gap_eval,
)
from .synthgen import SynthSpec, counter_split, generate

app = FastAPI(title="occam", version=__version__)


class EvalResponse(BaseModel):
    report: dict
    tables: dict[str, list[list[str]]] = Field(default_factory=dict)
    audits: dict[str, list[dict]] = Field(default_factory=dict)


class DiscoveryRequest(BaseModel):
    manifest: str
    pred_source: Literal["manifest", "gt"] = "manifest"
    shuffle_seed: Optional[int] = None
    data_root: Optional[str] = None
    threads: int = 1


class FgEvalRequest(BaseModel):
    manifest: str
    strategies: list[str] = ["class-aided"]
    mask_method: Literal["gray-crop", "alpha"] = "gray-crop"
    target_h: int = 64
    target_w: int = 64
    gray: float = 0.5
    encoder: Literal["toy", "file"] = "toy"
    embeddings: list[str] = []
    class_embeddings: Optional[str] = None
    train_manifest: Optional[str] = None
    ensemble_size: int = 1
    temperature: float = 100.0
    data_root: Optional[str] = None
    threads: int = 1


class ClassifyEvalRequest(BaseModel):
    manifest: str
    train_manifest: Optional[str] = None
    mask_models: list[str] = ["none", "gt"]
    mask_methods: list[Literal["gray-crop", "alpha"]] = ["gray-crop"]
    strategies: list[str] = ["class-aided"]
    target_h: int = 64
    target_w: int = 64
    gray: float = 0.5
    encoder: Literal["toy", "file"] = "toy"
    embeddings: list[str] = []
    class_embeddings: Optional[str] = None
    ensemble_size: int = 1
    temperature: float = 100.0
    fallback: Literal["full-image-mask", "error"] = "full-image-mask"
    noisy_px: int = 2
    seed: int = 0
    data_root: Optional[str] = None
    threads: int = 1


class GapEvalRequest(BaseModel):
    manifest_common: str
    manifest_counter: str
    train_manifest: Optional[str] = None
    mask_model: str = "gt"
    mask_method: Literal["gray-crop", "alpha"] = "gray-crop"
    strategy: str = "class-aided"
    target_h: int = 64
    target_w: int = 64
    gray: float = 0.5
    encoder: Literal["toy", "file"] = "toy"
    embeddings: list[str] = []
    class_embeddings: Optional[str] = None
    ensemble_size: int = 1
    temperature: float = 100.0
    noisy_px: int = 2
    seed: int = 0
    data_root: Optional[str] = None
    threads: int = 1


class SynthRequest(BaseModel):
    out_dir: str
    n_samples: int = 60
    height: int = 64
    width: int = 64
    n_classes: int = 3
    correlation: float = 1.0
    distractors_min: int = 0
    distractors_max: int = 2
    seed: int = 0
    counter_pair: bool = False


class SynthResponse(BaseModel):
    manifests: list[str]


class InspectRequest(BaseModel):
    manifest: str
    data_root: Optional[str] = None
    embeddings: list[str] = []
    include_values: bool = False


def _run(fn, /, **kwargs) -> EvalResponse:
    try:
        return EvalResponse(**fn(**kwargs))
    except (ValueError, FileNotFoundError, KeyError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/eval/discovery", response_model=EvalResponse)
def eval_discovery(req: DiscoveryRequest) -> EvalResponse:
    return _run(
        run_discovery_eval,
        manifest=req.manifest,
        pred_source=req.pred_source,
        shuffle_seed=req.shuffle_seed,
        data_root=req.data_root,
        threads=req.threads,
    )


@app.post("/eval/foreground", response_model=EvalResponse)
def eval_foreground(req: FgEvalRequest) -> EvalResponse:
    return _run(
        run_fg_eval,
        manifest=req.manifest,
        strategies=req.strategies,
        mode_method=req.mask_method,
        target_h=req.target_h,
        target_w=req.target_w,
        gray=req.gray,
        encoder=req.encoder,
        embeddings=req.embeddings,
        class_embeddings=req.class_embeddings,
        train_manifest=req.train_manifest,
        ensemble_size=req.ensemble_size,
        temperature=req.temperature,
        data_root=req.data_root,
        threads=req.threads,
    )


@app.post("/eval/classify", response_model=EvalResponse)
def eval_classify(req: ClassifyEvalRequest) -> EvalResponse:
    return _run(
        run_classify_eval,
        manifest=req.manifest,
        train_manifest=req.train_manifest,
        mask_models=req.mask_models,
        mode_methods=req.mask_methods,
        strategies=req.strategies,
        target_h=req.target_h,
        target_w=req.target_w,
        gray=req.gray,
        encoder=req.encoder,
        embeddings=req.embeddings,
        class_embeddings=req.class_embeddings,
        ensemble_size=req.ensemble_size,
        temperature=req.temperature,
        fallback=req.fallback,
        noisy_px=req.noisy_px,
        seed=req.seed,
        data_root=req.data_root,
        threads=req.threads,
    )


@app.post("/eval/gap", response_model=EvalResponse)
def eval_gap(req: GapEvalRequest) -> EvalResponse:
    return _run(
        run_gap_eval,
        manifest_common=req.manifest_common,
        manifest_counter=req.manifest_counter,
        train_manifest=req.train_manifest,
        mask_model=req.mask_model,
        mode_method=req.mask_method,
        strategy=req.strategy,
        target_h=req.target_h,
        target_w=req.target_w,
        gray=req.gray,
        encoder=req.encoder,
        embeddings=req.embeddings,
        class_embeddings=req.class_embeddings,
        ensemble_size=req.ensemble_size,
        temperature=req.temperature,
        noisy_px=req.noisy_px,
        seed=req.seed,
        data_root=req.data_root,
        threads=req.threads,
    )


@app.post("/synth", response_model=SynthResponse)
def synth(req: SynthRequest) -> SynthResponse:
    try:
        spec = SynthSpec(
            n_samples=req.n_samples,
            height=req.height,
            width=req.width,
            n_classes=req.n_classes,
            correlation=req.correlation,
            distractors=(req.distractors_min, req.distractors_max),
            seed=req.seed,
        )
        if req.counter_pair:
            common, counter = counter_split(spec)
            manifests = [
                str(write_dataset(common, f"{req.out_dir}/common")),
                str(write_dataset(counter, f"{req.out_dir}/counter")),
            ]
        else:
            manifests = [str(write_dataset(generate(spec), req.out_dir))]
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return SynthResponse(manifests=manifests)


@app.post("/datasets/inspect", response_model=EvalResponse)
def datasets_inspect(req: InspectRequest) -> EvalResponse:
    return _run(
        inspect_manifest,
        manifest=req.manifest,
        data_root=req.data_root,
        embeddings=req.embeddings,
        include_values=req.include_values,
    )
