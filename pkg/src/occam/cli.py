"""Command-line client for the evaluation service.

Every subcommand routes through the HTTP API: against a remote server when
--server is given, otherwise against an in-process instance of the app.
Reports are written as canonical JSON with CSV mirrors and JSON-lines audit
logs; reruns with identical inputs produce byte-identical files at any
--threads value.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click
import httpx

from .evals import canonical_json

EXIT_ERRORS = 1


def _post_inprocess(path: str, payload: dict) -> httpx.Response:
    import asyncio

    from .service import app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://occam.internal") as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _post(server: Optional[str], path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            resp = client.post(path, json=payload)
    else:
        resp = _post_inprocess(path, payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:  # noqa: BLE001
            detail = resp.text
        raise click.ClickException(f"{path} returned {resp.status_code}: {detail}")
    return resp.json()


def _write_outputs(payload: dict, out_dir: str) -> int:
    out = Path(out_dir)
    if not out.parent.exists():
        raise click.ClickException(f"parent of --out does not exist: {out.parent}")
    out.mkdir(exist_ok=True)
    report = payload["report"]
    (out / "report.json").write_text(canonical_json(report), encoding="utf-8")
    for name, rows in sorted(payload.get("tables", {}).items()):
        text = "".join(",".join(row) + "\n" for row in rows)
        (out / name).write_text(text, encoding="utf-8")
    for name, records in sorted(payload.get("audits", {}).items()):
        text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
        (out / name).write_text(text, encoding="utf-8")
    return int(report.get("n_errors", 0))


def _emit_summary(payload: dict, fmt: str, summary_table: Optional[str] = None) -> None:
    if fmt == "json":
        click.echo(canonical_json(payload["report"]), nl=False)
        return
    tables = payload.get("tables", {})
    name = summary_table if summary_table in tables else next(iter(sorted(tables)), None)
    if name is None:
        click.echo(canonical_json(payload["report"]), nl=False)
        return
    for row in tables[name]:
        click.echo(",".join(row))


def _finish(payload: dict, out: Optional[str], fmt: str, summary_table: Optional[str] = None) -> None:
    n_errors = int(payload["report"].get("n_errors", 0))
    if out:
        n_errors = _write_outputs(payload, out)
    _emit_summary(payload, fmt, summary_table)
    if n_errors:
        click.echo(f"{n_errors} per-sample error(s); see report.json", err=True)
        sys.exit(EXIT_ERRORS)


def common_options(fn):
    fn = click.option("--server", default=None, help="Remote service URL (default: in-process).")(fn)
    fn = click.option("--data-root", default=None, help="Root for relative manifest paths.")(fn)
    fn = click.option("--out", default=None, help="Directory for report.json, CSVs, audit logs.")(fn)
    fn = click.option("--seed", default=0, show_default=True, help="Seed for randomized steps.")(fn)
    fn = click.option("--threads", default=1, show_default=True, help="Per-sample parallelism.")(fn)
    fn = click.option(
        "--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True
    )(fn)
    return fn


mode_option = click.option(
    "--mode",
    "modes",
    type=click.Choice(["gray-crop", "alpha"]),
    multiple=True,
    default=("gray-crop",),
    show_default=True,
    help="Mask application method (repeatable where a grid is supported).",
)


def geometry_options(fn):
    fn = click.option("--target", default=64, show_default=True, help="Crop-resize target side.")(fn)
    fn = click.option("--gray", default=0.5, show_default=True, help="Background gray value.")(fn)
    return fn


def encoder_options(fn):
    fn = click.option(
        "--scores-from",
        type=click.Choice(["toy", "file"]),
        default="toy",
        show_default=True,
        help="Probability source: in-process toy encoder or exported embeddings.",
    )(fn)
    fn = click.option("--embeddings", multiple=True, help="OCE1 file per ensemble member.")(fn)
    fn = click.option("--class-embeddings", default=None, help="OCE1 file of class embeddings.")(fn)
    fn = click.option("--train-manifest", default=None, help="Split used to fit the toy head.")(fn)
    fn = click.option("--ensemble-size", default=1, show_default=True)(fn)
    fn = click.option("--temperature", default=100.0, show_default=True)(fn)
    return fn


@click.group()
def main() -> None:
    """Object-centric classification pipeline and its evaluation commands."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the evaluation service."""
    import uvicorn

    uvicorn.run("occam.service:app", host=host, port=port)


@main.command()
@click.option("--out", required=True, help="Dataset output directory.")
@click.option("--n", "n_samples", default=60, show_default=True)
@click.option("--size", default=64, show_default=True, help="Image side length.")
@click.option("--classes", "n_classes", default=3, show_default=True)
@click.option("--rho", default=1.0, show_default=True, help="Class/background correlation.")
@click.option("--distractors", nargs=2, type=int, default=(0, 2), show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--counter-pair", is_flag=True, help="Write common (rho=1) and counter (rho=0) splits.")
@click.option("--server", default=None)
def synth(out, n_samples, size, n_classes, rho, distractors, seed, counter_pair, server) -> None:
    """Generate a synthetic spurious-correlation dataset."""
    payload = _post(
        server,
        "/synth",
        {
            "out_dir": out,
            "n_samples": n_samples,
            "height": size,
            "width": size,
            "n_classes": n_classes,
            "correlation": rho,
            "distractors_min": distractors[0],
            "distractors_max": distractors[1],
            "seed": seed,
            "counter_pair": counter_pair,
        },
    )
    for manifest in payload["manifests"]:
        click.echo(manifest)


@main.command("discover-eval")
@click.option("--manifest", required=True)
@click.option(
    "--pred-source",
    type=click.Choice(["manifest", "gt"]),
    default="manifest",
    show_default=True,
    help="Where predicted masks come from.",
)
@click.option("--shuffle-pred", is_flag=True, help="Shuffle predicted mask order (seeded).")
@common_options
def discover_eval(manifest, pred_source, shuffle_pred, server, data_root, out, seed, threads, fmt):
    """Object-discovery metrics: FG-ARI and mBO."""
    payload = _post(
        server,
        "/eval/discovery",
        {
            "manifest": manifest,
            "pred_source": pred_source,
            "shuffle_seed": seed if shuffle_pred else None,
            "data_root": data_root,
            "threads": threads,
        },
    )
    _finish(payload, out, fmt, "discovery.csv")


@main.command("fg-eval")
@click.option("--manifest", required=True)
@click.option(
    "--strategy",
    "strategies",
    multiple=True,
    default=("class-aided",),
    show_default=True,
    help="Foreground scoring strategy (repeatable).",
)
@mode_option
@geometry_options
@encoder_options
@common_options
def fg_eval(
    manifest,
    strategies,
    modes,
    target,
    gray,
    scores_from,
    embeddings,
    class_embeddings,
    train_manifest,
    ensemble_size,
    temperature,
    server,
    data_root,
    out,
    seed,
    threads,
    fmt,
):
    """Foreground-detection AUROC per strategy, with ROC curve files."""
    payload = _post(
        server,
        "/eval/foreground",
        {
            "manifest": manifest,
            "strategies": list(strategies),
            "mask_method": modes[0],
            "target_h": target,
            "target_w": target,
            "gray": gray,
            "encoder": scores_from,
            "embeddings": list(embeddings),
            "class_embeddings": class_embeddings,
            "train_manifest": train_manifest,
            "ensemble_size": ensemble_size,
            "temperature": temperature,
            "data_root": data_root,
            "threads": threads,
        },
    )
    _finish(payload, out, fmt, "auroc.csv")


@main.command("classify-eval")
@click.option("--manifest", required=True)
@click.option(
    "--mask-model",
    "mask_models",
    multiple=True,
    default=("none", "gt"),
    show_default=True,
    help="Candidate mask source: none, gt, noisy, or manifest (repeatable).",
)
@click.option(
    "--strategy",
    "strategies",
    multiple=True,
    default=("class-aided",),
    show_default=True,
)
@mode_option
@geometry_options
@encoder_options
@click.option(
    "--fallback",
    type=click.Choice(["full-image-mask", "error"]),
    default="full-image-mask",
    show_default=True,
)
@click.option("--noisy-px", default=2, show_default=True)
@common_options
def classify_eval(
    manifest,
    mask_models,
    strategies,
    modes,
    target,
    gray,
    scores_from,
    embeddings,
    class_embeddings,
    train_manifest,
    ensemble_size,
    temperature,
    fallback,
    noisy_px,
    server,
    data_root,
    out,
    seed,
    threads,
    fmt,
):
    """Accuracy / worst-group accuracy over a mask-factor grid."""
    payload = _post(
        server,
        "/eval/classify",
        {
            "manifest": manifest,
            "train_manifest": train_manifest,
            "mask_models": list(mask_models),
            "mask_methods": list(modes),
            "strategies": list(strategies),
            "target_h": target,
            "target_w": target,
            "gray": gray,
            "encoder": scores_from,
            "embeddings": list(embeddings),
            "class_embeddings": class_embeddings,
            "ensemble_size": ensemble_size,
            "temperature": temperature,
            "fallback": fallback,
            "noisy_px": noisy_px,
            "seed": seed,
            "data_root": data_root,
            "threads": threads,
        },
    )
    _finish(payload, out, fmt, "classify.csv")


@main.command("gap")
@click.option("--manifest-common", required=True)
@click.option("--manifest-counter", required=True)
@click.option("--mask-model", default="gt", show_default=True)
@click.option("--strategy", default="class-aided", show_default=True)
@mode_option
@geometry_options
@encoder_options
@click.option("--noisy-px", default=2, show_default=True)
@common_options
def gap(
    manifest_common,
    manifest_counter,
    mask_model,
    strategy,
    modes,
    target,
    gray,
    scores_from,
    embeddings,
    class_embeddings,
    train_manifest,
    ensemble_size,
    temperature,
    noisy_px,
    server,
    data_root,
    out,
    seed,
    threads,
    fmt,
):
    """Common/counter accuracy gap, unmasked and through the pipeline."""
    payload = _post(
        server,
        "/eval/gap",
        {
            "manifest_common": manifest_common,
            "manifest_counter": manifest_counter,
            "train_manifest": train_manifest,
            "mask_model": mask_model,
            "mask_method": modes[0],
            "strategy": strategy,
            "target_h": target,
            "target_w": target,
            "gray": gray,
            "encoder": scores_from,
            "embeddings": list(embeddings),
            "class_embeddings": class_embeddings,
            "ensemble_size": ensemble_size,
            "temperature": temperature,
            "noisy_px": noisy_px,
            "seed": seed,
            "data_root": data_root,
            "threads": threads,
        },
    )
    _finish(payload, out, fmt, "gap.csv")


@main.command()
@click.option("--manifest", required=True)
@click.option("--embeddings", multiple=True, help="OCE1 files to summarize.")
@click.option("--include-values", is_flag=True, help="Inline embedding values in the report.")
@common_options
def inspect(manifest, embeddings, include_values, server, data_root, out, seed, threads, fmt):
    """Summarize a manifest (and embedding files) for round-trip validation."""
    payload = _post(
        server,
        "/datasets/inspect",
        {
            "manifest": manifest,
            "data_root": data_root,
            "embeddings": list(embeddings),
            "include_values": include_values,
        },
    )
    _finish(payload, out, fmt)


if __name__ == "__main__":
    main()
