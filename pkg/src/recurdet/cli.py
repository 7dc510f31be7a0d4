"""Command-line entry points: detect, bench, synth, serve."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from .errors import PipelineError, RecurdetError
from .pipeline import PipelineConfig, run_benchmark, run_detect


def _setup_logging():
    level = os.environ.get("RECURDET_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _load_config(config_path, seed):
    if config_path is not None:
        config = PipelineConfig.load(config_path)
    else:
        config = PipelineConfig()
    if seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=seed)
    return config


@click.group()
def main():
    """Detect and count repeating objects in a single image."""
    _setup_logging()


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--bbox", required=True, help="x,y,w,h of one object instance")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--oracle", "oracle_path", type=click.Path(exists=True), help="ground-truth JSON driving the session")
@click.option("--out", "out_path", type=click.Path(), help="report JSON destination")
@click.option("--session-log", "log_path", type=click.Path(), help="JSONL session log destination")
def detect(image_path, bbox, config_path, seed, oracle_path, out_path, log_path):
    """Run the full pipeline on one image and report detections."""
    try:
        parts = [int(v) for v in bbox.split(",")]
        if len(parts) != 4:
            raise ValueError
    except ValueError:
        raise click.BadParameter("bbox must be x,y,w,h integers", param_hint="--bbox")
    config = _load_config(config_path, seed)
    try:
        result = run_detect(
            image_path,
            tuple(parts),
            config,
            oracle_path=oracle_path,
            out_path=out_path,
            log_path=log_path,
        )
    except PipelineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except RecurdetError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if out_path is None:
        click.echo(json.dumps(result.report, indent=1))
    else:
        click.echo(f"count: {result.report['count']} (report: {out_path})")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--jobs", type=int, default=None, help="parallel scene workers")
def bench(manifest_path, config_path, seed, out_dir, jobs):
    """Oracle-driven benchmark over a scene manifest."""
    config = _load_config(config_path, seed)
    doc = run_benchmark(manifest_path, config, out_dir, jobs=jobs)
    click.echo(json.dumps(doc["summary"], indent=1))
    if doc["summary"]["failed"]:
        click.echo(f"{doc['summary']['failed']} scene(s) failed", err=True)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--scenes", type=int, default=10)
@click.option("--objects", type=int, default=100)
@click.option("--size", "canvas", type=int, default=430)
@click.option("--jitter", type=int, default=3)
@click.option("--noise", type=float, default=0.02)
@click.option("--occlusion", type=float, default=0.0)
@click.option("--distractors", type=int, default=0)
@click.option("--distractor-kind", type=click.Choice(["objects", "shells"]), default="objects")
@click.option("--seed", type=int, default=0)
def synth(out_dir, scenes, objects, canvas, jitter, noise, occlusion, distractors, distractor_kind, seed):
    """Generate benchmark scenes plus ground truth and a manifest."""
    from .synth import (
        SceneSpec,
        default_distractor_template,
        default_target_template,
        generate,
        occluded_shell_template,
        write_scene,
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    distractor = None
    if distractors:
        distractor = (
            default_distractor_template()
            if distractor_kind == "objects"
            else occluded_shell_template()
        )
    entries = []
    for k in range(scenes):
        spec = SceneSpec(
            height=canvas,
            width=canvas,
            template=default_target_template(),
            count=objects,
            jitter=jitter,
            noise_sigma=noise,
            occlusion_rate=occlusion,
            distractor=distractor,
            distractor_count=distractors,
            rng_seed=seed + k,
        )
        img, truth = generate(spec)
        png, tj = write_scene(img, truth, out / f"scene{k:03d}")
        entries.append({"image": png.name, "truth": tj.name})
        click.echo(f"wrote {png}")
    (out / "manifest.json").write_text(json.dumps({"scenes": entries}, indent=1) + "\n")
    click.echo(f"manifest: {out / 'manifest.json'}")


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--persist", "persist_dir", type=click.Path(), default=None)
def serve(port, host, persist_dir):
    """Start the labeling session HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(persist_dir=persist_dir), host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
