"""Command-line workflow: extract -> train -> evaluate -> predict/serve.

Thin client over the library modules; exit codes are 0 success, 1 usage
error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys

import click
import numpy as np

from . import artifact, backbone as bb, images, metrics, training
from .errors import (DecodeError, NumericError, InferenceError, SldScreenError)
from .service import ServiceState, create_app

UNKNOWN_DIGEST = bytes(32)


def resolve_backbone(spec: str) -> bb.Backbone:
    """A backbone argument is either an ONNX file path or "mock:SEED"."""
    if spec.startswith("mock:"):
        return bb.make_mock_backbone(int(spec.split(":", 1)[1]))
    return bb.load_backbone(spec)


@click.group()
def cli():
    """Handwriting screening toolkit."""


@cli.command()
@click.option("--images", "images_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--labels", "labels_csv", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--backbone", "backbone_spec", required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--augment", "augment_n", default=0, show_default=True,
              help="Augmented copies per image (originals are always kept).")
@click.option("--seed", default=0, show_default=True)
def extract(images_dir, labels_csv, backbone_spec, out_path, augment_n, seed):
    """Embed labeled images into a binary cache file."""
    backbone = resolve_backbone(backbone_spec)
    spec = images.AugmentSpec()
    examples = []
    with open(labels_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["filename", "label"]:
            raise click.UsageError(
                f"labels CSV must have header 'filename,label', "
                f"got {reader.fieldnames}")
        rows = list(reader)
    for row in rows:
        path = f"{images_dir}/{row['filename']}"
        with open(path, "rb") as fh:
            data = fh.read()
        digest = hashlib.sha256(data).hexdigest()
        label = int(row["label"])
        raster = images.decode_image(data)
        variants = [raster]
        for i in range(augment_n):
            aug_seed = int.from_bytes(hashlib.sha256(
                f"{digest}:{seed}:{i}".encode()).digest()[:8], "little")
            variants.append(images.augment(raster, spec, aug_seed))
        for variant in variants:
            emb = bb.embed(backbone, images.preprocess(variant))
            examples.append(training.LabeledExample(emb, label, digest))
    training.write_cache(out_path, examples)
    click.echo(f"wrote {len(examples)} embeddings to {out_path}")


@cli.command()
@click.option("--cache", "cache_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--train-count", required=True, type=int)
@click.option("--val-count", required=True, type=int)
@click.option("--epochs", default=25, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--dropout", default=0.5, show_default=True)
@click.option("--no-stratify", is_flag=True)
@click.option("--group-by-source", is_flag=True,
              help="Split by source_id; counts then refer to sources.")
@click.option("--backbone", "backbone_spec", default=None,
              help="Record this backbone's digest in the artifact.")
def train(cache_path, train_count, val_count, epochs, seed, out_path,
          batch_size, lr, dropout, no_stratify, group_by_source,
          backbone_spec):
    """Train the classifier head on a cache and save the best checkpoint."""
    dataset = training.read_cache(cache_path)
    spec = training.SplitSpec(train_count, val_count, seed,
                              stratified=not no_stratify)
    cfg = training.TrainConfig(epochs=epochs, batch_size=batch_size,
                               dropout_rate=dropout, learning_rate=lr,
                               seed=seed)
    params, history = training.fit(dataset, spec, cfg,
                                   group_by_source=group_by_source)
    digest = (bb.backbone_digest(resolve_backbone(backbone_spec))
              if backbone_spec else UNKNOWN_DIGEST)
    meta = artifact.ArtifactMeta(backbone_digest=digest, dropout_rate=dropout)
    artifact.save_model(params, meta, out_path)
    best = history.best_epoch
    summary = {
        "epochs": epochs,
        "best_epoch": best,
        "best_val_accuracy": (history.records[best].val_accuracy
                              if best is not None else None),
        "model": out_path,
    }
    click.echo(json.dumps(summary, indent=2))


@cli.command()
@click.option("--cache", "cache_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", default=None, type=float,
              help="Defaults to the threshold stored in the artifact.")
def evaluate(cache_path, model_path, threshold):
    """Evaluate a saved model over a cache; prints an EvalReport JSON."""
    dataset = training.read_cache(cache_path)
    params, meta = artifact.load_model(model_path)
    t = meta.threshold if threshold is None else threshold
    report = metrics.evaluate(params, dataset, t)
    click.echo(report.to_json())


@cli.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--backbone", "backbone_spec", required=True)
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--strict", is_flag=True,
              help="Error on backbone digest mismatch instead of warning.")
def predict(image_path, backbone_spec, model_path, strict):
    """Screen one image; prints a ScreeningResult JSON."""
    backbone = resolve_backbone(backbone_spec)
    model = artifact.load_screening_model(model_path)
    with open(image_path, "rb") as fh:
        data = fh.read()
    result = artifact.run_screening(data, backbone, model, strict=strict)
    click.echo(json.dumps(result.to_dict(), indent=2))


@cli.command()
@click.option("--backbone", "backbone_spec", required=True)
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--listen", default="127.0.0.1:8000", show_default=True)
def serve(backbone_spec, model_path, listen):
    """Run the HTTP screening service."""
    import uvicorn

    backbone = resolve_backbone(backbone_spec)
    model = artifact.load_screening_model(model_path)
    state = ServiceState(backbone, model, model_path)
    host, _, port = listen.rpartition(":")
    uvicorn.run(create_app(state), host=host or "127.0.0.1", port=int(port))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except (NumericError, InferenceError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except (SldScreenError, FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
