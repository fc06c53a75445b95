"""Exporter CLI: train-small, export, masks."""

from __future__ import annotations

import sys

import click

from .data import load_dataset
from .export import ExportJob, export_features, export_masks
from .model import DEFAULT_DROPOUT, DEFAULT_KERNELS, load_checkpoint, save_checkpoint, train_small_cnn

DEFAULT_LAYER = "features.conv2b"


@click.group()
def main():
    """Export CNN feature maps and segmentation rasters for rule extraction."""


@main.command("train-small")
@click.option("--data", required=True, help="'digits' or a dataset directory.")
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--kernels", type=int, default=DEFAULT_KERNELS, show_default=True)
@click.option("--dropout", type=float, default=DEFAULT_DROPOUT, show_default=True)
@click.option("--no-augment", is_flag=True, default=False, help="Disable shift augmentation.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Checkpoint path.")
def train_small_cmd(data, epochs, seed, kernels, dropout, no_augment, out):
    """Train the small two-block CNN and save a checkpoint."""
    dataset = load_dataset(data, seed)
    model = train_small_cnn(
        dataset.train,
        dataset.class_names,
        epochs=epochs,
        seed=seed,
        n_kernels=kernels,
        dropout=dropout,
        augment=not no_augment,
    )
    save_checkpoint(model, dataset.class_names, out)
    click.echo(f"saved checkpoint to {out}")


@main.command("export")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, help="'digits' or a dataset directory.")
@click.option("--split", type=click.Choice(["train", "test"]), default="train", show_default=True)
@click.option("--layer", default=DEFAULT_LAYER, show_default=True, help="Conv or ReLU module name to capture.")
@click.option("--seed", type=int, default=0, show_default=True, help="Must match the training split seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output .fms path.")
def export_cmd(model_path, data, split, layer, seed, out):
    """Forward one split through the model and write its .fms container."""
    dataset = load_dataset(data, seed)
    model, class_names = load_checkpoint(model_path)
    part = dataset.train if split == "train" else dataset.test
    try:
        export_features(
            ExportJob(
                model=model,
                class_names=class_names,
                split=part,
                split_tag=split,
                layer=layer,
                out_path=out,
            )
        )
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {out}")


@main.command("masks")
@click.option("--data", required=True, help="Dataset directory with masks.npy and concepts.json.")
@click.option("--seed", type=int, default=0, show_default=True, help="Must match the training split seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output .seg path.")
def masks_cmd(data, seed, out):
    """Rasterize the train split's segmentation annotations into a .seg container."""
    dataset = load_dataset(data, seed)
    if dataset.masks is None or dataset.concept_names is None:
        click.echo("error: dataset has no segmentation annotations", err=True)
        sys.exit(2)
    export_masks(
        dataset.masks,
        dataset.concept_names,
        dataset.train.image_ids,
        out,
        image_shape=dataset.train.images.shape[-2:],
    )
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
