"""Exporter unit tests: container contracts, hook fidelity, determinism."""

import numpy as np
import pytest
import torch

import kgrex
from fmexport.cli import main
from fmexport.containers import write_fms, write_seg
from fmexport.data import load_dataset
from fmexport.export import ExportJob, capture_maps, export_features, export_masks
from fmexport.model import load_checkpoint, save_checkpoint

from click.testing import CliRunner

from conftest import make_folder_dataset


def test_fms_round_trips_through_pipeline_reader(tmp_path, digits, tiny_model):
    path = tmp_path / "train.fms"
    split = digits.train
    job = ExportJob(tiny_model, digits.class_names, split, "train", "features.conv2b", str(path))
    activations = export_features(job)
    store = kgrex.read_store(path)
    assert (store.n_images, store.n_kernels) == (len(split.labels), tiny_model.n_kernels)
    assert (store.height, store.width) == (4, 4)
    assert store.manifest.true_labels == split.labels
    assert store.manifest.split_tag == "train"
    assert np.array_equal(store.data, activations.astype(np.float32))


def test_exported_activations_match_direct_forward(digits, tiny_model, tmp_path):
    # spot-check: the exported slice equals the hooked layer's output
    images = digits.train.images[:3]
    activations, preds = capture_maps(tiny_model, images, "features.conv2b")
    x = torch.from_numpy(images[:, None]).float()
    with torch.no_grad():
        direct = tiny_model.features(x).numpy()
        logits = tiny_model(x)
    assert np.allclose(activations, direct, atol=1e-5)
    assert (activations >= 0).all()
    assert np.array_equal(preds, logits.argmax(1).numpy())


def test_manifest_predictions_are_model_argmax(tmp_path, digits, tiny_model):
    path = tmp_path / "test.fms"
    job = ExportJob(tiny_model, digits.class_names, digits.test, "test", "features.conv2b", str(path))
    export_features(job)
    store = kgrex.read_store(path)
    x = torch.from_numpy(digits.test.images[:, None]).float()
    with torch.no_grad():
        argmax = tiny_model(x).argmax(1).numpy()
    assert store.manifest.cnn_predictions == [digits.class_names[i] for i in argmax]


def test_export_deterministic_in_eval_mode(tmp_path, digits, tiny_model):
    a, b = tmp_path / "a.fms", tmp_path / "b.fms"
    for path in (a, b):
        export_features(
            ExportJob(tiny_model, digits.class_names, digits.test, "test", "features.conv2b", str(path))
        )
    assert a.read_bytes() == b.read_bytes()


def test_capture_accepts_relu_id_and_matches_conv_id(digits, tiny_model):
    via_conv, _ = capture_maps(tiny_model, digits.test.images[:4], "features.conv2b")
    via_relu, _ = capture_maps(tiny_model, digits.test.images[:4], "features.relu2b")
    assert np.array_equal(via_conv, via_relu)


def test_missing_layer_id_is_an_error(digits, tiny_model):
    with pytest.raises(ValueError, match="not found"):
        capture_maps(tiny_model, digits.test.images[:2], "features.nope")


def test_non_conv_layer_id_is_an_error(digits, tiny_model):
    with pytest.raises(ValueError, match="expected Conv2d"):
        capture_maps(tiny_model, digits.test.images[:2], "head.classify")


def test_checkpoint_round_trip(tmp_path, digits, tiny_model):
    ckpt = tmp_path / "model.pt"
    save_checkpoint(tiny_model, digits.class_names, ckpt)
    loaded, class_names = load_checkpoint(ckpt)
    assert class_names == digits.class_names
    x = torch.from_numpy(digits.test.images[:5][:, None]).float()
    with torch.no_grad():
        assert torch.equal(loaded(x), tiny_model(x))


def test_masks_export_round_trip(tmp_path):
    root = make_folder_dataset(tmp_path / "ds")
    dataset = load_dataset(root, seed=0)
    out = tmp_path / "masks.seg"
    export_masks(
        dataset.masks,
        dataset.concept_names,
        dataset.train.image_ids,
        out,
        image_shape=dataset.train.images.shape[-2:],
    )
    seg = kgrex.read_segmentation(out)
    assert seg.n_images == len(dataset.train.image_ids)
    assert seg.concept_names[0] == "unlabeled"
    assert set(np.unique(seg.rasters)) <= {0, 1, 2}
    assert np.array_equal(seg.rasters, dataset.masks)


def test_masks_dim_mismatch_rejected(tmp_path):
    rasters = np.zeros((2, 4, 4), dtype=np.uint16)
    with pytest.raises(ValueError, match="do not match"):
        export_masks(rasters, {0: "unlabeled"}, ["a", "b"], tmp_path / "x.seg", image_shape=(8, 8))


def test_unlabeled_pixels_default_concept_zero(tmp_path):
    rasters = np.zeros((1, 2, 2), dtype=np.uint16)
    write_seg(tmp_path / "z.seg", rasters, {1: "thing"}, ["img"])
    seg = kgrex.read_segmentation(tmp_path / "z.seg")
    assert seg.concept_names[0] == "unlabeled"


def test_fms_writer_validates(tmp_path):
    with pytest.raises(ValueError, match="4-D"):
        write_fms(tmp_path / "x.fms", np.zeros((2, 2)), ["a"], ["c"], ["c"], None, "train")
    bad = np.full((1, 1, 1, 1), np.nan, dtype=np.float32)
    with pytest.raises(ValueError, match="finite"):
        write_fms(tmp_path / "x.fms", bad, ["a"], ["c"], ["c"], None, "train")


def test_cli_train_export_masks(tmp_path):
    root = make_folder_dataset(tmp_path / "ds")
    runner = CliRunner()
    ckpt = tmp_path / "m.pt"
    result = runner.invoke(
        main,
        ["train-small", "--data", str(root), "--epochs", "1", "--seed", "3",
         "--kernels", "8", "--out", str(ckpt)],
    )
    assert result.exit_code == 0, result.output
    fms = tmp_path / "train.fms"
    result = runner.invoke(
        main,
        ["export", "--model", str(ckpt), "--data", str(root), "--split", "train",
         "--seed", "3", "--out", str(fms)],
    )
    assert result.exit_code == 0, result.output
    store = kgrex.read_store(fms)
    assert store.n_kernels == 8
    seg = tmp_path / "m.seg"
    result = runner.invoke(main, ["masks", "--data", str(root), "--seed", "3", "--out", str(seg)])
    assert result.exit_code == 0, result.output
    loaded = kgrex.read_segmentation(seg)
    assert loaded.image_ids == store.manifest.image_ids
