import time
from types import SimpleNamespace

import pytest

from deskvol import (build_desk_validation, build_tiny_dataset, tiny_config,
                     write_sources)

import anomtrainer as at


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    return build_tiny_dataset(tmp_path_factory.mktemp("tiny"))


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory, tiny_dataset):
    """A 10-step checkpoint for inference tests."""
    out = tmp_path_factory.mktemp("tiny_run")
    config = tiny_config(steps=10)
    summary = at.train(config, tiny_dataset, out)
    return SimpleNamespace(config=config, out=out,
                           checkpoint=out / "ckpt_fold0.pt", summary=summary)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The full desk pipeline: dataset, 20-case validation set, a complete
    desk training run, and per-case window score files."""
    root = tmp_path_factory.mktemp("desk")
    train_paths = write_sources(root / "sources", 8, (48, 48, 48), seed0=100)
    val_paths = write_sources(root / "sources", 4, (48, 48, 48), seed0=200)

    from voxanom import GenerationConfig, emit_dataset
    gen = GenerationConfig(patch_dims=(16, 16, 16),
                           families=("cuboid", "sphere"), mode="mixed")
    emit_dataset(train_paths, gen, root / "data", count_per_volume=6, seed=7)
    entries = build_desk_validation(val_paths, root / "val")

    config = at.desk_config()
    started = time.time()
    summary = at.train(config, root / "data", root / "run")
    train_seconds = time.time() - started

    checkpoint = root / "run" / "ckpt_fold0.pt"
    exchange = {}
    for entry in entries:
        stem = entry["image_path"][:-len(".rvol")]
        at.infer_windows(checkpoint, root / "val" / entry["image_path"],
                         root / "exchange" / stem)
        exchange[stem] = root / "exchange" / stem
    return SimpleNamespace(root=root, config=config, summary=summary,
                           train_seconds=train_seconds, checkpoint=checkpoint,
                           entries=entries, val_dir=root / "val",
                           exchange=exchange)
