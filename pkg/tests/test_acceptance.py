"""Acceptance gate: one test per shipped guarantee.

Each test prints a single ``[ACCEPT] <name>: PASS`` or ``FAIL`` line (visible
with ``pytest -s``; the pytest verdict carries the same information) and
enforces the stated tolerances and runtime budgets.
"""

import functools
import json
import time

import numpy as np
import pytest
from scipy import ndimage

from voxanom import (ForeignPatch, FusionConfig, ValidationSetSpec, Volume3D,
                     average_precision, baseline_gradient_scorer, BrushParams,
                     build_validation_set, default_brush_grid, evaluate_pixelwise,
                     evaluate_samplewise, fuse_scores, gaussian_kernel,
                     gen_brush_walk, gen_cuboid, gen_sphere, interpolate,
                     make_additive_noise, make_uniform_noise, plan_windows,
                     read_volume, sample_region, smooth_mask, write_volume)
from voxanom.cli import main

from phantoms import make_phantom, make_textured_phantom


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[ACCEPT] {name}: FAIL")
                raise
            print(f"[ACCEPT] {name}: PASS")
        return wrapper
    return deco


def max_step6(field):
    """Largest absolute difference between 6-neighbors."""
    best = 0.0
    for axis in range(3):
        best = max(best, float(np.abs(np.diff(field, axis=axis)).max()))
    return best


def ap_sweep_oracle(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    total = y.sum()
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = (pred & y).sum()
        ap += (tp / total - prev_recall) * (tp / pred.sum())
        prev_recall = tp / total
    return float(ap)


@criterion("interpolation identities")
def test_accept_interpolation_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    dims = (16, 16, 16)
    for _ in range(1000):
        x = Volume3D(rng.uniform(0, 1, dims).astype(np.float32))
        p = ForeignPatch(rng.uniform(0, 1, dims).astype(np.float32))
        mask = (rng.random(dims) < 0.25).astype(np.float32)
        mask[tuple(rng.integers(0, 16, size=3))] = 1.0
        zero = interpolate(x, p, mask, 0.0, (0, 0, 0))
        assert zero.image.data.tobytes() == x.data.tobytes()
        assert not zero.label.data.any()
        full = interpolate(x, p, mask, 1.0, (0, 0, 0))
        inside = mask > 0
        np.testing.assert_allclose(full.image.data[inside], p.data[inside],
                                   rtol=0, atol=1e-6)
        np.testing.assert_array_equal(full.image.data[~inside], x.data[~inside])
        alpha = float(rng.uniform(0, 1))
        mid = interpolate(x, p, mask, alpha, (0, 0, 0))
        lo = np.minimum(x.data, p.data) - 1e-6
        hi = np.maximum(x.data, p.data) + 1e-6
        assert (mid.image.data >= lo).all() and (mid.image.data <= hi).all()
        np.testing.assert_array_equal(mid.label.data,
                                      (alpha * mask).astype(np.float32))
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


@criterion("edge smoothing shrinks the alpha step")
def test_accept_edge_smoothing():
    for k in (3, 5, 7):
        assert abs(float(gaussian_kernel(k).sum()) - 1.0) <= 1e-6
    rng = np.random.default_rng(102)
    canvas = (32, 32, 32)
    grid = default_brush_grid(canvas)
    for i in range(100):
        fam = i % 3
        if fam == 0:
            extent = tuple(int(v) for v in rng.integers(6, 20, size=3))
            mask = gen_cuboid(canvas, extent)
        elif fam == 1:
            mask = gen_sphere(canvas, float(rng.uniform(3, 10)))
        else:
            params = grid[i % len(grid)]
            mask = gen_brush_walk(
                BrushParams(params.steps, params.initial_radius,
                            params.step_sigma, canvas),
                np.random.default_rng([102, i]))
        alpha = float(rng.uniform(0.3, 1.0))
        kernel = int(rng.choice([3, 5, 7]))
        hard_step = max_step6(alpha * mask)
        assert hard_step == pytest.approx(alpha, abs=1e-6)
        soft_step = max_step6(alpha * smooth_mask(mask, kernel))
        assert soft_step < hard_step, (i, soft_step, hard_step)


@criterion("brush walks stay 26-connected")
def test_accept_brush_walks():
    canvas = (48, 48, 48)
    grid = default_brush_grid(canvas)
    struct = np.ones((3, 3, 3), dtype=bool)
    for i in range(200):
        params = grid[i % len(grid)]
        mask = gen_brush_walk(params, np.random.default_rng([103, i]))
        assert mask.any(), i
        _, n = ndimage.label(mask, structure=struct)
        assert n == 1, (i, n)
    for r in (3.0, 7.5, 12.0):
        one = gen_brush_walk(BrushParams(1, r, 1.0, canvas),
                             np.random.default_rng(0))
        np.testing.assert_array_equal(one, gen_sphere(canvas, r))


@criterion("average precision matches the brute-force sweep")
def test_accept_ap_oracle():
    rng = np.random.default_rng(104)
    for trial in range(500):
        if trial % 5 < 3:
            n = int(rng.integers(2, 1001))
            levels = int(rng.integers(2, 65))
            scores = rng.integers(0, levels, n) / max(levels - 1, 1)
        else:
            n = int(rng.integers(2, 301))
            scores = rng.uniform(0, 1, n)
        labels = rng.random(n) < rng.uniform(0.05, 0.95)
        if not labels.any():
            labels[int(rng.integers(0, n))] = True
        got = average_precision(scores, labels)
        want = ap_sweep_oracle(scores, labels)
        assert abs(got - want) <= 1e-9, (trial, got, want)
    n = 10_000
    labels = np.zeros(n, dtype=bool)
    labels[: int(0.3 * n)] = True
    permuted = np.random.default_rng(105).permutation(labels)
    got = average_precision(np.random.default_rng(106).uniform(0, 1, n), permuted)
    assert abs(got - 0.3) <= 0.05


@criterion("fusion is constant-invariant with full coverage")
def test_accept_fusion():
    rng = np.random.default_rng(107)
    for _ in range(50):
        dims = tuple(int(v) for v in rng.integers(4, 29, size=3))
        patch = tuple(int(v) for v in rng.integers(2, 15, size=3))
        overlap = float(rng.choice([0.0, 0.25, 0.5, 0.75]))
        cfg = FusionConfig(patch, overlap)
        windows = plan_windows(dims, cfg)
        hits = np.zeros(dims, dtype=np.int64)
        for w in windows:
            assert all(c + s <= d for c, s, d in zip(w.corner, w.size, dims))
            hits[w.slices] += 1
        assert (hits >= 1).all(), (dims, patch, overlap)
        c = float(rng.uniform(0, 1))
        fused = fuse_scores(
            [(w, np.full(w.size, c, dtype=np.float32)) for w in windows],
            cfg, volume_dims=dims)
        np.testing.assert_allclose(fused.data, c, rtol=0, atol=1e-6)


@criterion("default validation composition and oracle AP")
def test_accept_validation_set(tmp_path):
    held_out = []
    for i in range(3):
        path = tmp_path / f"held_{i}.rvol"
        write_volume(make_phantom(dims=(32, 32, 32), seed=400 + i), path)
        held_out.append(path)
    out = tmp_path / "val"
    entries = build_validation_set(held_out, ValidationSetSpec(), out)
    assert len(entries) == 260
    by_family = {}
    for e in entries:
        by_family[e["family"]] = by_family.get(e["family"], 0) + 1
    assert by_family.pop("healthy") == 50
    assert len(by_family) == 7 and all(v == 30 for v in by_family.values())

    scores = tmp_path / "oracle"
    scores.mkdir()
    n_pos = 0
    n_vox = 0
    for e in entries:
        truth = read_volume(out / e["truth_path"])
        write_volume(truth, scores / (e["image_path"][:-5] + "_score.rvol"))
        n_pos += int((truth.data > 0.5).sum())
        n_vox += truth.data.size
    assert evaluate_pixelwise(out, scores).ap_overall == 1.0
    assert evaluate_samplewise(out, scores).ap_overall == 1.0

    for e in entries:
        truth = read_volume(out / e["truth_path"])
        write_volume(Volume3D(1.0 - truth.data),
                     scores / (e["image_path"][:-5] + "_score.rvol"))
    inverted = evaluate_pixelwise(out, scores).ap_overall
    assert inverted <= n_pos / n_vox + 0.01


@criterion("hard edges out-score smoothed edges end-to-end")
def test_accept_directional_end_to_end():
    start = time.perf_counter()
    phantoms = [make_textured_phantom(dims=(64, 64, 64), seed=i) for i in range(3)]

    def agreed_sign_seed(i):
        # pick an offset where both arms draw the same noise sign even
        # though the smoothed arm consumes a kernel choice first
        for k in range(200):
            hard_rng = np.random.default_rng([13, i, k])
            hard_sign = hard_rng.random() < 0.5
            soft_rng = np.random.default_rng([13, i, k])
            soft_rng.integers(0, 3)
            if hard_sign == (soft_rng.random() < 0.5):
                return k
        raise AssertionError("no sign-agreeing seed found")

    pool = {"hard": ([], []), "smooth": ([], [])}
    for i in range(15):
        vol = phantoms[i % 3]
        region = sample_region(vol.dims, np.random.default_rng([13, i, 0]), (16, 48))
        if i % 2 == 0:
            mag = float(np.random.default_rng([13, i, 1]).uniform(0.1, 0.5))
            k = agreed_sign_seed(i)
            cases = (make_additive_noise(vol, region, mag, False,
                                         np.random.default_rng([13, i, k])),
                     make_additive_noise(vol, region, mag, True,
                                         np.random.default_rng([13, i, k])))
        else:
            cases = (make_uniform_noise(vol, region,
                                        np.random.default_rng([13, i, 4]), False),
                     make_uniform_noise(vol, region,
                                        np.random.default_rng([13, i, 4]), True))
        for arm, case in zip(("hard", "smooth"), cases):
            smap = baseline_gradient_scorer(case.image)
            pool[arm][0].append(smap.data.reshape(-1))
            pool[arm][1].append(case.truth.data.reshape(-1) > 0.5)
    ap = {arm: average_precision(np.concatenate(s), np.concatenate(y))
          for arm, (s, y) in pool.items()}
    elapsed = time.perf_counter() - start
    assert ap["hard"] > ap["smooth"], ap
    assert elapsed < 120.0, f"took {elapsed:.1f}s"


@criterion("CLI reruns are bitwise deterministic")
def test_accept_cli_determinism(tmp_path):
    vols = tmp_path / "vols"
    vols.mkdir()
    for i in range(2):
        write_volume(make_phantom(dims=(24, 24, 24), seed=500 + i),
                     vols / f"scan_{i}.rvol")
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({
        "validation": {
            "counts": {"healthy": 2, "add_noise": 1, "add_noise_smooth": 1,
                       "deform": 1, "reflect": 1, "shift": 1,
                       "uniform_noise": 1, "uniform_noise_smooth": 1},
            "region_size_range": [6, 10],
        },
    }))

    def run_chain(root, workers):
        lib, ds, val = root / "lib", root / "ds", root / "val"
        scores, report = root / "scores", root / "report.json"
        assert main(["build-shapes", "--count", "4", "--canvas", "12",
                     "--seed", "3", "--out", str(lib)]) == 0
        assert main(["synthesize", "--volumes", str(vols), "--library", str(lib),
                     "--count", "2", "--patch", "12", "--shapes", "complex",
                     "--seed", "3", "--workers", workers, "--out", str(ds)]) == 0
        assert main(["make-validation", "--config", str(cfg_path),
                     "--volumes", str(vols), "--seed", "3",
                     "--workers", workers, "--out", str(val)]) == 0
        assert main(["score", "--manifest", str(val), "--out", str(scores)]) == 0
        assert main(["evaluate", "--manifest", str(val), "--scores", str(scores),
                     "--task", "pixel", "--out", str(report)]) == 0
        files = {}
        for sub in (lib, ds, val, scores):
            for p in sorted(sub.iterdir()):
                files[f"{sub.name}/{p.name}"] = p.read_bytes()
        files["report.json"] = report.read_bytes()
        return files

    first = run_chain(tmp_path / "a", "1")
    second = run_chain(tmp_path / "b", "1")
    threaded = run_chain(tmp_path / "c", "3")
    assert first.keys() == second.keys() == threaded.keys()
    for name in first:
        assert first[name] == second[name], f"rerun differs: {name}"
        assert first[name] == threaded[name], f"worker count changed: {name}"
