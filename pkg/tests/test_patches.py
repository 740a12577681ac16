import numpy as np
import pytest

from voxanom import (ForeignPatch, GenerationError, PatchBank, Volume3D,
                     augment_patch, bank_insert_replace, load_bank,
                     sample_patch_from_volume, save_bank)

from phantoms import make_phantom


def const_patch(value, dims=(4, 4, 4), source_id=""):
    return ForeignPatch(np.full(dims, value, np.float32), source_id=source_id)


class TestForeignPatch:
    def test_validation(self):
        with pytest.raises(ValueError):
            ForeignPatch(np.ones((3, 3)))
        with pytest.raises(ValueError):
            ForeignPatch(np.full((2, 2, 2), np.inf, np.float32))
        p = ForeignPatch(np.ones((2, 3, 4)))
        assert p.dims == (2, 3, 4)
        assert p.data.dtype == np.float32


class TestSampling:
    def test_strict_inequality_required(self):
        v = Volume3D(np.zeros((8, 8, 8), np.float32))
        with pytest.raises(GenerationError):
            sample_patch_from_volume(v, (8, 8, 8), np.random.default_rng(0))
        with pytest.raises(GenerationError):
            sample_patch_from_volume(v, (4, 9, 4), np.random.default_rng(0))

    def test_all_corners_reachable_and_balanced(self):
        # volume 3^3, patch 2^3: 8 valid corners, uniformly drawn
        data = np.arange(27, dtype=np.float32).reshape((3, 3, 3), order="F")
        v = Volume3D(data)
        rng = np.random.default_rng(123)
        seen = {}
        for _ in range(800):
            p = sample_patch_from_volume(v, (2, 2, 2), rng)
            corner = tuple(int(np.argwhere(data == p.data[0, 0, 0])[0][i]) for i in range(3))
            seen[corner] = seen.get(corner, 0) + 1
        assert set(seen) == {(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)}
        counts = np.array(list(seen.values()))
        assert counts.min() > 60 and counts.max() < 140  # 100 expected each

    def test_constant_volume_gives_constant_patch(self):
        v = Volume3D(np.full((6, 6, 6), 0.3, np.float32))
        p = sample_patch_from_volume(v, (3, 3, 3), np.random.default_rng(1))
        np.testing.assert_array_equal(p.data, np.full((3, 3, 3), 0.3, np.float32))

    def test_patch_data_is_a_copy(self, phantom):
        p = sample_patch_from_volume(phantom, (5, 5, 5), np.random.default_rng(2))
        before = phantom.data.copy()
        p.data[...] = -1.0
        np.testing.assert_array_equal(phantom.data, before)

    def test_source_id_recorded(self, phantom):
        p = sample_patch_from_volume(phantom, (5, 5, 5), np.random.default_rng(3),
                                     source_id="vol_007")
        assert p.source_id == "vol_007"


class TestBank:
    def test_fills_then_caps(self):
        bank = PatchBank(capacity=8, seed=0)
        for i in range(8):
            bank_insert_replace(bank, const_patch(i / 10))
        assert len(bank) == 8
        # the first K inserts are all retained, in order
        for i, p in enumerate(bank.patches):
            np.testing.assert_array_equal(p.data, np.full((4, 4, 4), i / 10, np.float32))

    def test_replacement_changes_exactly_one_slot(self):
        bank = PatchBank(capacity=6, seed=4)
        for i in range(6):
            bank_insert_replace(bank, const_patch(i / 10, source_id=f"s{i}"))
        before = bank.snapshot()
        bank_insert_replace(bank, const_patch(0.99, source_id="new"))
        after = bank.snapshot()
        assert len(after) == 6
        changed = [i for i in range(6) if before[i] is not after[i]]
        assert len(changed) == 1
        assert after[changed[0]].source_id == "new"

    def test_size_never_exceeds_capacity(self):
        bank = PatchBank(capacity=4, seed=1)
        for i in range(50):
            bank_insert_replace(bank, const_patch(i / 100))
            assert len(bank) <= 4
        assert len(bank) == 4

    def test_evolution_deterministic_from_seed(self):
        def run(seed):
            bank = PatchBank(capacity=3, seed=seed)
            for i in range(30):
                bank_insert_replace(bank, const_patch(i / 100))
            return [float(p.data[0, 0, 0]) for p in bank.patches]
        assert run(7) == run(7)
        assert run(7) != run(8)

    def test_dim_mismatch_rejected(self):
        bank = PatchBank(capacity=4, seed=0)
        bank_insert_replace(bank, const_patch(0.1, dims=(4, 4, 4)))
        with pytest.raises(GenerationError):
            bank_insert_replace(bank, const_patch(0.2, dims=(4, 4, 5)))

    def test_snapshot_is_immutable_view(self):
        bank = PatchBank(capacity=2, seed=0)
        bank_insert_replace(bank, const_patch(0.1))
        snap = bank.snapshot()
        bank_insert_replace(bank, const_patch(0.2))
        assert len(snap) == 1

    def test_save_load_round_trip(self, tmp_path):
        bank = PatchBank(capacity=4, seed=9)
        for i in range(3):
            bank_insert_replace(bank, const_patch(i / 10, source_id=f"v{i}"))
        save_bank(bank, tmp_path / "bank")
        back = load_bank(tmp_path / "bank")
        assert back.capacity == 4
        assert back.rng_seed == 9
        assert len(back) == 3
        for a, b in zip(bank.patches, back.patches):
            assert a.data.tobytes() == b.data.tobytes()
            assert a.source_id == b.source_id


class TestAugmentation:
    def test_forced_identity_returns_clamped_input(self):
        p = const_patch(0.5)
        out = augment_patch(p, np.random.default_rng(0), noise_sigma=0.0,
                            shift=0.0, rot90_steps=(0, 0, 0),
                            fine_angles=(0.0, 0.0, 0.0))
        np.testing.assert_array_equal(out.data, p.data)

    def test_pure_shift(self):
        p = const_patch(0.5)
        out = augment_patch(p, np.random.default_rng(0), noise_sigma=0.0,
                            shift=0.1, rot90_steps=(0, 0, 0),
                            fine_angles=(0.0, 0.0, 0.0))
        np.testing.assert_allclose(out.data, 0.6, atol=1e-6)

    def test_shift_clamps_at_one(self):
        p = const_patch(0.99)
        out = augment_patch(p, np.random.default_rng(0), noise_sigma=0.0,
                            shift=0.1, rot90_steps=(0, 0, 0),
                            fine_angles=(0.0, 0.0, 0.0))
        np.testing.assert_array_equal(out.data, np.ones((4, 4, 4), np.float32))

    def test_negative_shift_clamps_at_zero(self):
        p = const_patch(0.05)
        out = augment_patch(p, np.random.default_rng(0), noise_sigma=0.0,
                            shift=-0.1, rot90_steps=(0, 0, 0),
                            fine_angles=(0.0, 0.0, 0.0))
        np.testing.assert_array_equal(out.data, np.zeros((4, 4, 4), np.float32))

    def test_quarter_turn_permutes_voxels(self):
        rng = np.random.default_rng(5)
        data = rng.uniform(0.2, 0.8, (4, 4, 4)).astype(np.float32)
        p = ForeignPatch(data)
        out = augment_patch(p, np.random.default_rng(0), noise_sigma=0.0,
                            shift=0.0, rot90_steps=(1, 0, 0),
                            fine_angles=(0.0, 0.0, 0.0))
        np.testing.assert_array_equal(out.data, np.rot90(data, k=1, axes=(1, 2)))

    def test_output_in_unit_interval(self):
        v = make_phantom(dims=(20, 20, 20), seed=5)
        src = sample_patch_from_volume(v, (9, 9, 9), np.random.default_rng(0))
        for seed in range(25):
            out = augment_patch(src, np.random.default_rng(seed))
            assert out.data.min() >= 0.0
            assert out.data.max() <= 1.0
            assert out.dims == src.dims

    def test_non_cubic_dims_preserved(self):
        rng = np.random.default_rng(6)
        p = ForeignPatch(rng.uniform(0, 1, (4, 6, 8)).astype(np.float32))
        for seed in range(20):
            out = augment_patch(p, np.random.default_rng(seed))
            assert out.dims == (4, 6, 8)

    def test_deterministic_given_stream(self):
        p = const_patch(0.4, dims=(6, 6, 6))
        a = augment_patch(p, np.random.default_rng(11))
        b = augment_patch(p, np.random.default_rng(11))
        np.testing.assert_array_equal(a.data, b.data)

    def test_source_id_survives(self):
        p = const_patch(0.4, source_id="donor")
        out = augment_patch(p, np.random.default_rng(1))
        assert out.source_id == "donor"
