import json
import math

import numpy as np
import pytest

from voxanom import (Volume3D, VolumeFormatError, foreground_mask,
                     min_max_normalize, read_volume, resample_isotropic,
                     write_volume)

from phantoms import make_phantom


class TestVolume3D:
    def test_coerces_to_float32(self):
        v = Volume3D(np.ones((2, 3, 4), dtype=np.float64))
        assert v.data.dtype == np.float32
        assert v.dims == (2, 3, 4)

    def test_rejects_non_3d(self):
        with pytest.raises(ValueError):
            Volume3D(np.ones((4, 4)))

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValueError):
            Volume3D(np.ones((2, 2, 2)), spacing=(1.0, 0.0, 1.0))
        with pytest.raises(ValueError):
            Volume3D(np.ones((2, 2, 2)), spacing=(1.0, 1.0))


class TestRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        v = Volume3D(rng.uniform(0, 1, (5, 7, 3)).astype(np.float32),
                     spacing=(0.7, 1.0, 2.5))
        write_volume(v, tmp_path / "a.rvol")
        back = read_volume(tmp_path / "a.rvol")
        assert back.data.tobytes() == v.data.tobytes()
        assert back.dims == v.dims
        assert back.spacing == v.spacing

    def test_payload_is_x_fastest(self, tmp_path):
        # linear index k sits at voxel (k % W, (k // W) % H, k // (W*H))
        v = Volume3D(np.arange(2 * 3 * 4, dtype=np.float32).reshape((2, 3, 4), order="F"))
        write_volume(v, tmp_path / "b.rvol")
        payload = (tmp_path / "b.rvol").read_bytes()
        flat = np.frombuffer(payload, dtype="<f4")
        np.testing.assert_array_equal(flat, np.arange(24, dtype=np.float32))
        assert v.data[1, 0, 0] == 1.0
        assert v.data[0, 1, 0] == 2.0
        assert v.data[0, 0, 1] == 6.0

    def test_sidecar_fields(self, tmp_path):
        v = Volume3D(np.zeros((2, 2, 2), np.float32), spacing=(1.5, 1.5, 2.0))
        write_volume(v, tmp_path / "c.rvol")
        meta = json.loads((tmp_path / "c.json").read_text())
        assert meta == {"dims": [2, 2, 2], "spacing": [1.5, 1.5, 2.0],
                        "dtype": "f32le", "order": "xyz"}

    def test_accepts_sidecar_path_or_payload_path(self, tmp_path):
        v = Volume3D(np.zeros((2, 2, 2), np.float32))
        write_volume(v, tmp_path / "d.rvol")
        a = read_volume(tmp_path / "d.rvol")
        b = read_volume(tmp_path / "d.json")
        assert a.data.tobytes() == b.data.tobytes()

    def test_refuses_nan(self, tmp_path):
        data = np.zeros((2, 2, 2), np.float32)
        data[0, 0, 0] = np.nan
        v = Volume3D.__new__(Volume3D)
        object.__setattr__(v, "data", data)
        object.__setattr__(v, "spacing", (1.0, 1.0, 1.0))
        with pytest.raises(VolumeFormatError):
            write_volume(v, tmp_path / "e.rvol")


class TestReadValidation:
    def _write_valid(self, tmp_path):
        v = Volume3D(np.zeros((3, 2, 2), np.float32))
        write_volume(v, tmp_path / "v.rvol")
        return tmp_path / "v.rvol", tmp_path / "v.json"

    def test_missing_payload(self, tmp_path):
        _, sidecar = self._write_valid(tmp_path)
        (tmp_path / "v.rvol").unlink()
        with pytest.raises(VolumeFormatError, match="v.rvol"):
            read_volume(sidecar)

    def test_missing_sidecar(self, tmp_path):
        payload, sidecar = self._write_valid(tmp_path)
        sidecar.unlink()
        with pytest.raises(VolumeFormatError, match="v.json"):
            read_volume(payload)

    def test_unknown_key_rejected_by_name(self, tmp_path):
        payload, sidecar = self._write_valid(tmp_path)
        meta = json.loads(sidecar.read_text())
        meta["extra_field"] = 1
        sidecar.write_text(json.dumps(meta))
        with pytest.raises(VolumeFormatError, match="extra_field"):
            read_volume(payload)

    def test_missing_key_rejected_by_name(self, tmp_path):
        payload, sidecar = self._write_valid(tmp_path)
        meta = json.loads(sidecar.read_text())
        del meta["spacing"]
        sidecar.write_text(json.dumps(meta))
        with pytest.raises(VolumeFormatError, match="spacing"):
            read_volume(payload)

    @pytest.mark.parametrize("field,value", [
        ("dims", [3, 2]),
        ("dims", [3, 2, 0]),
        ("spacing", [1.0, 1.0, -1.0]),
        ("dtype", "f64le"),
        ("order", "zyx"),
    ])
    def test_bad_field_values(self, tmp_path, field, value):
        payload, sidecar = self._write_valid(tmp_path)
        meta = json.loads(sidecar.read_text())
        meta[field] = value
        sidecar.write_text(json.dumps(meta))
        with pytest.raises(VolumeFormatError, match=field):
            read_volume(payload)

    def test_truncated_payload(self, tmp_path):
        payload, _ = self._write_valid(tmp_path)
        payload.write_bytes(payload.read_bytes()[:-4])
        with pytest.raises(VolumeFormatError, match="bytes"):
            read_volume(payload)

    def test_invalid_json(self, tmp_path):
        payload, sidecar = self._write_valid(tmp_path)
        sidecar.write_text("{nope")
        with pytest.raises(VolumeFormatError, match="JSON"):
            read_volume(payload)


class TestResample:
    def test_identity_when_spacing_matches(self):
        v = make_phantom(dims=(12, 10, 14))
        out = resample_isotropic(v, 1.0)
        assert out.dims == v.dims
        np.testing.assert_allclose(out.data, v.data, atol=1e-6)

    def test_output_dims_rounding(self):
        v = Volume3D(np.zeros((10, 10, 10), np.float32), spacing=(2.0, 1.0, 0.5))
        out = resample_isotropic(v, 1.0)
        assert out.dims == (20, 10, 5)
        assert out.spacing == (1.0, 1.0, 1.0)

    def test_linear_ramp_preserved(self):
        # trilinear interpolation reproduces affine fields exactly in the
        # interior, so a coordinate ramp survives a 2x upsample
        w = 9
        ramp = np.broadcast_to(np.arange(w, dtype=np.float32)[:, None, None],
                               (w, w, w)).copy()
        v = Volume3D(ramp, spacing=(2.0, 2.0, 2.0))
        out = resample_isotropic(v, 1.0)
        # voxel centers: x_out = (i + 0.5) * 0.5 - 0.5 in source voxel units
        i = np.arange(out.dims[0])
        expected = np.clip((i + 0.5) * 0.5 - 0.5, 0, w - 1).astype(np.float32)
        np.testing.assert_allclose(out.data[:, 4, 4], expected, atol=1e-5)

    def test_range_never_extends(self):
        v = make_phantom(dims=(16, 16, 16), seed=3)
        out = resample_isotropic(v, 0.6)
        assert out.data.min() >= v.data.min() - 1e-6
        assert out.data.max() <= v.data.max() + 1e-6

    def test_degenerate_dim_clamps_and_warns(self):
        v = Volume3D(np.ones((3, 8, 8), np.float32), spacing=(0.1, 1.0, 1.0))
        with pytest.warns(RuntimeWarning):
            out = resample_isotropic(v, 10.0)
        assert out.dims[0] >= 1

    def test_rejects_bad_target(self):
        v = Volume3D(np.ones((4, 4, 4), np.float32))
        with pytest.raises(ValueError):
            resample_isotropic(v, 0.0)


class TestForegroundAndNormalize:
    def test_foreground_is_positive_voxels(self):
        data = np.array([[[-1.0, 0.0], [0.5, 2.0]], [[0.0, 0.0], [1e-8, 0.0]]],
                        dtype=np.float32)
        fg = foreground_mask(Volume3D(data))
        np.testing.assert_array_equal(fg, data > 0)

    def test_normalize_maps_to_unit_interval(self):
        rng = np.random.default_rng(11)
        v = Volume3D((rng.uniform(-5, 9, (6, 6, 6))).astype(np.float32))
        out = min_max_normalize(v)
        assert math.isclose(float(out.data.min()), 0.0, abs_tol=1e-7)
        assert math.isclose(float(out.data.max()), 1.0, abs_tol=1e-7)

    def test_normalize_constant_volume(self):
        v = Volume3D(np.full((4, 4, 4), 3.25, np.float32))
        out = min_max_normalize(v)
        np.testing.assert_array_equal(out.data, np.zeros((4, 4, 4), np.float32))

    def test_normalize_is_monotone(self):
        rng = np.random.default_rng(12)
        v = Volume3D(rng.normal(0, 2, (5, 5, 5)).astype(np.float32))
        out = min_max_normalize(v)
        a = v.data.reshape(-1)
        b = out.data.reshape(-1)
        order = np.argsort(a, kind="stable")
        assert np.all(np.diff(b[order]) >= -1e-7)
