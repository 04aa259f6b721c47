import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import gaussian_filter

from mebench.errors import ConfigError, DataError
from mebench.flowcore import (
    FLOW_CLIP,
    STRAIN_CLIP,
    FlowField,
    FlowParams,
    GrayFrame,
    assemble_flow_image,
    compute_strain,
    estimate_flow,
    load_frame,
    load_rgb_frame,
    read_flow_image,
    warp_bilinear,
    write_flow_image,
    write_pgm,
)
from mebench.flowcore.flowimage import BadMagicError, TruncatedFileError


def smooth_texture(h, w, seed, sigma=3.0):
    rng = np.random.Generator(np.random.PCG64(seed))
    t = gaussian_filter(rng.random((h, w)), sigma=sigma, mode="nearest")
    t = (t - t.min()) / (t.max() - t.min())
    return 0.1 + 0.8 * t


def translate_frame(tex, dx, dy):
    """Oracle warp: content moves by (+dx, +dy) px, bilinear resampled."""
    u = np.full_like(tex, -dx)
    v = np.full_like(tex, -dy)
    return np.clip(warp_bilinear(tex, u, v), 0.0, 1.0)


# ---------------------------------------------------------------- frames


class TestLoadFrame:
    def test_pgm_linear_scaling(self, tmp_path):
        p = tmp_path / "tiny.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        frame = load_frame(p)
        expected = np.array([[0.0, 1.0], [128 / 255, 64 / 255]])
        np.testing.assert_allclose(frame.values, expected, rtol=0, atol=1e-12)
        assert abs(frame.values[1, 0] - 0.50196) < 1e-5
        assert abs(frame.values[1, 1] - 0.25098) < 1e-5

    def test_deterministic_reload(self, tmp_path):
        p = tmp_path / "f.pgm"
        write_pgm(p, smooth_texture(16, 16, 3))
        a = load_frame(p)
        b = load_frame(p)
        assert np.array_equal(a.values, b.values)

    def test_all_zero_image(self, tmp_path):
        p = tmp_path / "z.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(16))
        frame = load_frame(p)
        assert np.array_equal(frame.values, np.zeros((4, 4)))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_frame(tmp_path / "nope.pgm")

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"XY\n2 2\n255\n" + bytes(4))
        with pytest.raises(DataError):
            load_frame(p)

    def test_zero_sized_image(self, tmp_path):
        p = tmp_path / "empty.pgm"
        p.write_bytes(b"P5\n0 0\n255\n")
        with pytest.raises(DataError):
            load_frame(p)

    def test_rgb_luminance(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
        frame = load_frame(p)
        assert abs(frame.values[0, 0] - 0.299) < 1e-12

    def test_rgb_frame_channels(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 255, 0]))
        rgb = load_rgb_frame(p)
        assert rgb.shape == (3, 1, 2)
        assert rgb[0, 0, 0] == 1.0 and rgb[1, 0, 1] == 1.0

    def test_ascii_pgm(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_text("P2\n# comment\n2 2\n255\n0 255\n128 64\n")
        frame = load_frame(p)
        assert frame.values[0, 1] == 1.0

    def test_truncated_pixels(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(DataError):
            load_frame(p)

    def test_values_out_of_range_rejected(self):
        with pytest.raises(DataError):
            GrayFrame(np.full((8, 8), 1.5))


# ---------------------------------------------------------------- flow


class TestEstimateFlow:
    def test_identical_frames_exact_zero(self):
        frame = GrayFrame(smooth_texture(32, 32, 5))
        flow = estimate_flow(frame, frame, FlowParams(zero_init=True))
        assert np.all(flow.u == 0.0)
        assert np.all(flow.v == 0.0)

    @pytest.mark.parametrize("shift", [(1.0, 0.0), (0.0, 0.5)])
    def test_translation_recovery(self, shift):
        dx, dy = shift
        tex = smooth_texture(96, 96, 11)
        apex = translate_frame(tex, dx, dy)
        flow = estimate_flow(GrayFrame(tex), GrayFrame(apex), FlowParams())
        interior = (slice(5, -5), slice(5, -5))
        epe = np.sqrt((flow.u[interior] - dx) ** 2 + (flow.v[interior] - dy) ** 2).mean()
        assert epe < 0.2
        assert abs(flow.u[interior].mean() - dx) < 0.1
        assert abs(flow.v[interior].mean() - dy) < 0.1

    def test_dimension_mismatch(self):
        a = GrayFrame(smooth_texture(32, 32, 1))
        b = GrayFrame(smooth_texture(32, 48, 1))
        with pytest.raises(DataError):
            estimate_flow(a, b)

    def test_deterministic(self):
        tex = smooth_texture(48, 48, 7)
        apex = translate_frame(tex, 0.7, -0.3)
        f1 = estimate_flow(GrayFrame(tex), GrayFrame(apex))
        f2 = estimate_flow(GrayFrame(tex), GrayFrame(apex))
        assert np.array_equal(f1.u, f2.u) and np.array_equal(f1.v, f2.v)

    def test_coarse_init_variant(self):
        tex = smooth_texture(64, 64, 9)
        apex = translate_frame(tex, 2.0, 0.0)
        flow = estimate_flow(GrayFrame(tex), GrayFrame(apex), FlowParams(zero_init=False))
        interior = (slice(5, -5), slice(5, -5))
        assert abs(flow.u[interior].mean() - 2.0) < 0.15

    def test_bad_params(self):
        with pytest.raises(ConfigError):
            FlowParams(smoothness_alpha=0.0)
        with pytest.raises(ConfigError):
            FlowParams(iterations=0)
        with pytest.raises(ConfigError):
            FlowParams(pyramid_scale=1.0)

    def test_too_small_frames(self):
        a = GrayFrame(np.zeros((4, 4)))
        with pytest.raises(DataError):
            estimate_flow(a, a)


# ---------------------------------------------------------------- strain


def grid_xy(h, w):
    y, x = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    return x, y


class TestComputeStrain:
    def test_rigid_translation_zero(self):
        flow = FlowField(u=np.ones((16, 16)), v=np.zeros((16, 16)))
        s = compute_strain(flow)
        for comp in (s.exx, s.eyy, s.exy, s.magnitude):
            np.testing.assert_allclose(comp, 0.0, atol=1e-15)

    def test_linear_shear(self):
        x, _ = grid_xy(20, 20)
        s = compute_strain(FlowField(u=0.01 * x, v=np.zeros((20, 20))))
        inner = (slice(1, -1), slice(1, -1))
        np.testing.assert_allclose(s.exx[inner], 0.01, atol=1e-9)
        np.testing.assert_allclose(s.eyy[inner], 0.0, atol=1e-9)
        np.testing.assert_allclose(s.exy[inner], 0.0, atol=1e-9)
        np.testing.assert_allclose(s.magnitude[inner], 0.01, atol=1e-9)

    def test_cross_shear_against_finite_differences(self):
        x, _ = grid_xy(20, 20)
        v = 0.02 * x
        s = compute_strain(FlowField(u=np.zeros((20, 20)), v=v))
        inner = (slice(1, -1), slice(1, -1))
        # independent check: explicit central differences of v along x
        dvdx = np.empty_like(v)
        dvdx[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / 2.0
        dvdx[:, 0] = v[:, 1] - v[:, 0]
        dvdx[:, -1] = v[:, -1] - v[:, -2]
        np.testing.assert_allclose(s.exy[inner], 0.5 * dvdx[inner], atol=1e-12)
        np.testing.assert_allclose(s.exy[inner], 0.01, atol=1e-9)
        np.testing.assert_allclose(s.magnitude[inner], np.sqrt(2 * 0.01**2), atol=1e-9)
        assert abs(s.magnitude[5, 5] - 0.014142) < 1e-6

    def test_magnitude_invariant(self):
        rng = np.random.Generator(np.random.PCG64(2))
        s = compute_strain(FlowField(u=rng.normal(size=(12, 12)), v=rng.normal(size=(12, 12))))
        np.testing.assert_allclose(
            s.magnitude**2, s.exx**2 + s.eyy**2 + 2 * s.exy**2, atol=1e-9
        )

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-5, 5))
    def test_translation_invariance(self, seed, cu, cv):
        rng = np.random.Generator(np.random.PCG64(seed))
        u = rng.normal(size=(10, 10))
        v = rng.normal(size=(10, 10))
        a = compute_strain(FlowField(u=u, v=v))
        b = compute_strain(FlowField(u=u + cu, v=v + cv))
        np.testing.assert_allclose(a.magnitude, b.magnitude, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_swap_transpose_symmetry(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        u = rng.normal(size=(9, 13))
        v = rng.normal(size=(9, 13))
        a = compute_strain(FlowField(u=u, v=v))
        b = compute_strain(FlowField(u=v.T, v=u.T))
        np.testing.assert_allclose(a.magnitude, b.magnitude.T, atol=1e-9)


# ---------------------------------------------------------------- flow image


def flat_flow(h, w, u_val=0.0, v_val=0.0):
    return FlowField(u=np.full((h, w), u_val), v=np.full((h, w), v_val))


class TestFlowImage:
    def test_zero_flow_midpoint(self):
        flow = flat_flow(8, 8)
        img = assemble_flow_image(flow, compute_strain(flow))
        assert np.all(img.channel_fx == 0.5)
        assert np.all(img.channel_fy == 0.5)
        assert np.all(img.channel_strain == 0.0)

    def test_clip_boundary(self):
        flow = flat_flow(8, 8, u_val=3.0)
        img = assemble_flow_image(flow, compute_strain(flow))
        assert np.all(img.channel_fx == 1.0)

    def test_clipping_with_warning_record(self):
        flow = flat_flow(8, 8, u_val=10.0)
        img = assemble_flow_image(flow, compute_strain(flow))
        assert np.all(img.channel_fx == 1.0)
        assert img.normalization.clip_fraction[0] == 1.0
        assert img.normalization.fx_clip == FLOW_CLIP

    def test_dims_mismatch(self):
        flow = flat_flow(8, 8)
        strain = compute_strain(flat_flow(8, 10))
        with pytest.raises(DataError):
            assemble_flow_image(flow, strain)

    def test_file_size_1x1(self, tmp_path):
        flow = flat_flow(1, 1)
        # 1x1 strain: gradient needs >=2 points per axis, build directly
        from mebench.flowcore.strain import StrainMap

        strain = StrainMap(
            exx=np.zeros((1, 1)), eyy=np.zeros((1, 1)), exy=np.zeros((1, 1)), magnitude=np.zeros((1, 1))
        )
        img = assemble_flow_image(flow, strain)
        path = tmp_path / "one.ofi"
        write_flow_image(img, path)
        assert path.stat().st_size == 48

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(4))
        flow = FlowField(u=rng.normal(scale=2, size=(13, 9)), v=rng.normal(scale=2, size=(13, 9)))
        img = assemble_flow_image(flow, compute_strain(flow))
        path = tmp_path / "rt.ofi"
        write_flow_image(img, path)
        back = read_flow_image(path)
        assert back == img

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ofi"
        path.write_bytes(b"OFI2" + bytes(44))
        with pytest.raises(BadMagicError):
            read_flow_image(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "trunc.ofi"
        path.write_bytes(b"OFI1" + np.array([4, 4], dtype="<u4").tobytes() + bytes(10))
        with pytest.raises(TruncatedFileError):
            read_flow_image(path)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 12), st.integers(2, 12))
    def test_round_trip_property(self, seed, h, w):
        import tempfile
        from pathlib import Path

        rng = np.random.Generator(np.random.PCG64(seed))
        flow = FlowField(u=rng.normal(scale=4, size=(h, w)), v=rng.normal(scale=4, size=(h, w)))
        img = assemble_flow_image(flow, compute_strain(flow))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.ofi"
            write_flow_image(img, path)
            assert read_flow_image(path) == img
