"""Saliency map I/O and algebra: PGM/PNG, smoothing, normalization, sampling."""

import math

import numpy as np
import pytest
from PIL import Image

from gazemarkers.errors import MapFormatError
from gazemarkers.salmap import (
    MapKind,
    SaliencyMap,
    center_prior_map,
    differential_map,
    gaussian_smooth,
    load_map,
    normalize_255,
    quantize_255,
    sample_saliency,
    smooth_array,
    write_pgm,
)


def raw_map(values):
    return SaliencyMap(np.asarray(values, dtype=np.float64), MapKind.RAW)


def reflect_index(i, n):
    # numpy "symmetric" padding: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    period = 2 * n
    i = i % period
    if i < 0:
        i += period
    return i if i < n else period - 1 - i


def direct_gaussian_2d(values, sigma):
    """Dense O(n^2 k^2) reference convolution with symmetric boundary."""
    radius = max(1, math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (xs / sigma) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = values.shape
    out = np.zeros_like(values)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sy = reflect_index(y + dy, h)
                    sx = reflect_index(x + dx, w)
                    acc += k2[dy + radius, dx + radius] * values[sy, sx]
            out[y, x] = acc
    return out


# --------------------------------------------------------------------------
# SaliencyMap container


def test_map_shape_properties():
    smap = raw_map(np.zeros((3, 5)))
    assert smap.width == 5 and smap.height == 3
    assert smap.size == (5, 3)


@pytest.mark.parametrize("values", [np.zeros((0, 4)), np.zeros(4), np.zeros((2, 2, 2))])
def test_map_rejects_non_2d(values):
    with pytest.raises(MapFormatError, match="non-empty 2-D grid"):
        SaliencyMap(values, MapKind.RAW)


def test_normalized_map_range_checked():
    with pytest.raises(MapFormatError, match=r"\[0, 255\]"):
        SaliencyMap(np.array([[0.0, 256.0]]), MapKind.NORMALIZED)
    with pytest.raises(MapFormatError, match=r"\[0, 255\]"):
        SaliencyMap(np.array([[-0.1, 1.0]]), MapKind.NORMALIZED)


def test_differential_map_range_checked():
    SaliencyMap(np.array([[-255.0, 255.0]]), MapKind.DIFFERENTIAL)
    with pytest.raises(MapFormatError, match=r"\[-255, 255\]"):
        SaliencyMap(np.array([[-256.0, 0.0]]), MapKind.DIFFERENTIAL)


# --------------------------------------------------------------------------
# file I/O


def test_pgm_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(7)
    values = rng.integers(0, 256, size=(13, 17)).astype(np.uint8)
    path = tmp_path / "m.pgm"
    write_pgm(path, values)
    loaded = load_map(path)
    assert loaded.kind is MapKind.RAW
    assert np.array_equal(loaded.values, values.astype(np.float64))


def test_pgm_float_write_quantizes(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.4, 0.6], [255.4, 300.0]]))
    loaded = load_map(path)
    assert loaded.values.tolist() == [[0.0, 1.0], [255.0, 255.0]]


def test_pgm_header_comments_allowed(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x07\x09")
    assert load_map(path).values.tolist() == [[7.0, 9.0]]


def test_pgm_rejects_ascii_variant(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P2\n2 1\n255\n7 9\n")
    with pytest.raises(MapFormatError, match=r"not a binary \(P5\) PGM"):
        load_map(path)


def test_pgm_rejects_16_bit(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n2 1\n65535\n\x00\x00\x00\x00")
    with pytest.raises(MapFormatError, match="maxval 255, got 65535"):
        load_map(path)


def test_pgm_rejects_truncated_raster(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(MapFormatError, match="truncated PGM raster"):
        load_map(path)


def test_pgm_malformed_header(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\ntwo one\n255\n\x00")
    with pytest.raises(MapFormatError, match="malformed PGM header"):
        load_map(path)


def test_png_round_trip(tmp_path):
    values = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = tmp_path / "m.png"
    Image.fromarray(values, mode="L").save(path)
    loaded = load_map(path)
    assert np.array_equal(loaded.values, values.astype(np.float64))


def test_png_rejects_color(tmp_path):
    path = tmp_path / "m.png"
    Image.new("RGB", (4, 3)).save(path)
    with pytest.raises(MapFormatError, match="expected 8-bit grayscale PNG, got mode RGB"):
        load_map(path)


def test_load_map_missing_file(tmp_path):
    with pytest.raises(MapFormatError, match="no such file"):
        load_map(tmp_path / "absent.pgm")


def test_load_map_unsupported_suffix(tmp_path):
    path = tmp_path / "m.tiff"
    path.write_bytes(b"anything")
    with pytest.raises(MapFormatError, match="unsupported map format"):
        load_map(path)


def test_load_map_checks_expected_size(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.zeros((3, 4), dtype=np.uint8))
    loaded = load_map(path, expected_size=(4, 3))
    assert loaded.size == (4, 3)
    with pytest.raises(MapFormatError, match="map is 4x3 but stimulus is 5x5"):
        load_map(path, expected_size=(5, 5))


def test_quantize_255_rounds_and_clips():
    got = quantize_255(np.array([-3.0, 0.49, 0.51, 254.5, 999.0]))
    assert got.dtype == np.uint8
    assert got.tolist() == [0, 0, 1, 254, 255]


# --------------------------------------------------------------------------
# smoothing


def test_smooth_impulse_matches_direct_convolution():
    values = np.zeros((9, 11))
    values[4, 5] = 1.0
    got = smooth_array(values, sigma_px=1.5)
    want = direct_gaussian_2d(values, 1.5)
    assert np.allclose(got, want, rtol=1e-6, atol=1e-12)


def test_smooth_random_field_matches_direct_convolution():
    rng = np.random.default_rng(11)
    values = rng.random((7, 8)) * 255
    got = smooth_array(values, sigma_px=2.0)
    want = direct_gaussian_2d(values, 2.0)
    assert np.allclose(got, want, rtol=1e-6, atol=1e-9)


def test_smooth_preserves_total_mass():
    rng = np.random.default_rng(3)
    values = rng.random((20, 30))
    smoothed = smooth_array(values, sigma_px=4.0)
    assert math.isclose(smoothed.sum(), values.sum(), rel_tol=1e-9)


def test_smooth_preserves_constant_fields():
    values = np.full((6, 6), 42.0)
    assert np.allclose(smooth_array(values, 2.5), 42.0, rtol=1e-12)


def test_smooth_sigma_zero_is_identity():
    values = np.arange(12.0).reshape(3, 4)
    out = smooth_array(values, 0.0)
    assert np.array_equal(out, values)
    assert out is not values


def test_smooth_rejects_negative_sigma():
    with pytest.raises(ValueError, match="sigma_px must be >= 0"):
        smooth_array(np.zeros((2, 2)), -1.0)


def test_gaussian_smooth_wraps_smooth_array():
    smap = raw_map(np.eye(5) * 100)
    out = gaussian_smooth(smap, 1.0)
    assert out.kind is MapKind.RAW
    assert np.array_equal(out.values, smooth_array(smap.values, 1.0))


# --------------------------------------------------------------------------
# normalization and differential maps


def test_normalize_hits_exact_bounds():
    smap = raw_map([[3.0, 7.0], [11.0, 5.0]])
    out = normalize_255(smap)
    assert out.kind is MapKind.NORMALIZED
    assert out.values.min() == 0.0
    assert out.values.max() == 255.0
    assert out.values[0, 1] == (7.0 - 3.0) * 255.0 / 8.0


def test_normalize_constant_map_collapses_to_zero():
    out = normalize_255(raw_map(np.full((3, 3), 9.0)))
    assert np.array_equal(out.values, np.zeros((3, 3)))


def test_normalize_is_idempotent_on_full_range():
    smap = normalize_255(raw_map([[0.0, 128.0], [255.0, 64.0]]))
    again = normalize_255(smap)
    assert np.array_equal(again.values, smap.values)


def test_differential_antisymmetry_is_exact():
    rng = np.random.default_rng(5)
    a = normalize_255(raw_map(rng.random((6, 7))))
    b = normalize_255(raw_map(rng.random((6, 7))))
    ab = differential_map(a, b)
    ba = differential_map(b, a)
    assert ab.kind is MapKind.DIFFERENTIAL
    assert np.array_equal(ab.values, -ba.values)


def test_differential_requires_normalized_inputs():
    a = raw_map(np.zeros((2, 2)))
    b = normalize_255(raw_map([[0.0, 1.0], [2.0, 3.0]]))
    with pytest.raises(MapFormatError, match="expects two normalized maps"):
        differential_map(a, b)


def test_differential_requires_matching_shapes():
    a = normalize_255(raw_map(np.zeros((2, 2)) + [[0, 255], [0, 255]]))
    b = normalize_255(raw_map(np.array([[0.0, 255.0]])))
    with pytest.raises(MapFormatError, match="dimension mismatch"):
        differential_map(a, b)


# --------------------------------------------------------------------------
# center prior


def test_center_prior_closed_form_value():
    smap = center_prior_map(257, 65, sigma_px=16.0)
    # farthest corner: dx=128, dy=32 -> exponent -(128^2+32^2)/(2*16^2) = -34
    lo = math.exp(-34.0)
    want = (math.exp(-0.5) - lo) / (1.0 - lo) * 255.0
    assert smap.values[32, 128 + 16] == want
    assert want == 154.66531822672135


def test_center_prior_peak_and_floor():
    smap = center_prior_map(257, 65, sigma_px=16.0)
    assert smap.values[32, 128] == 255.0
    assert smap.values.min() == 0.0
    assert smap.values[0, 0] == 0.0


def test_center_prior_four_fold_symmetry():
    v = center_prior_map(33, 21, sigma_px=5.0).values
    assert np.array_equal(v, v[::-1, :])
    assert np.array_equal(v, v[:, ::-1])


def test_center_prior_default_sigma_quarter_min_side():
    explicit = center_prior_map(40, 60, sigma_px=10.0)
    default = center_prior_map(40, 60)
    assert np.array_equal(default.values, explicit.values)


def test_center_prior_rejects_bad_dimensions():
    with pytest.raises(ValueError, match="dimensions must be positive"):
        center_prior_map(0, 10)


# --------------------------------------------------------------------------
# sampling


def test_sample_saliency_exact_at_integer_nodes():
    smap = raw_map([[10.0, 20.0], [30.0, 40.0]])
    assert sample_saliency(smap, 0.0, 0.0) == 10.0
    assert sample_saliency(smap, 1.0, 0.0) == 20.0
    assert sample_saliency(smap, 0.0, 1.0) == 30.0
    assert sample_saliency(smap, 1.0, 1.0) == 40.0


def test_sample_saliency_bilinear_midpoints():
    smap = raw_map([[10.0, 20.0], [30.0, 40.0]])
    assert sample_saliency(smap, 0.5, 0.0) == 15.0
    assert sample_saliency(smap, 0.0, 0.5) == 20.0
    assert sample_saliency(smap, 0.5, 0.5) == 25.0
    assert sample_saliency(smap, 0.25, 0.75) == 10.0 * 0.75 * 0.25 + 20.0 * 0.25 * 0.25 + 30.0 * 0.75 * 0.75 + 40.0 * 0.25 * 0.75


def test_sample_saliency_vectorized():
    smap = raw_map([[0.0, 100.0], [100.0, 200.0]])
    got = sample_saliency(smap, np.array([0.0, 1.0, 0.5]), np.array([0.0, 1.0, 0.5]))
    assert got.tolist() == [0.0, 200.0, 100.0]


@pytest.mark.parametrize("x,y", [(-0.01, 0.0), (1.01, 0.0), (0.0, -0.5), (0.0, 1.5)])
def test_sample_saliency_rejects_out_of_domain(x, y):
    smap = raw_map([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError, match="outside map bounds"):
        sample_saliency(smap, x, y)


def test_sample_saliency_single_row_and_column():
    row = raw_map([[5.0, 15.0]])
    assert sample_saliency(row, 0.5, 0.0) == 10.0
    col = raw_map([[5.0], [15.0]])
    assert sample_saliency(col, 0.0, 0.5) == 10.0
