"""Distortion operators against independent per-pixel scalar oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objectrl.imaging import (
    DistortionKind,
    DistortionScale,
    FactorMode,
    ImageBuffer,
    apply_brightness,
    apply_color,
    apply_contrast,
    apply_distortion,
    grayscale,
    resize_bilinear,
    resize_to_state,
    sample_factor,
)

from conftest import random_image


# --- independent scalar oracles -------------------------------------------

def oracle_quantize(value: float) -> int:
    clamped = min(max(value, 0.0), 255.0)
    return int(math.floor(clamped + 0.5))


def oracle_gray(r: int, g: int, b: int) -> float:
    return (r + g + b) / 3.0


def oracle_brightness(pixels, factor):
    return [
        [tuple(oracle_quantize(factor * c) for c in px) for px in row] for row in pixels
    ]


def oracle_color(pixels, factor):
    out = []
    for row in pixels:
        out_row = []
        for px in row:
            gray = oracle_gray(*px)
            out_row.append(
                tuple(oracle_quantize(factor * c + (1.0 - factor) * gray) for c in px)
            )
        out.append(out_row)
    return out


def oracle_contrast(pixels, factor):
    grays = [oracle_gray(*px) for row in pixels for px in row]
    mean_gray = math.fsum(grays) / len(grays)
    return [
        [tuple(oracle_quantize(factor * c + (1.0 - factor) * mean_gray) for c in px) for px in row]
        for row in pixels
    ]


def as_nested(img: ImageBuffer):
    return [[tuple(int(c) for c in px) for px in row] for row in img.pixels]


# --- grayscale --------------------------------------------------------------

def test_grayscale_hand_values():
    img = ImageBuffer(np.array([[[90, 120, 150], [0, 0, 0], [255, 255, 255]]], dtype=np.uint8))
    gray = grayscale(img)
    assert gray.shape == (1, 3)
    assert gray[0, 0] == 120.0
    assert gray[0, 1] == 0.0
    assert gray[0, 2] == 255.0


def test_grayscale_keeps_real_values(rng):
    img = random_image(rng, 5, 4)
    gray = grayscale(img)
    expected = [[oracle_gray(*px) for px in row] for row in img.pixels.tolist()]
    assert gray.tolist() == expected


# --- hand-derived operator examples ----------------------------------------

def test_brightness_saturates():
    img = ImageBuffer(np.full((1, 1, 3), 200, dtype=np.uint8))
    assert apply_brightness(img, 1.5).pixels.tolist() == [[[255, 255, 255]]]


def test_color_hand_example():
    img = ImageBuffer(np.array([[[90, 120, 150]]], dtype=np.uint8))
    # gray = 120; 1.5*90 - 0.5*120 = 75, 1.5*120 - 0.5*120 = 120, 1.5*150 - 0.5*120 = 165
    assert apply_color(img, 1.5).pixels.tolist() == [[[75, 120, 165]]]


def test_contrast_hand_example():
    img = ImageBuffer(np.array([[[0, 0, 0], [200, 200, 200]]], dtype=np.uint8))
    # mean gray = 100; 2*0 - 100 = -100 -> 0, 2*200 - 100 = 300 -> 255
    out = apply_contrast(img, 2.0)
    assert out.pixels.tolist() == [[[0, 0, 0], [255, 255, 255]]]


@pytest.mark.parametrize("kind", list(DistortionKind))
def test_identity_factor(kind, rng):
    for _ in range(10):
        img = random_image(rng, 8, 6)
        assert apply_distortion(img, kind, 1.0) == img


def test_zero_factor_reductions(rng):
    img = random_image(rng, 7, 5)
    black = apply_brightness(img, 0.0)
    assert not black.pixels.any()

    gray_img = apply_color(img, 0.0)
    grays = grayscale(img)
    for y in range(img.height):
        for x in range(img.width):
            expected = oracle_quantize(grays[y, x])
            assert gray_img.pixels[y, x].tolist() == [expected] * 3

    flat = apply_contrast(img, 0.0)
    mu = oracle_quantize(float(grays.mean()))
    assert (flat.pixels == mu).all()


@pytest.mark.parametrize("kind", list(DistortionKind))
def test_negative_factor_rejected(kind, rng):
    img = random_image(rng, 3, 3)
    with pytest.raises(ValueError):
        apply_distortion(img, kind, -0.5)


def test_input_not_modified(rng):
    img = random_image(rng, 6, 6)
    before = img.pixels.copy()
    apply_color(img, 1.7)
    assert np.array_equal(img.pixels, before)


# --- oracle equivalence -----------------------------------------------------

def test_operators_match_scalar_oracle(rng):
    for _ in range(50):
        img = random_image(rng, 4, 4)
        factor = float(rng.uniform(0.0, 3.0))
        pixels = img.pixels.tolist()
        assert as_nested(apply_brightness(img, factor)) == oracle_brightness(pixels, factor)
        assert as_nested(apply_color(img, factor)) == oracle_color(pixels, factor)
        assert as_nested(apply_contrast(img, factor)) == oracle_contrast(pixels, factor)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    factor=st.floats(0.0, 10.0, allow_nan=False),
    kind=st.sampled_from(list(DistortionKind)),
)
def test_output_always_valid_uint8(seed, factor, kind):
    img = random_image(np.random.default_rng(seed), 5, 5)
    out = apply_distortion(img, kind, factor)
    assert out.pixels.dtype == np.uint8
    assert out.pixels.shape == img.pixels.shape


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    f1=st.floats(0.0, 5.0, allow_nan=False),
    f2=st.floats(0.0, 5.0, allow_nan=False),
)
def test_brightness_monotone_in_factor(seed, f1, f2):
    lo, hi = sorted((f1, f2))
    img = random_image(np.random.default_rng(seed), 4, 4)
    assert (apply_brightness(img, lo).pixels <= apply_brightness(img, hi).pixels).all()


# --- factor sampling --------------------------------------------------------

def test_minor_grid_membership(rng):
    allowed = {round(0.5 + 0.1 * i, 1) for i in range(14)}
    for _ in range(500):
        value = sample_factor(DistortionScale.MINOR, FactorMode.DISCRETE_GRID, rng)
        assert round(value, 1) in allowed


def test_full_grid_is_uniform(rng):
    draws = [
        sample_factor(DistortionScale.FULL, FactorMode.DISCRETE_GRID, rng)
        for _ in range(1_000_000)
    ]
    values, counts = np.unique(np.round(draws, 1), return_counts=True)
    assert len(values) == 20
    freqs = counts / len(draws)
    assert np.abs(freqs - 0.05).max() < 0.001


def test_continuous_ranges(rng):
    for _ in range(1000):
        full = sample_factor(DistortionScale.FULL, FactorMode.CONTINUOUS_UNIFORM, rng)
        minor = sample_factor(DistortionScale.MINOR, FactorMode.CONTINUOUS_UNIFORM, rng)
        assert 0.0 <= full <= 2.0
        assert 0.5 <= minor <= 1.8


def test_grid_definitions():
    assert DistortionScale.FULL.grid == tuple(i / 10 for i in range(1, 21))
    assert DistortionScale.MINOR.grid == tuple(i / 10 for i in range(5, 19))
    assert set(DistortionScale.MINOR.grid) <= set(DistortionScale.FULL.grid)


# --- resizing ---------------------------------------------------------------

def oracle_resize(img: ImageBuffer, out_w: int, out_h: int):
    src = img.pixels.astype(np.float64)
    h, w = src.shape[:2]
    out = [[None] * out_w for _ in range(out_h)]
    for j in range(out_h):
        for i in range(out_w):
            x = (i + 0.5) * (w / out_w) - 0.5
            y = (j + 0.5) * (h / out_h) - 0.5
            x0f, y0f = math.floor(x), math.floor(y)
            tx, ty = x - x0f, y - y0f
            x0 = min(max(int(x0f), 0), w - 1)
            x1 = min(max(int(x0f) + 1, 0), w - 1)
            y0 = min(max(int(y0f), 0), h - 1)
            y1 = min(max(int(y0f) + 1, 0), h - 1)
            px = []
            for c in range(3):
                top = src[y0, x0, c] * (1.0 - tx) + src[y0, x1, c] * tx
                bottom = src[y1, x0, c] * (1.0 - tx) + src[y1, x1, c] * tx
                px.append(oracle_quantize(top * (1.0 - ty) + bottom * ty))
            out[j][i] = tuple(px)
    return out


def test_resize_identity_is_byte_exact(rng):
    img = random_image(rng, 128, 128)
    out = resize_to_state(img)
    assert out == img
    assert out.pixels is not img.pixels


def test_resize_preserves_constants():
    img = ImageBuffer.filled(256, 192, (13, 200, 77))
    out = resize_to_state(img)
    assert (out.pixels == np.array([13, 200, 77], dtype=np.uint8)).all()
    assert (out.width, out.height) == (128, 128)


def test_resize_two_pixel_ramp():
    img = ImageBuffer(np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8))
    out = resize_to_state(img)
    row = out.pixels[0, :, 0].astype(int)
    assert (np.diff(row) >= 0).all()
    assert row[0] < row[-1]
    assert (out.pixels[0] == out.pixels[-1]).all()


def test_resize_matches_scalar_oracle(rng):
    for _ in range(10):
        w, h = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        out_w, out_h = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        img = random_image(rng, w, h)
        got = resize_bilinear(img, out_w, out_h)
        assert as_nested(got) == oracle_resize(img, out_w, out_h)


def test_resize_rejects_empty_output(rng):
    with pytest.raises(ValueError):
        resize_bilinear(random_image(rng, 2, 2), 0, 4)


def test_empty_image_rejected():
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((0, 4, 3), dtype=np.uint8))
