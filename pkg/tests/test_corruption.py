import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asr_tta.corruption import (
    CorruptionSpec,
    apply_corruption,
    fit_noise_segment,
    gaussian_corrupt,
    measure_snr_db,
    rms,
    snr_mix,
    synthetic_noise,
)


def test_gaussian_zero_delta_is_bit_exact():
    clean = np.array([0.5, -0.25, -0.0, 1.0], dtype=np.float32)
    out = gaussian_corrupt(clean, 0.0, seed=4)
    assert out.tobytes() == clean.tobytes()
    assert out is not clean


def test_gaussian_std_matches_delta():
    clean = np.zeros(100_000, dtype=np.float64)
    out = gaussian_corrupt(clean, 0.01, seed=1)
    assert np.std(out) == pytest.approx(0.01, rel=0.02)


def test_gaussian_deterministic():
    clean = np.ones(500, dtype=np.float32)
    a = gaussian_corrupt(clean, 0.05, seed=9)
    b = gaussian_corrupt(clean, 0.05, seed=9)
    assert np.array_equal(a, b)
    c = gaussian_corrupt(clean, 0.05, seed=10)
    assert not np.array_equal(a, c)


def test_gaussian_rejects_negative_delta():
    with pytest.raises(ValueError):
        gaussian_corrupt(np.ones(4), -0.1, seed=0)


# -- snr mixing ---------------------------------------------------------------


def test_snr_zero_db_equal_rms():
    rng = np.random.default_rng(0)
    clean = rng.standard_normal(4000)
    noise = rng.standard_normal(4000)
    mixed, scaled = snr_mix(clean, noise, 0.0, seed=1, return_components=True)
    assert rms(scaled) == pytest.approx(rms(clean), rel=1e-9)
    assert np.allclose(mixed, clean + scaled)


def test_snr_ten_db_ratio():
    rng = np.random.default_rng(2)
    clean = rng.standard_normal(4000)
    noise = rng.standard_normal(4000)
    _, scaled = snr_mix(clean, noise, 10.0, seed=1, return_components=True)
    assert rms(scaled) / rms(clean) == pytest.approx(10 ** (-0.5), rel=1e-9)
    assert rms(scaled) / rms(clean) == pytest.approx(0.3162, abs=1e-4)


def test_noise_tiled_when_short():
    clean = np.ones(1000)
    noise = np.sin(np.linspace(0, 6.0, 300))
    seg = fit_noise_segment(noise, len(clean), seed=0)
    assert len(seg) == 1000
    assert np.array_equal(seg[:300], noise)
    assert np.array_equal(seg[300:600], noise)


def test_noise_cropped_when_long():
    rng = np.random.default_rng(1)
    noise = rng.standard_normal(5000)
    a = fit_noise_segment(noise, 1000, seed=3)
    b = fit_noise_segment(noise, 1000, seed=3)
    assert len(a) == 1000
    assert np.array_equal(a, b)


def test_zero_rms_inputs_rejected():
    with pytest.raises(ValueError):
        snr_mix(np.zeros(100), np.ones(100), 0.0, seed=0)
    with pytest.raises(ValueError):
        snr_mix(np.ones(100), np.zeros(100), 0.0, seed=0)


@given(st.integers(min_value=0, max_value=2**31 - 1),
       st.floats(min_value=-12.0, max_value=12.0))
@settings(max_examples=50, deadline=None)
def test_measured_snr_matches_request(seed, snr_db):
    rng = np.random.default_rng(seed)
    clean = rng.standard_normal(2000) + 0.1
    noise = rng.standard_normal(int(rng.integers(500, 4000)))
    mixed, scaled = snr_mix(clean, noise, snr_db, seed=seed, return_components=True)
    assert measure_snr_db(clean, scaled) == pytest.approx(snr_db, abs=0.01)


# -- spec / dispatch -----------------------------------------------------


def test_spec_validation():
    CorruptionSpec(kind="gaussian", gaussian_amplitude=0.01)
    CorruptionSpec(kind="snr_mix", snr_db=5.0, noise_source="white")
    with pytest.raises(ValueError):
        CorruptionSpec(kind="gaussian")
    with pytest.raises(ValueError):
        CorruptionSpec(kind="gaussian", gaussian_amplitude=0.01, snr_db=3.0)
    with pytest.raises(ValueError):
        CorruptionSpec(kind="snr_mix", snr_db=5.0)
    with pytest.raises(ValueError):
        CorruptionSpec(kind="reverb")
    with pytest.raises(ValueError):
        CorruptionSpec(kind="gaussian", gaussian_amplitude=-1.0)


def test_apply_corruption_gaussian_metadata():
    clean = np.ones(256, dtype=np.float32)
    spec = CorruptionSpec(kind="gaussian", gaussian_amplitude=0.02, seed=5)
    out, meta = apply_corruption(clean, spec)
    assert meta["kind"] == "gaussian"
    assert meta["delta"] == 0.02
    assert len(out) == 256


def test_apply_corruption_snr_records_measured():
    rng = np.random.default_rng(3)
    clean = rng.standard_normal(2000)
    noise = rng.standard_normal(2000)
    spec = CorruptionSpec(kind="snr_mix", snr_db=5.0, noise_source="file", seed=2)
    out, meta = apply_corruption(clean, spec, noise=noise)
    assert meta["measured_snr_db"] == pytest.approx(5.0, abs=0.01)
    with pytest.raises(ValueError):
        apply_corruption(clean, spec)  # missing noise


def test_synthetic_noise_kinds():
    for kind in ("white", "hum"):
        a = synthetic_noise(2000, seed=1, kind=kind)
        b = synthetic_noise(2000, seed=1, kind=kind)
        assert np.array_equal(a, b)
        assert rms(a) > 0
    with pytest.raises(ValueError):
        synthetic_noise(100, seed=0, kind="purple")
