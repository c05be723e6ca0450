import numpy as np
import pytest

from csseal import signals as S
from csseal.reconstruct import SparseBasis


def test_sparse_windows_have_exactly_k_coefficients():
    x = S.sparse_windows(256, 10, K=8, seed=3)
    coeffs = SparseBasis("dct", 256).analyze(x.reshape(10, 256))
    assert ((np.abs(coeffs) > 1e-9).sum(axis=1) == 8).all()
    assert np.allclose(np.sqrt((x.reshape(10, 256) ** 2).mean(axis=1)), 0.1)


def test_generators_are_deterministic():
    assert np.array_equal(S.eeg_like(512, 4, seed=9), S.eeg_like(512, 4, seed=9))
    assert not np.array_equal(S.eeg_like(512, 4, seed=9), S.eeg_like(512, 4, seed=10))
    a, la = S.burst_windows(512, 20, seed=2)
    b, lb = S.burst_windows(512, 20, seed=2)
    assert np.array_equal(a, b) and np.array_equal(la, lb)


@pytest.mark.parametrize("seed", [0, 1, 7, 11])
def test_eeg_spectral_slope_in_range(seed):
    x = S.eeg_like(1024, 100, seed=seed)
    assert -2.0 <= S.spectral_slope(x) <= -0.5


def test_spectral_slope_recovers_synthetic_power_law():
    rng = np.random.default_rng(0)
    x = S._powerlaw_noise(2**17, -1.0, 1000.0, rng)
    assert S.spectral_slope(x) == pytest.approx(-1.0, abs=0.1)


def test_scaling_loudest_window():
    x = S.eeg_like(1024, 20, seed=4)
    rms = np.sqrt((S.windows_of(x, 1024) ** 2).mean(axis=1))
    assert rms.max() == pytest.approx(0.1)
    assert np.abs(x).max() < 1.0


def test_burst_windows_labels_mark_energetic_windows():
    x, labels = S.burst_windows(1024, 200, seed=1)
    energy = (S.windows_of(x, 1024) ** 2).sum(axis=1)
    assert labels.any() and not labels.all()
    assert energy[labels == 1].mean() > 2 * energy[labels == 0].mean()


def test_amplitude_series_energy_spread():
    t = S.eeg_like(256, 1, seed=0)
    w = S.amplitude_series(t, 300, spread=0.05, jitter=0.0, seed=1)
    ratio = (w**2).sum(axis=1) / (t @ t)
    assert ratio.min() >= 0.95 - 1e-12 and ratio.max() <= 1.05 + 1e-12


def test_csv_roundtrip(tmp_path):
    x = S.eeg_like(128, 3, seed=1)
    p = tmp_path / "s.csv"
    S.write_csv(p, x, rate=500)
    y, rate = S.read_csv(p)
    assert rate == 500
    assert np.allclose(x, y, rtol=1e-8, atol=1e-12)
    p.write_text("0.1\n\n# comment\n0.2\n")
    assert S.read_csv(p)[0].tolist() == [0.1, 0.2]
    p.write_text("0.1\nabc\n")
    with pytest.raises(ValueError, match=":2:"):
        S.read_csv(p)
    p.write_text("0.1\nnan\n")
    with pytest.raises(ValueError):
        S.read_csv(p)


def test_cache_roundtrip(tmp_path):
    x = np.linspace(-0.5, 0.5, 100)
    p = tmp_path / "s.bin"
    S.write_cache(p, x)
    raw = p.read_bytes()
    assert raw[:4] == b"CSS1" and int.from_bytes(raw[4:8], "little") == 100
    assert np.allclose(S.read_cache(p), x.astype(np.float32))
    assert np.allclose(S.load_signal(p)[0], x, atol=1e-7)
    p.write_bytes(raw[:-4])
    with pytest.raises(ValueError, match="truncated"):
        S.read_cache(p)


def test_windows_of():
    assert S.windows_of(np.arange(10.0), 4).shape == (2, 4)
    with pytest.raises(ValueError):
        S.windows_of(np.arange(3.0), 4)
