import json

import numpy as np
import pytest

from csseal import attacks as A
from csseal import signals
from csseal import x25519 as X
from csseal.field256 import Op

SECRET = b"\x11" * 32
N = 256


def segs(n, seed=3):
    return signals.windows_of(signals.eeg_like(N, n, seed=seed), N)


def test_histogram_bins():
    h = A.histogram([-1.0, -0.99, 0.0, 0.01, 0.999, 1.0])
    assert len(h) == 100 and sum(h) == 6
    assert h[0] == 2 and h[50] == 2 and h[-1] == 2


def test_eve_with_true_secret_equals_bob():
    r = A.run_coa(segs(3), SECRET, 1, 0, M=64, secrets=[SECRET])
    for s in r.segments:
        assert s.eve_rho == [s.bob_rho]
        assert s.delta == 0.0


def test_small_campaign_shape_and_invariants():
    r = A.run_coa(segs(4), SECRET, 5, 9, M=64)
    assert len(r.segments) == 4
    for s in r.segments:
        assert len(s.eve_rho) == 5
        assert s.eve_best == max(s.eve_rho)
        assert s.bob_rho > 0.8 > s.eve_best
    summary = r.summary()
    assert sum(summary["eve_histogram"]) == 20
    assert sum(summary["bob_histogram"]) == 4


def test_campaign_is_reproducible(tmp_path):
    x = segs(3)
    a = A.run_coa(x, SECRET, 3, 5, M=64)
    b = A.run_coa(x, SECRET, 3, 5, M=64)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in ("coa.csv", "coa_segments.csv", "coa.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "coa.csv").read_text().splitlines()
    assert rows[0] == "segment,party,attempt,rho"
    assert len(rows) == 1 + 3 * (1 + 3)
    assert json.loads((tmp_path / "a" / "coa.json").read_text())["attempts_per_segment"] == 3
    assert A.run_coa(x, SECRET, 3, 6, M=64).eve_values().tolist() != a.eve_values().tolist()


def test_zero_variance_segments_are_skipped():
    x = segs(2)
    x[1] = 0.0
    r = A.run_coa(x, SECRET, 2, 0, M=64)
    assert [s.index for s in r.segments] == [0]
    assert "segment 1" in r.notes[0]


def test_coa_validation():
    with pytest.raises(ValueError):
        A.run_coa(segs(1), SECRET, 0, 0, M=64)
    with pytest.raises(ValueError):
        A.run_coa(segs(1), SECRET, 2, 0, M=64, secrets=[SECRET])


def test_energy_zero_segment_and_policies():
    x = segs(30)
    x[0] = 0.0
    fixed = A.run_energy_leakage(x, SECRET, "fixed", M=64)
    shuffled = A.run_energy_leakage(x, SECRET, "shuffled", M=64)
    assert fixed.x_energy[0] == 0.0 and fixed.y_energy[0] == 0.0
    assert fixed.x_energy.size == shuffled.x_energy.size == 30
    assert np.array_equal(fixed.x_energy, shuffled.x_energy)
    with pytest.raises(ValueError):
        A.run_energy_leakage(x, SECRET, "rotating", M=64)


def test_energy_fixed_beats_shuffled_on_amplitude_series():
    t = signals.eeg_like(1024, 1, seed=2)
    x = signals.amplitude_series(t, 200, spread=0.04, seed=2)
    fixed = A.run_energy_leakage(x, SECRET, "fixed")
    shuffled = A.run_energy_leakage(x, SECRET, "shuffled")
    assert fixed.correlation >= 0.9
    assert shuffled.correlation <= 0.3


def test_energy_report_files(tmp_path):
    x, labels = signals.burst_windows(N, 10, seed=1)
    x = signals.windows_of(x, N)
    reps = [A.run_energy_leakage(x, SECRET, p, M=64, labels=labels) for p in ("fixed", "shuffled")]
    csv_path, json_path = A.write_energy_reports(reps, tmp_path)
    assert len(csv_path.read_text().splitlines()) == 21
    assert set(json.loads(json_path.read_text())) == {"fixed", "shuffled"}


def test_trace_check_flags_control():
    check = A.run_trace_check(30, 4, control_runs=10)
    assert check.ct.all_equal and check.ct.first_divergence is None
    assert set(check.ct.trace_lengths) == {check.ct.trace_lengths[0]}
    assert not check.control.all_equal
    assert check.control.divergent_run is not None


def test_trace_inputs_start_with_extreme_scalars():
    pairs = A.trace_inputs(3, 0)
    assert int.from_bytes(pairs[0][0], "little") == 8
    assert int.from_bytes(pairs[1][0], "little") == 1 << 254


def test_detector_catches_planted_secret_dependent_op():
    def leaky(scalar, base, *, trace=None):
        out = X.scalar_mult_ct(scalar, base, trace=trace)
        if scalar[3] & 0x10:
            trace.append(Op.ADD)
        return out

    check = A.run_trace_check(40, 1, smult=leaky, control_runs=2)
    assert not check.ct.all_equal
    assert check.ct.first_divergence == min(check.ct.trace_lengths)


def test_compare_traces_reports_first_difference():
    r = A.compare_traces([b"abcd", b"abcd", b"abxd"])
    assert not r.all_equal and r.first_divergence == 2 and r.divergent_run == 2
