import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from evwf.dsp import AudioBuffer
from evwf.metrics import (
    PESQ_FOOTER,
    EvalRow,
    NoValidFramesError,
    feature_mse,
    log_spectral_distance,
    render_report,
    segmental_snr,
    ttest_table,
    two_sample_ttest,
)


def test_segmental_snr_known_value(rng):
    c = rng.standard_normal(8000)
    noise = rng.standard_normal(8000)
    # scale the error so every frame sits at exactly 10 dB
    frames = noise.reshape(10, 800)
    frames *= np.sqrt((c.reshape(10, 800) ** 2).sum(1) / (frames ** 2).sum(1) / 10)[:, None]
    assert segmental_snr(AudioBuffer(c), AudioBuffer(c + frames.ravel())) == pytest.approx(10.0)


def test_segmental_snr_clamps_and_skips_silence(rng):
    c = np.concatenate([np.zeros(800), rng.standard_normal(1600)])
    assert segmental_snr(AudioBuffer(c), AudioBuffer(c)) == 35.0
    assert segmental_snr(AudioBuffer(c), AudioBuffer(-100 * c)) == -10.0
    with pytest.raises(NoValidFramesError):
        segmental_snr(AudioBuffer(np.zeros(1600)), AudioBuffer(np.zeros(1600)))


def test_lsd_zero_for_identical_and_scale(rng):
    c = AudioBuffer(rng.standard_normal(10000))
    assert log_spectral_distance(c, c) == 0.0
    assert log_spectral_distance(c, AudioBuffer(2 * c.samples)) == pytest.approx(20 * np.log10(2), rel=1e-6)


def test_feature_mse():
    assert feature_mse(np.zeros((2, 3)), np.ones((2, 3))) == 1.0
    with pytest.raises(ValueError):
        feature_mse(np.zeros((2, 3)), np.zeros((3, 2)))


@given(st.integers(0, 10 ** 6), st.integers(2, 30), st.integers(2, 30))
def test_welch_matches_scipy(seed, na, nb):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal(na), 1.5 * r.standard_normal(nb) + 0.3
    ours = two_sample_ttest(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert ours.t_stat == pytest.approx(ref.statistic, rel=1e-9)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)


def test_ttest_degenerate():
    assert two_sample_ttest([1, 1, 1], [1, 1]).p_value == 1.0
    res = two_sample_ttest([1, 1, 1], [2, 2])
    assert res.p_value == 0.0 and res.reject_at_0_05
    with pytest.raises(ValueError):
        two_sample_ttest([1], [1, 2])


def _rows():
    return [EvalRow(m, s, f"u{i}", v + i, 2.0, 0.5)
            for s in (-6.0, 0.0) for i in range(3)
            for m, v in (("evwf_ideal", 5.0), ("ss", 1.0), ("noisy", 1.0))]


def test_report_csv_schema_and_order():
    text, table = render_report(_rows())
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["method", "snr_db", "utterance", "seg_snr_db", "lsd_db", "feature_mse"]
    assert [r[0] for r in rows[1:4]] == ["noisy"] * 3
    assert rows[1][3] == "1.000000"
    assert PESQ_FOOTER in table


def test_report_independent_of_row_order():
    rows = _rows()
    assert render_report(rows) == render_report(rows[::-1])


def test_ttest_table_marks():
    lines = ttest_table(_rows(), "evwf_ideal", "noisy").splitlines()
    assert lines[0] == "snr_db,p_value,reject_h0"
    assert [line.split(",")[0] for line in lines[1:]] == ["-6", "0"]
    assert all(line.endswith("(+)") for line in lines[1:])
    same = ttest_table(_rows(), "ss", "noisy").splitlines()
    assert all(line.endswith("(-)") for line in same[1:])


def test_eval_row_validation():
    with pytest.raises(ValueError):
        EvalRow("wiener", 0.0, "u", 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        EvalRow("ss", 0.0, "u", float("nan"), 1.0, 1.0)
