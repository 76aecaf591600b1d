import ast
import pathlib
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import evwf.enhance as enhance_mod
from evwf.dsp import AudioBuffer, StftConfig
from evwf.enhance import (
    AlignmentError,
    EvwfConfig,
    enhance_utterance,
    evwf_gains,
    expand_gain,
    fb_wiener_gain,
    ideal_mapping_features,
)
from evwf.filterbank import LogFbFeatures, build_filterbank, extract_logfb

energies = arrays(np.float64, (3, 23), elements=st.floats(1e-6, 1e4))


@given(energies, energies, st.sampled_from([0.0, 0.05, 0.3]))
def test_gain_in_unit_interval(clean, noisy, floor):
    fb = build_filterbank()
    g = expand_gain(fb, clean, noisy, EvwfConfig(gain_floor=floor))
    assert g.shape == (3, 1025)
    assert np.all(g >= floor) and np.all(g <= 1.0)


@given(energies)
def test_equal_energies_give_unit_gain(e):
    fb = build_filterbank()
    np.testing.assert_allclose(expand_gain(fb, e, e), 1.0)


def test_channel_gain_is_clamped_ratio():
    g = fb_wiener_gain(np.array([1.0, 4.0, 0.0]), np.array([2.0, 2.0, 1.0]), EvwfConfig(gain_floor=0.1))
    np.testing.assert_allclose(g, [0.5, 1.0, 0.1])


def test_sqrt_power_option(fb):
    clean, noisy = np.full((1, 23), 1.0), np.full((1, 23), 4.0)
    direct = expand_gain(fb, clean, noisy)
    rooted = expand_gain(fb, clean, noisy, EvwfConfig(gain_exponent="sqrt_power"))
    np.testing.assert_allclose(rooted, np.sqrt(direct))


def test_dc_and_nyquist_copy_neighbours(fb, rng):
    g = expand_gain(fb, rng.uniform(0.1, 1, (2, 23)), rng.uniform(1, 2, (2, 23)))
    np.testing.assert_array_equal(g[:, 0], g[:, 1])
    np.testing.assert_array_equal(g[:, 1024], g[:, 1023])


def test_linear_feature_domain_equivalent(fb, rng):
    x = AudioBuffer(0.1 * rng.standard_normal(20000))
    clean = AudioBuffer(0.05 * rng.standard_normal(20000))
    feat = ideal_mapping_features(clean, fb)
    a = enhance_utterance(x, feat, fb)
    b = enhance_utterance(x, np.exp(feat.frames), fb, evwf_cfg=EvwfConfig(feature_domain="linearfb"))
    np.testing.assert_allclose(a.samples, b.samples, atol=1e-12)


def test_alignment_trim_and_reject(fb, rng):
    x = AudioBuffer(rng.standard_normal(20000))
    feat = extract_logfb(x, StftConfig(), fb)
    with pytest.warns(UserWarning, match="trimming"):
        spec, gain = evwf_gains(x, LogFbFeatures(feat.frames[:-2]), fb)
    assert spec.n_frames == gain.shape[0] == feat.n_frames - 2
    with pytest.raises(AlignmentError):
        evwf_gains(x, LogFbFeatures(feat.frames[:-3]), fb)


def test_output_never_louder_per_bin(fb, rng):
    clean = AudioBuffer(rng.standard_normal(20000))
    noisy = AudioBuffer(clean.samples + rng.standard_normal(20000))
    _, gain = evwf_gains(noisy, ideal_mapping_features(clean, fb), fb)
    assert gain.max() <= 1.0


def test_config_validation():
    for kw in ({"gain_floor": 1.0}, {"gain_exponent": "cube"}, {"feature_domain": "mfcc"},
               {"spectral_floor": 0.0}):
        with pytest.raises(ValueError):
            EvwfConfig(**kw)


def test_enhance_does_not_depend_on_baselines():
    tree = ast.parse(pathlib.Path(enhance_mod.__file__).read_text())
    imported = {n.module for n in ast.walk(tree) if isinstance(n, ast.ImportFrom)}
    assert not any(m and "baselines" in m for m in imported)
