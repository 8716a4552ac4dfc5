import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nera import _kernels
from nera.model import (PRESETS, ModelVariant, ParameterSet, as_state, holling2,
                        holling2_prime, jacobian, preset, reduced_jac, reduced_rhs,
                        vector_field)

from conftest import fd_jacobian, oracle_field, parameter_sets, states


def test_presets_hold_published_rates():
    c, w = preset("Colorado"), preset("washington")
    assert (c.r1, c.r2, c.r3, c.alpha1, c.alpha2, c.gamma1) == (0.44, 0.193, 0.029, 0.103,
                                                                  0.043, 0.031)
    assert (c.beta1, c.beta2, c.beta3, c.beta4, c.h) == (0.042, 0.016, 0.052, 0.047, 0.5)
    assert (w.r1, w.r2, w.r3, w.alpha1, w.alpha2, w.gamma1) == (0.38, 0.142, 0.034, 0.099,
                                                                  0.112, 0.032)
    assert (w.beta1, w.beta2, w.beta3, w.beta4, w.h) == (0.015, 0.03, 0.066, 0.039, 0.5)


def test_unknown_preset():
    with pytest.raises(KeyError, match="colorado"):
        preset("oregon")


@pytest.mark.parametrize("bad", [0.0, -0.1, float("nan"), float("inf"), "x"])
def test_parameters_must_be_positive_numbers(bad):
    kw = PRESETS["colorado"].as_dict()
    kw["r2"] = bad
    with pytest.raises(ValueError, match="r2"):
        ParameterSet(**kw)


def test_parameter_array_round_trip():
    p = PRESETS["washington"]
    assert ParameterSet.from_array(p.as_array()) == p
    assert p.with_(beta1=0.3).beta1 == 0.3 and p.beta1 == 0.015


def test_parameter_file_round_trip(tmp_path):
    p = PRESETS["colorado"].with_(beta1=0.123456789012345)
    p.save(tmp_path / "p.cfg", header="test")
    assert ParameterSet.load(tmp_path / "p.cfg") == p


@pytest.mark.parametrize("bad", [(0.1, 0.2, 0.3), (0.1, -0.2, 0.3, 0.1), (0.1, np.nan, 0, 0)])
def test_state_validation(bad):
    with pytest.raises(ValueError):
        as_state(bad)


def test_holling_response():
    assert holling2(0.5, 0.5) == 0.5
    assert holling2(0.0, 0.5) == 0.0
    assert holling2_prime(0.0, 0.5) == pytest.approx(2.0)
    x = np.linspace(0, 3, 31)
    assert np.all(np.diff([holling2(v, 0.5) for v in x]) > 0)


@settings(max_examples=200, deadline=None)
@given(parameter_sets(), states)
def test_vector_field_matches_independent_transcription(p, s):
    np.testing.assert_allclose(vector_field(p, s), oracle_field(p, s), rtol=1e-12, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(parameter_sets(), states)
def test_jacobian_matches_finite_differences(p, s):
    J = jacobian(p, s)
    Jfd = fd_jacobian(lambda x: oracle_field(p, x), s)
    np.testing.assert_allclose(J, Jfd, rtol=1e-6, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(parameter_sets(), states)
def test_reduced_variant_equals_full_with_cross_terms_off(p, s):
    P = p.as_array()
    P[[7, 8, 9]] = 0.0  # alpha1, alpha2, gamma1
    full, red = np.empty(4), np.empty(4)
    _kernels.nera_rhs(P, s, full)
    reduced_rhs(p.as_array(), s, red)
    np.testing.assert_allclose(red, full, rtol=1e-14, atol=1e-15)
    Jf, Jr = np.empty((4, 4)), np.empty((4, 4))
    _kernels.nera_jac(P, s, Jf)
    reduced_jac(p.as_array(), s, Jr)
    np.testing.assert_allclose(Jr, Jf, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(vector_field(p, s, ModelVariant.REDUCED), red)


@settings(max_examples=100, deadline=None)
@given(parameter_sets(), states, st.integers(0, 3))
def test_cone_faces_are_invariant(p, s, k):
    # a compartment at zero has zero rate of change
    s = s.copy()
    s[k] = 0.0
    assert vector_field(p, s)[k] == 0.0
    assert vector_field(p, s, "reduced")[k] == 0.0


def test_variant_parse():
    assert ModelVariant.parse("Reduced") is ModelVariant.REDUCED
    with pytest.raises(ValueError):
        ModelVariant.parse("partial")
