"""Closed-form layer: constants, covariances, kernel evaluation, theta checks."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kacstroock import (
    Fbm,
    FbmVolterra,
    InvalidArgumentError,
    LeiNualart,
    LeiNualartX,
    SingularPointError,
    SubFbm,
    Tabulated,
    UnsupportedParameterError,
    cov,
    cov_matrix,
    d_H,
    decomposition_constant,
    fbm_kernel,
    kernel_domain_end,
    kernel_value,
    lei_nualart_kernel,
    tabulated_value,
    validate_theta,
)

# Reference values below were computed with mpmath at 40 decimal digits and
# rounded to 17 significant digits, so they are exact to the last ulp of a
# float64.

GAMMA_TABLE = {
    0.05: 19.470085311255512,
    0.11: 8.6126864003572903,
    0.2: 4.5908437119988028,
    0.3: 2.9915689876875907,
    0.37: 2.4035500200786533,
    0.5: 1.772453850905516,
    0.62: 1.4450381750303941,
    0.75: 1.2254167024651776,
    0.85: 1.1124837369484653,
    0.93: 1.0455880836380285,
    1.0: 1.0,
    1.08: 0.9597253106828222,
    1.17: 0.92669961061771581,
    1.3: 0.89747069630627718,
    1.41: 0.88676465760150123,
    1.5: 0.88622692545275801,
    1.63: 0.8972442325818726,
    1.75: 0.91906252684888323,
    1.88: 0.95507085297159313,
    1.97: 0.98768498382399156,
}

D_H_TABLE = {
    0.3: 0.46094382591199421,
    0.5: 0.64599800374075197,
    0.75: 0.84565308905635422,
    1.25: 1.0864030069364858,
    1.5: 1.0696446350319903,
    1.7: 0.93970589602645036,
}

C1_TABLE = {
    0.2: 0.2930762732164901,
    0.5: 0.37556277223247124,
    0.8: 0.29517783399955168,
}

C2_TABLE = {
    1.2: 0.3210489718204375,
    1.5: 0.45996857917732664,
    1.8: 0.39602262136448772,
}

COV_X_TABLE = {
    (0.5, 1.0, 1.0): 2.0765588543600631,
    (0.5, 0.7, 0.3): 1.362600782602734,
    (0.8, 1.0, 1.0): 1.4857053312844389,
    (1.5, 1.0, 1.0): 1.9577984632679586,
    (1.5, 0.7, 0.3): 0.59086808516245028,
}

# K(t, s) evaluated by integrating the defining formula directly in mpmath
# (tanh-sinh around the endpoint singularity), independent of the dyadic
# descent used by the package.
K_FBM_TABLE = {
    (0.3, 1.0, 0.4): 0.66938408746174521,
    (0.75, 1.0, 0.4): 0.91968551455818246,
    (1.25, 1.0, 0.4): 1.0357294939403197,
    (1.7, 0.8, 0.5): 0.64705397173399483,
    (0.3, 0.5, 0.45): 1.3420197477731962,
}


def rel_err(got, want):
    return abs(got - want) / abs(want)


def test_math_gamma_matches_high_precision_table():
    """The whole closed-form layer leans on math.gamma; pin its accuracy."""
    for x, want in GAMMA_TABLE.items():
        assert rel_err(math.gamma(x), want) < 1e-12


def test_d_H_pins():
    for H, want in D_H_TABLE.items():
        assert rel_err(d_H(H), want) < 5e-14
    assert d_H(1.0) == 1.0


def test_decomposition_constant_pins():
    for H, want in C1_TABLE.items():
        assert rel_err(decomposition_constant(H, "sub_from_fbm"), want) < 5e-14
    for H, want in C2_TABLE.items():
        assert rel_err(decomposition_constant(H, "fbm_from_sub"), want) < 5e-14


def test_decomposition_constant_regime_guards():
    with pytest.raises(InvalidArgumentError):
        decomposition_constant(1.3, "sub_from_fbm")
    with pytest.raises(InvalidArgumentError):
        decomposition_constant(0.7, "fbm_from_sub")
    with pytest.raises(InvalidArgumentError):
        decomposition_constant(0.7, "no_such_regime")


def test_cov_x_pins():
    for (H, t, s), want in COV_X_TABLE.items():
        assert rel_err(cov(LeiNualartX(H), t, s), want) < 1e-13
        assert cov(LeiNualartX(H), s, t) == pytest.approx(want, rel=1e-13)


def test_lei_nualart_x_refuses_h_one():
    with pytest.raises(UnsupportedParameterError):
        cov(LeiNualartX(1.0), 1.0, 1.0)


@given(
    t=st.floats(min_value=0.0, max_value=10.0),
    s=st.floats(min_value=0.0, max_value=10.0),
)
def test_h_one_covariances_collapse_to_brownian(t, s):
    # at H = 1 both fBm and sub-fBm have covariance min(t, s)
    want = min(t, s)
    assert cov(Fbm(1.0), t, s) == pytest.approx(want, abs=1e-12)
    assert cov(SubFbm(1.0), t, s) == pytest.approx(want, abs=1e-12)


@given(
    H=st.floats(min_value=0.05, max_value=0.95),
    t=st.floats(min_value=1e-3, max_value=10.0),
    s=st.floats(min_value=1e-3, max_value=10.0),
)
def test_sub_fbm_decomposition_identity(H, t, s):
    """c1^2 cov_X + cov_fbm reproduces cov_sub identically."""
    c1 = decomposition_constant(H, "sub_from_fbm")
    lhs = c1 ** 2 * cov(LeiNualartX(H), t, s) + cov(Fbm(H), t, s)
    assert abs(lhs - cov(SubFbm(H), t, s)) < 1e-10


@given(
    H=st.floats(min_value=1.05, max_value=1.95),
    t=st.floats(min_value=1e-3, max_value=10.0),
    s=st.floats(min_value=1e-3, max_value=10.0),
)
def test_fbm_decomposition_identity(H, t, s):
    c2 = decomposition_constant(H, "fbm_from_sub")
    lhs = c2 ** 2 * cov(LeiNualartX(H), t, s) + cov(SubFbm(H), t, s)
    assert abs(lhs - cov(Fbm(H), t, s)) < 1e-10


def test_cov_input_validation():
    with pytest.raises(InvalidArgumentError):
        cov(Fbm(0.5), -1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        cov(Fbm(0.5), math.nan, 1.0)
    with pytest.raises(InvalidArgumentError):
        cov(Fbm(0.5), 1.0, math.inf)


def test_cov_is_vectorized():
    t = np.array([0.25, 0.5, 1.0])
    got = cov(Fbm(0.75), t, 0.5)
    want = np.array([cov(Fbm(0.75), float(ti), 0.5) for ti in t])
    np.testing.assert_array_equal(got, want)


def test_cov_matrix_symmetric_psd():
    rng = np.random.default_rng(7)
    models = [Fbm(0.3), Fbm(1.6), SubFbm(0.45), SubFbm(1.8), LeiNualartX(0.8), LeiNualartX(1.5)]
    for model in models:
        for _ in range(4):
            grid = np.sort(rng.uniform(0.05, 3.0, size=6))
            m = cov_matrix(model, grid)
            assert m.shape == (6, 6)
            np.testing.assert_allclose(m, m.T, rtol=0, atol=1e-14)
            lo = np.linalg.eigvalsh(m).min()
            assert lo > -1e-10 * np.abs(m).max()


def test_cov_matrix_diagonal_matches_pointwise():
    grid = np.array([0.25, 0.5, 0.75, 1.0])
    m = cov_matrix(LeiNualartX(0.8), grid)
    for i, t in enumerate(grid):
        assert m[i, i] == cov(LeiNualartX(0.8), float(t), float(t))


def test_cov_matrix_rejects_bad_grid():
    with pytest.raises(InvalidArgumentError):
        cov_matrix(Fbm(0.5), np.empty(0))
    with pytest.raises(InvalidArgumentError):
        cov_matrix(Fbm(0.5), np.ones((2, 2)))


def test_fbm_kernel_pins():
    for (H, t, s), want in K_FBM_TABLE.items():
        assert rel_err(fbm_kernel(H, t, s), want) < 1e-7


def test_fbm_kernel_support():
    assert fbm_kernel(0.75, 1.0, 1.5) == 0.0
    assert fbm_kernel(1.5, 1.0, 1.5) == 0.0
    assert fbm_kernel(0.75, 1.0, 0.0) == math.inf
    assert fbm_kernel(1.5, 1.0, 0.0) == math.inf


def test_fbm_kernel_diagonal():
    # the kernel blows up on the diagonal below H = 1 and vanishes above it
    with pytest.raises(SingularPointError):
        fbm_kernel(0.75, 1.0, 1.0)
    with pytest.raises(SingularPointError):
        fbm_kernel(0.3, 0.5, np.array([0.2, 0.5]))
    assert fbm_kernel(1.5, 1.0, 1.0) == 0.0


def test_fbm_kernel_h_one_is_indicator():
    s = np.array([0.0, 0.3, 1.0, 1.0000001, 2.0])
    np.testing.assert_array_equal(fbm_kernel(1.0, 1.0, s), [1.0, 1.0, 1.0, 0.0, 0.0])


def test_fbm_kernel_vector_matches_scalar():
    s = np.linspace(0.05, 0.95, 7)
    vec = fbm_kernel(0.3, 1.0, s)
    for i, si in enumerate(s):
        assert vec[i] == fbm_kernel(0.3, 1.0, float(si))


def test_fbm_kernel_validation():
    with pytest.raises(InvalidArgumentError):
        fbm_kernel(0.5, 0.0, 0.1)
    with pytest.raises(InvalidArgumentError):
        fbm_kernel(0.5, 1.0, -0.1)
    with pytest.raises(InvalidArgumentError):
        fbm_kernel(0.5, 1.0, math.nan)
    with pytest.raises(InvalidArgumentError):
        fbm_kernel(0.5, 1.0, 0.5, quad_tol=0.5)


def test_lei_nualart_kernel_formula():
    for H in (0.3, 1.0, 1.7):
        for t in (0.5, 2.0):
            for r in (0.1, 1.0, 17.0):
                want = (1.0 - math.exp(-r * t)) * r ** (-(1.0 + H) / 2.0)
                assert lei_nualart_kernel(H, t, r) == pytest.approx(want, rel=1e-12)


def test_lei_nualart_kernel_small_r_precision():
    # (1 - e^(-rt)) ~ rt(1 - rt/2); a naive 1 - exp() would lose ~6 digits here
    H, t, r = 0.5, 1.0, 1e-12
    want = t * r ** ((1.0 - H) / 2.0) * (1.0 - r * t / 2.0)
    assert lei_nualart_kernel(H, t, r) == pytest.approx(want, rel=1e-10)


def test_lei_nualart_kernel_origin_limits():
    assert lei_nualart_kernel(0.5, 1.0, 0.0) == 0.0
    assert lei_nualart_kernel(1.0, 0.7, 0.0) == 0.7
    assert lei_nualart_kernel(1.5, 1.0, 0.0) == math.inf
    assert lei_nualart_kernel(1.5, 0.0, 0.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        lei_nualart_kernel(0.5, -1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        lei_nualart_kernel(0.5, 1.0, -1.0)


def test_tabulated_interpolation():
    spec = Tabulated(grid=[0.0, 0.5, 1.0], values=[0.0, 1.0, 0.0])
    assert tabulated_value(spec, 0.5) == 1.0
    assert tabulated_value(spec, 0.25) == 0.5
    assert tabulated_value(spec, -0.1) == 0.0
    assert tabulated_value(spec, 1.1) == 0.0
    grid_in = np.array([0.0, 0.25, 0.75, 1.0])
    np.testing.assert_allclose(tabulated_value(spec, grid_in), [0.0, 0.5, 0.5, 0.0])


def test_tabulated_validation():
    with pytest.raises(InvalidArgumentError):
        Tabulated(grid=[0.0], values=[1.0])
    with pytest.raises(InvalidArgumentError):
        Tabulated(grid=[0.0, 1.0], values=[1.0])
    with pytest.raises(InvalidArgumentError):
        Tabulated(grid=[0.5, 0.5], values=[1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        Tabulated(grid=[-0.5, 1.0], values=[1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        Tabulated(grid=[0.0, math.inf], values=[1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        Tabulated(grid=[0.0, 1.0], values=[1.0, math.nan])


def test_tabulated_arrays_are_read_only():
    spec = Tabulated(grid=[0.0, 1.0], values=[1.0, 2.0])
    with pytest.raises(ValueError):
        spec.grid[0] = 3.0
    with pytest.raises(ValueError):
        spec.values[0] = 3.0


def test_kernel_value_dispatch():
    assert kernel_value(FbmVolterra(0.75), 1.0, 0.4) == fbm_kernel(0.75, 1.0, 0.4)
    assert kernel_value(LeiNualart(0.8), 0.5, 2.0) == lei_nualart_kernel(0.8, 0.5, 2.0)
    spec = Tabulated(grid=[0.0, 1.0], values=[0.0, 2.0])
    assert kernel_value(spec, 0.25, 0.5) == 1.0


def test_kernel_domain_end():
    assert kernel_domain_end(FbmVolterra(0.5), 0.7) == 0.7
    assert kernel_domain_end(LeiNualart(0.5), 0.7) == math.inf
    spec = Tabulated(grid=[0.0, 0.3, 0.9], values=[0.0, 1.0, 0.0])
    assert kernel_domain_end(spec, 0.7) == 0.9


@pytest.mark.parametrize("bad", [0.0, 2.0, -0.3, 2.5, math.nan, math.inf, True])
def test_index_out_of_range_rejected(bad):
    with pytest.raises(InvalidArgumentError):
        FbmVolterra(bad)
    with pytest.raises(InvalidArgumentError):
        Fbm(bad)
    with pytest.raises(InvalidArgumentError):
        d_H(bad)


def test_kernel_specs_are_frozen():
    spec = FbmVolterra(0.5)
    with pytest.raises(dataclasses.FrozenInstanceError):
        spec.H = 0.6


def test_theta_boundary_rejection():
    for theta in (0.0, math.pi, 2.0 * math.pi, -1.0, 7.0):
        assert not validate_theta(theta).admissible
    assert not validate_theta(math.pi + 1e-10).admissible
    assert validate_theta(math.pi + 1e-3).admissible
    assert validate_theta(math.pi / 2).admissible


def test_theta_cosine_condition_small_h():
    """For H <= 1/2 an angle may be fine for one H and resonant for another."""
    theta = 2.0 * math.pi / 3.0
    rep = validate_theta(theta, H=0.3)
    assert not rep.admissible
    assert 1 in rep.violated_indices  # cos(3 theta) = 1
    assert "rejected" in rep.message()

    assert validate_theta(theta, H=0.75).admissible
    assert not validate_theta(theta, H=0.5).admissible
    assert validate_theta(math.pi / 2, H=0.3).admissible
    # i_max grows like 1/(2H); make sure the check stays cheap and correct
    assert validate_theta(math.pi / 2, H=0.001).admissible


def test_theta_validation_errors():
    with pytest.raises(InvalidArgumentError):
        validate_theta(math.nan)
    with pytest.raises(InvalidArgumentError):
        validate_theta(1.0, margin=0.0)
    with pytest.raises(InvalidArgumentError):
        validate_theta(1.0, margin=0.5)


@settings(max_examples=30)
@given(H=st.floats(min_value=0.05, max_value=1.95))
def test_fbm_variance_scaling(H):
    # var B(t) = t^H by construction
    assert cov(Fbm(H), 2.0, 2.0) == pytest.approx(2.0 ** H, rel=1e-12)
    assert cov(Fbm(H), 0.0, 0.0) == 0.0
