import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fiberplast.analysis import random_spd_tensor, verify_eigenvalue_bounds, verify_lindqvist
from fiberplast.errors import ConfigurationError
from fiberplast.fibers import FiberParams
from fiberplast.material import (
    FrobeniusDissipation,
    MaterialTensors,
    Tensor4,
    apply_tensor,
    dissipation_density,
    from_mandel,
    plastic_basis,
    project_sym0,
    prox_dissipation,
    quadratic_form,
    to_mandel,
    validate_parameters,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
# no subnormals: squaring them underflows, which is not what definiteness is about
normal = st.one_of(st.just(0.0), finite.filter(lambda x: abs(x) > 1e-100))


def test_isotropic_action_examples():
    I2 = np.eye(2)
    np.testing.assert_allclose(apply_tensor(Tensor4.isotropic(2, 0.0, 1.0), I2), 2 * I2)
    np.testing.assert_allclose(apply_tensor(Tensor4.isotropic(2, 1.0, 0.0), I2), 2 * I2)
    assert not np.any(apply_tensor(Tensor4.isotropic(2, 1.0, 1.0), np.zeros((2, 2))))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_isotropic_matches_lame_formula(d):
    rng = np.random.default_rng(d)
    M = rng.standard_normal((d, d))
    X = M + M.T
    lam, mu = 0.7, 1.3
    expect = 2 * mu * X + lam * np.trace(X) * np.eye(d)
    np.testing.assert_allclose(apply_tensor(Tensor4.isotropic(d, lam, mu), X), expect, atol=1e-12)


def test_quadratic_form_examples():
    X = np.array([[0.6, 0.0], [0.0, 0.8]])
    assert quadratic_form(Tensor4.isotropic(2, 0.0, 1.0), X) == pytest.approx(2.0)
    assert quadratic_form(Tensor4.isotropic(2, 3.0, 1.0), np.zeros((2, 2))) == 0.0


def test_mandel_round_trip_and_norm():
    rng = np.random.default_rng(0)
    for d in (1, 2, 3):
        M = rng.standard_normal((5, d, d))
        X = M + np.swapaxes(M, 1, 2)
        v = to_mandel(X)
        np.testing.assert_allclose(from_mandel(v, d), X, atol=1e-14)
        np.testing.assert_allclose(np.sum(v * v, axis=1), np.sum(X * X, axis=(1, 2)))


def test_voigt_and_mandel_agree():
    C = Tensor4.isotropic(2, 1.0, 2.0)
    voigt = np.array([[5.0, 1.0, 0.0], [1.0, 5.0, 0.0], [0.0, 0.0, 2.0]])
    np.testing.assert_allclose(Tensor4.from_voigt(2, voigt).mandel, C.mandel)


def test_tensor_needs_major_symmetry():
    with pytest.raises(ConfigurationError):
        Tensor4(np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


def test_quadratic_form_sandwiched_by_eigenvalues():
    rng = np.random.default_rng(1)
    tensors = [random_spd_tensor(d, rng) for d in (1, 2, 3) for _ in range(4)]
    rep = verify_eigenvalue_bounds(tensors, trials=5000)
    assert rep.ok and rep.worst_ratio >= -1e-12


def test_dissipation_examples():
    law = FrobeniusDissipation(3.0)
    assert dissipation_density(np.zeros((2, 2)), law) == 0.0
    v = np.array([[1.2, 0.0], [0.0, -1.6]])
    assert dissipation_density(v, law) == pytest.approx(6.0)
    with pytest.raises(ConfigurationError):
        FrobeniusDissipation(0.0)


@settings(max_examples=100, deadline=None)
@given(
    arrays(float, (3, 3), elements=normal),
    arrays(float, (3, 3), elements=normal),
    arrays(float, (3, 3), elements=normal),
    st.floats(0.0, 10.0),
)
def test_dissipation_is_homogeneous_and_triangle(a, b, c, lam):
    law = FrobeniusDissipation(1.7)
    rho = lambda v: float(dissipation_density(v, law))  # noqa: E731
    assert rho(lam * a) == pytest.approx(lam * rho(a), rel=1e-12, abs=1e-12)
    # the distance induced by rho
    assert rho(a - c) <= rho(a - b) + rho(b - c) + 1e-9
    assert (rho(a - b) == 0) == np.array_equal(a, b)


def test_prox_examples():
    law = FrobeniusDissipation(1.0)
    v = np.array([[2.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(prox_dissipation(v, 0.5, law), 0.75 * v)
    small = np.array([[0.3, 0.1], [0.1, -0.3]])
    assert not np.any(prox_dissipation(small, 1.0, law))
    # a tie on the yield sphere resolves to zero
    tie = np.array([[0.6, 0.0], [0.0, -0.8]])
    assert not np.any(prox_dissipation(tie, 1.0, law))
    np.testing.assert_allclose(prox_dissipation(v, 1e-14, law), v, rtol=1e-13)
    with pytest.raises(ValueError):
        prox_dissipation(v, 0.0, law)


def test_prox_beats_scalings_and_perturbations():
    law = FrobeniusDissipation(1.0)
    tau = 0.5
    rng = np.random.default_rng(2)
    v = rng.standard_normal((2, 2))
    v = 2.0 * (v + v.T) / np.linalg.norm(v + v.T)

    def obj(w):
        return 0.5 * np.sum((w - v) ** 2) + tau * dissipation_density(w, law)

    best = prox_dissipation(v, tau, law)
    lo = obj(best)
    assert lo <= min(obj(a * v) for a in np.linspace(0, 1.5, 3001)) + 1e-12
    for _ in range(2000):
        assert lo <= obj(best + 1e-3 * rng.standard_normal((2, 2))) + 1e-15


@settings(max_examples=100, deadline=None)
@given(arrays(float, (2, 2), elements=finite), arrays(float, (2, 2), elements=finite), st.floats(0.01, 10.0))
def test_prox_is_firmly_nonexpansive(a, b, tau):
    law = FrobeniusDissipation(0.8)
    pa, pb = prox_dissipation(a, tau, law), prox_dissipation(b, tau, law)
    dp, dv = pa - pb, a - b
    assert np.sum(dp * dp) <= np.sum(dp * dv) + 1e-9 * (1 + np.sum(dv * dv))
    assert np.linalg.norm(dp) <= np.linalg.norm(dv) + 1e-9


def test_projection_examples():
    np.testing.assert_allclose(project_sym0(np.eye(3)), 0.0, atol=1e-15)
    np.testing.assert_allclose(project_sym0(np.array([[0.0, 1.0], [-1.0, 0.0]])), 0.0)
    M = np.array([[1.0, 2.0], [2.0, -1.0]])
    np.testing.assert_allclose(project_sym0(M), M)


@pytest.mark.parametrize("d", [2, 3])
def test_plastic_basis_is_orthonormal_and_trace_free(d):
    B = plastic_basis(d)
    assert len(B) == d * (d + 1) // 2 - 1
    np.testing.assert_allclose(np.einsum("aij,bij->ab", B, B), np.eye(len(B)), atol=1e-14)
    np.testing.assert_allclose(np.trace(B, axis1=1, axis2=2), 0.0, atol=1e-15)
    np.testing.assert_allclose(B, np.swapaxes(B, 1, 2))


def test_validate_parameters_examples():
    ok = MaterialTensors(Tensor4.isotropic(2, 1.0, 1.0), Tensor4.identity(2, 4.0), 0.1)
    assert ok.lam_A_min == pytest.approx(2.0)
    assert validate_parameters(ok, FiberParams(2, 0.25, 2.0)) == []
    equal = MaterialTensors(Tensor4.identity(2, 2.0), Tensor4.identity(2, 2.0), 0.1)
    assert any("lambda_A_min < lambda_H_min" in v for v in validate_parameters(equal))
    no_gradient = MaterialTensors(Tensor4.identity(2, 1.0), Tensor4.identity(2, 2.0), 0.0)
    assert any("kappa > 0" in v for v in validate_parameters(no_gradient))


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
@pytest.mark.parametrize("dim", [1, 2, 3])
def test_lindqvist_inequality(p, dim):
    rep = verify_lindqvist(p, 100_000, dim=dim, seed=dim, rel_tol=1e-12)
    assert rep.ok, rep.violations[:3]
    if p == 2.0:
        assert rep.constant <= 1e-12
