import numpy as np
import pytest
from hypothesis import given, strategies as st

from stein_rotations.errors import DimensionError, EmptyInputError, TangencyError
from stein_rotations.kernels import (
    KernelConfig,
    RnParams,
    ScoreSteinKernel,
    VmfParams,
    base_kernel,
    c_term,
    gram_eigenvalues,
    gram_matrix,
    kp_generic,
    kp_rn,
    kp_vmf,
    rn_kernel,
    rn_score,
    stein_oracle,
    vmf_kernel,
    vmf_score,
)
from stein_rotations.lie import axis_angle, haar_sample, skew_part, so_exp, so_log

from conftest import random_skew

CFG = KernelConfig(1.0)


def near(rng, x, scale=0.8):
    return x @ so_exp(random_skew(rng, x.shape[0], scale))


def test_config_validation():
    with pytest.raises(ValueError):
        KernelConfig(0.0)
    with pytest.raises(ValueError):
        RnParams(np.eye(3), -1.0)
    with pytest.raises(DimensionError):
        VmfParams(np.ones((2, 3)))


def test_base_kernel_examples():
    x = haar_sample(3, 1, 0)[0]
    assert np.isclose(base_kernel(x, x), np.e**3)
    y = axis_angle([0, 0, 1], np.pi / 2)
    assert np.isclose(base_kernel(np.eye(3), y), np.e)
    z = haar_sample(3, 1, 1)[0]
    assert base_kernel(x, z) == base_kernel(z, x)
    with pytest.raises(DimensionError):
        base_kernel(np.eye(2), np.eye(3))


def test_c_term_examples():
    assert np.isclose(c_term(np.eye(3), np.eye(3)), 3 * np.e**3)
    r = so_exp(np.array([[0, -np.pi / 2], [np.pi / 2, 0]]))
    assert abs(c_term(np.eye(2), r, KernelConfig(2.5))) < 1e-15
    x, y = haar_sample(4, 2, 3)
    assert c_term(x, y) == c_term(y, x)


def test_kp_vmf_diagonal():
    rng = np.random.default_rng(0)
    x = haar_sample(3, 1, rng)[0]
    f = rng.standard_normal((3, 3))
    want = 3 * np.e**3 + np.sum(skew_part(x.T @ f) ** 2) * np.e**3
    assert np.isclose(kp_vmf(x, x, VmfParams(f)), want, rtol=1e-12)


def test_kp_vmf_zero_f():
    x, y = haar_sample(3, 2, 4)
    tau = 0.7
    cfg = KernelConfig(tau)
    a = skew_part(x.T @ y)
    want = c_term(x, y, cfg) + tau**2 * np.sum(a * skew_part(y.T @ x)) * np.exp(tau * np.sum(x * y))
    assert np.isclose(kp_vmf(x, y, VmfParams(np.zeros((3, 3))), cfg), want, rtol=1e-12)


def test_kp_rn_at_mean():
    for n in (2, 3, 4):
        mu = haar_sample(n, 1, n)[0]
        tau = 0.5
        want = tau / 2 * (n - 1) * n * np.exp(tau * n)
        assert np.isclose(kp_rn(mu, mu, RnParams(mu, 3.0), KernelConfig(tau)), want, rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_kp_vmf_matches_oracle(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(20):
        x, y = haar_sample(n, 2, rng)
        p = VmfParams(rng.standard_normal((n, n)))
        kp = kp_vmf(x, y, p, CFG)
        orc = stein_oracle(x, y, p.log_density, CFG, h=1e-4)
        assert abs(orc - kp) / abs(kp) < 1e-6


@pytest.mark.parametrize("n", [2, 3, 4])
def test_kp_rn_matches_oracle(n):
    rng = np.random.default_rng(200 + n)
    for _ in range(20):
        mu = haar_sample(n, 1, rng)[0]
        x, y = near(rng, mu), near(rng, mu)
        p = RnParams(mu, rng.uniform(0.5, 5.0))
        kp = kp_rn(x, y, p, CFG)
        orc = stein_oracle(x, y, p.log_density, CFG, h=1e-4)
        assert abs(orc - kp) / abs(kp) < 1e-6


def test_oracle_constant_log_density():
    x, y = haar_sample(3, 2, 7)
    zero = VmfParams(np.zeros((3, 3)))
    assert np.isclose(stein_oracle(x, y, lambda _: 0.0, CFG), kp_vmf(x, y, zero, CFG), rtol=1e-7)


def test_oracle_step_bounds():
    with pytest.raises(ValueError):
        stein_oracle(np.eye(3), np.eye(3), lambda _: 0.0, CFG, h=1e-2)


def test_oracle_basis_invariance():
    rng = np.random.default_rng(11)
    from stein_rotations.lie import standard_basis

    b = standard_basis(3)
    x, y = haar_sample(3, 2, rng)
    p = VmfParams(rng.standard_normal((3, 3)))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rotated = np.einsum("kl,lab->kab", q, b)
    v0 = stein_oracle(x, y, p.log_density, CFG, h=1e-4, basis=b)
    v1 = stein_oracle(x, y, p.log_density, CFG, h=1e-4, basis=rotated)
    assert abs(v0 - v1) < 1e-8 * max(1.0, abs(v0))


def test_generic_score_reproduces_closed_forms():
    rng = np.random.default_rng(12)
    for _ in range(20):
        x, y = haar_sample(3, 2, rng)
        pv = VmfParams(rng.standard_normal((3, 3)))
        kv = kp_vmf(x, y, pv, CFG)
        assert abs(kp_generic(x, y, vmf_score(pv), CFG) - kv) <= 1e-12 * max(1, abs(kv))
        mu = near(rng, x)
        pr = RnParams(mu, 2.0)
        x2, y2 = near(rng, mu), near(rng, mu)
        kr = kp_rn(x2, y2, pr, CFG)
        assert abs(kp_generic(x2, y2, rn_score(pr), CFG) - kr) <= 1e-12 * max(1, abs(kr))
    zero = VmfParams(np.zeros((3, 3)))
    assert np.isclose(kp_generic(x, y, lambda z: np.zeros((3, 3))), kp_vmf(x, y, zero))


def test_generic_rejects_non_tangent_score():
    with pytest.raises(TangencyError):
        kp_generic(np.eye(3), np.eye(3), lambda z: np.eye(3))


def test_kernel_objects_match_scalar_forms():
    rng = np.random.default_rng(13)
    xs = haar_sample(4, 6, rng)
    f = rng.standard_normal((4, 4))
    k = vmf_kernel(f)
    mat = k.matrix(xs)
    for i in range(6):
        for j in range(6):
            assert np.isclose(mat[i, j], kp_vmf(xs[i], xs[j], VmfParams(f)), rtol=1e-11)
    mu = xs[0]
    ys = np.stack([near(rng, mu, 0.5) for _ in range(5)])
    p = RnParams(mu, 4.0)
    kr = rn_kernel(p).matrix(ys)
    ks = ScoreSteinKernel(CFG, rn_score(p)).matrix(ys)
    for i in range(5):
        for j in range(5):
            assert np.isclose(kr[i, j], kp_rn(ys[i], ys[j], p), rtol=1e-11)
    assert np.allclose(kr, ks, rtol=1e-12)


@given(seed=st.integers(0, 2**31), n=st.integers(2, 4), tau=st.floats(0.1, 3.0))
def test_symmetry_and_equivariance(seed, n, tau):
    rng = np.random.default_rng(seed)
    x, y, r = haar_sample(n, 3, rng)
    f = rng.standard_normal((n, n))
    cfg = KernelConfig(tau)
    k = kp_vmf(x, y, VmfParams(f), cfg)
    assert k == kp_vmf(y, x, VmfParams(f), cfg) or np.isclose(k, kp_vmf(y, x, VmfParams(f), cfg), rtol=1e-14)
    kr = kp_vmf(r @ x, r @ y, VmfParams(r @ f), cfg)
    assert abs(kr - k) <= 1e-12 * max(1.0, abs(k))
    assert kp_vmf(x, x, VmfParams(f), cfg) >= 0


def test_rn_symmetry():
    rng = np.random.default_rng(14)
    mu = haar_sample(3, 1, rng)[0]
    p = RnParams(mu, 2.0)
    for _ in range(20):
        x, y = near(rng, mu), near(rng, mu)
        assert np.isclose(kp_rn(x, y, p), kp_rn(y, x, p), rtol=1e-14)


def test_gram_matrix():
    xs = haar_sample(3, 50, 15)
    k = vmf_kernel(np.diag([1.0, 2.0, 0.5]))
    g = gram_matrix(xs, k)
    assert np.abs(g - g.T).max() <= 1e-12
    ev = np.linalg.eigvalsh(g)
    assert ev.min() >= -1e-8 * ev.max()
    clipped = gram_eigenvalues(xs, k)
    assert np.all(clipped >= 0) and np.all(np.diff(clipped) <= 0)
    one = gram_matrix(xs[:1], k)
    assert one.shape == (1, 1) and np.isclose(one[0, 0], k(xs[0], xs[0]))
    with pytest.raises(EmptyInputError):
        gram_matrix(np.zeros((0, 3, 3)), k)


def test_rn_score_is_tangent():
    mu = haar_sample(3, 1, 16)[0]
    x = near(np.random.default_rng(0), mu)
    g = rn_score(RnParams(mu, 2.0))(x)
    m = x.T @ g
    assert np.linalg.norm(m + m.T) < 1e-9
    assert np.allclose(g, 2.0 * x @ so_log(x.T @ mu))
