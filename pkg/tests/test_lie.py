import numpy as np
import pytest
from hypothesis import given, strategies as st

from stein_rotations.errors import AntipodalError, DimensionError, NotARotationError
from stein_rotations.lie import (
    axis_angle,
    check_rotation,
    geodesic_distance,
    haar_sample,
    hat3,
    is_rotation,
    kron,
    perfect_shuffle,
    renormalize,
    rotation_angles,
    skew_part,
    so_exp,
    so_log,
    so_log_batch,
    standard_basis,
    unvec,
    vec,
)

from conftest import random_skew


def test_skew_part_examples():
    assert np.allclose(skew_part(np.eye(3)), 0)
    assert np.allclose(skew_part([[0, 1], [0, 0]]), [[0, 0.5], [-0.5, 0]])
    s = random_skew(np.random.default_rng(0), 4)
    assert np.array_equal(skew_part(s), s)


def test_skew_part_rejects_nonsquare():
    with pytest.raises(DimensionError):
        skew_part(np.ones((2, 3)))


def test_standard_basis_so2():
    (e,) = standard_basis(2)
    h = np.sqrt(2) / 2
    assert np.allclose(e, [[0, h], [-h, 0]])


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_standard_basis_orthonormal(n):
    b = standard_basis(n)
    assert len(b) == n * (n - 1) // 2
    gram = np.einsum("iab,jab->ij", b, b)
    assert np.abs(gram - np.eye(len(b))).max() < 1e-12
    assert np.abs(np.einsum("iab,icb->ac", b, b) - (n - 1) / 2 * np.eye(n)).max() < 1e-12
    for e in b:
        assert np.linalg.norm(e + e.T) <= 1e-12


def test_standard_basis_small_n():
    with pytest.raises(DimensionError):
        standard_basis(1)


def test_exp_examples():
    assert np.allclose(so_exp(np.zeros((3, 3))), np.eye(3))
    r = so_exp(np.pi / 2 * hat3([0, 0, 1]))
    assert np.allclose(r, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_log_axis_angle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        th = rng.uniform(0, np.pi - 1e-3)
        assert np.abs(so_log(axis_angle(u, th)) - th * hat3(u)).max() < 1e-12
    assert np.array_equal(so_log(np.eye(3)), np.zeros((3, 3)))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_exp_log_roundtrip_haar(n):
    xs = haar_sample(n, 100, np.random.default_rng(n))
    for x in xs:
        if rotation_angles(x).max() > np.pi - 1e-6:
            continue
        assert np.linalg.norm(so_exp(so_log(x)) - x) < 1e-10


@given(n=st.integers(2, 5), seed=st.integers(0, 2**31), frac=st.floats(0.0, 0.999))
def test_log_exp_roundtrip_property(n, seed, frac):
    s = random_skew(np.random.default_rng(seed), n)
    # rescale so the largest rotation angle is frac * pi
    top = np.abs(np.linalg.eigvals(s).imag).max()
    if top < 1e-12:
        return
    s = s * (frac * np.pi / top)
    assert np.linalg.norm(so_log(so_exp(s)) - s) < 1e-10


@pytest.mark.parametrize("n", [2, 3, 4])
def test_log_antipodal(n):
    r = np.eye(n)
    r[:2, :2] = [[-1, 0], [0, -1]]
    with pytest.raises(AntipodalError):
        so_log(r)


def test_log_near_pi_so3():
    u = np.array([1.0, 2.0, -2.0]) / 3
    th = np.pi - 1e-5
    assert np.abs(so_log(axis_angle(u, th)) - th * hat3(u)).max() < 1e-8


def test_log_batch_matches_scalar():
    xs = haar_sample(3, 50, np.random.default_rng(3))
    batch = so_log_batch(xs)
    for x, lg in zip(xs, batch):
        assert np.abs(so_log(x) - lg).max() < 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_haar_outputs_are_rotations(n):
    xs = haar_sample(n, 200, np.random.default_rng(0))
    eye = np.eye(n)
    for x in xs:
        assert np.linalg.norm(x.T @ x - eye) <= 1e-9
        assert abs(np.linalg.det(x) - 1) <= 1e-9


def test_haar_moments():
    xs = haar_sample(3, 10_000, np.random.default_rng(5))
    tr = np.trace(xs, axis1=1, axis2=2)
    assert abs(tr.mean()) <= 4 * tr.std() / 100
    se = xs.std(axis=0) / 100
    assert np.all(np.abs(xs.mean(axis=0)) <= 4 * se)


def test_haar_deterministic():
    a = haar_sample(4, 10, np.random.default_rng(9))
    b = haar_sample(4, 10, np.random.default_rng(9))
    assert np.array_equal(a, b)
    assert haar_sample(3, 0, 0).shape == (0, 3, 3)


def test_vec_unvec():
    assert np.array_equal(vec([[1, 2], [3, 4]]), [1, 3, 2, 4])
    a = np.random.default_rng(0).standard_normal((4, 4))
    assert np.array_equal(unvec(vec(a)), a)
    with pytest.raises(DimensionError):
        unvec(np.ones(5))


def test_kron_identity():
    assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))
    rng = np.random.default_rng(2)
    a, b, x = (rng.standard_normal((3, 3)) for _ in range(3))
    assert np.abs(kron(a.T, b) @ vec(x) - vec(b @ x @ a)).max() < 1e-12
    assert np.abs(kron(a, b) @ vec(x) - vec(b @ x @ a.T)).max() < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_perfect_shuffle(n):
    s = perfect_shuffle(n)
    rng = np.random.default_rng(n)
    for _ in range(20):
        f = rng.standard_normal((n, n))
        assert np.array_equal(s @ vec(f), vec(f.T))
    assert np.array_equal(s @ s, np.eye(n * n))
    assert np.array_equal(s, s.T)


def test_perfect_shuffle_n2_rows():
    s = perfect_shuffle(2)
    assert [int(np.argmax(row)) + 1 for row in s] == [1, 3, 2, 4]


def test_validation_and_renormalize():
    x = haar_sample(3, 1, np.random.default_rng(0))[0]
    assert is_rotation(x)
    assert not is_rotation(-x)  # det -1
    with pytest.raises(NotARotationError):
        check_rotation(x + 1e-6)
    fixed = renormalize(x + 1e-7)
    assert is_rotation(fixed)
    assert np.linalg.norm(fixed - x) < 1e-6
    with pytest.raises(DimensionError):
        check_rotation(np.ones((2, 3)))


def test_geodesic_distance():
    u = np.array([0.0, 0.0, 1.0])
    assert abs(geodesic_distance(np.eye(3), axis_angle(u, 0.3)) - 0.3 * np.sqrt(2)) < 1e-12
    x = haar_sample(3, 1, 0)[0]
    assert geodesic_distance(x, x) < 1e-7
