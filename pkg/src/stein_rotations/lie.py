"""Matrix primitives on the rotation group SO(n).

Rotations are plain ``numpy`` arrays of shape ``(n, n)``; collections of
rotations are stacked as ``(count, n, n)``. Validation is explicit through
:func:`check_rotation` rather than a wrapper class, so that batches stay
vectorizable.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import AntipodalError, DimensionError, NotARotationError

#: Frobenius tolerance on ``R^T R - I`` and on ``det(R) - 1``.
ORTHO_TOL = 1e-9
#: Rotations whose angle exceeds ``pi - ANTIPODAL_EPS`` have no unique log.
ANTIPODAL_EPS = 1e-6


def as_rng(rng=None) -> np.random.Generator:
    """Coerce a seed, ``None`` or an existing generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _square(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def _stack(rs) -> np.ndarray:
    rs = np.asarray(rs, dtype=float)
    if rs.ndim == 2:
        rs = rs[None]
    if rs.ndim != 3 or rs.shape[1] != rs.shape[2]:
        raise DimensionError(f"expected a stack of square matrices, got shape {rs.shape}")
    return rs


def is_rotation(r, tol: float = ORTHO_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 2:
        return False
    if not np.all(np.isfinite(r)):
        return False
    err = np.linalg.norm(r.T @ r - np.eye(r.shape[0]))
    return bool(err <= tol and abs(np.linalg.det(r) - 1.0) <= tol)


def check_rotation(r, tol: float = ORTHO_TOL) -> np.ndarray:
    """Return ``r`` as a float array, raising if it is not in SO(n)."""
    r = _square(r, "rotation")
    if r.shape[0] < 2:
        raise DimensionError("rotations need n >= 2")
    if not is_rotation(r, tol):
        err = np.linalg.norm(r.T @ r - np.eye(r.shape[0]))
        raise NotARotationError(
            f"not a rotation: |R^T R - I| = {err:.3e}, det = {np.linalg.det(r):.12f}"
        )
    return r


def check_rotations(rs, tol: float = ORTHO_TOL) -> np.ndarray:
    """Validate a stack ``(count, n, n)`` of rotations (a single matrix is promoted)."""
    rs = _stack(rs)
    n = rs.shape[1]
    if n < 2:
        raise DimensionError("rotations need n >= 2")
    gram = np.einsum("kji,kjl->kil", rs, rs) - np.eye(n)
    err = np.linalg.norm(gram, axis=(1, 2))
    det = np.linalg.det(rs) if len(rs) else np.ones(0)
    bad = np.flatnonzero((err > tol) | (np.abs(det - 1.0) > tol) | ~np.isfinite(err))
    if bad.size:
        i = bad[0]
        raise NotARotationError(
            f"{bad.size} of {len(rs)} matrices are not rotations "
            f"(first: index {i}, |R^T R - I| = {err[i]:.3e}, det = {det[i]:.12f})"
        )
    return rs


def renormalize(r) -> np.ndarray:
    """Project onto the nearest rotation (polar factor with determinant fixed to +1)."""
    r = _square(r)
    u, _, vt = np.linalg.svd(r)
    d = np.ones(r.shape[0])
    d[-1] = np.sign(np.linalg.det(u @ vt)) or 1.0
    return (u * d) @ vt


def renormalize_batch(rs) -> np.ndarray:
    rs = _stack(rs)
    u, _, vt = np.linalg.svd(rs)
    sign = np.sign(np.linalg.det(u @ vt))
    sign[sign == 0] = 1.0
    u[:, :, -1] *= sign[:, None]
    return u @ vt


def skew_part(a) -> np.ndarray:
    """Skew-symmetrization ``(A - A^T) / 2``; works on stacks along the last two axes."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"skew_part needs square matrices, got shape {a.shape}")
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def standard_basis(n: int) -> np.ndarray:
    """Orthonormal basis ``E_ij`` (i < j) of skew matrices, lexicographic order.

    ``E_ij`` is zero except ``sqrt(2)/2`` at ``(i, j)`` and ``-sqrt(2)/2`` at
    ``(j, i)``. Returned with shape ``(n(n-1)/2, n, n)``.
    """
    if int(n) != n or n < 2:
        raise DimensionError(f"standard_basis needs an integer n >= 2, got {n}")
    n = int(n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    out = np.zeros((len(pairs), n, n))
    h = np.sqrt(2.0) / 2.0
    for k, (i, j) in enumerate(pairs):
        out[k, i, j] = h
        out[k, j, i] = -h
    return out


def hat3(w) -> np.ndarray:
    """Cross-product matrix ``[w]_x`` of a 3-vector."""
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _vee3(s: np.ndarray) -> np.ndarray:
    return np.stack([s[..., 2, 1], s[..., 0, 2], s[..., 1, 0]], axis=-1)


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rotation in SO(3) by ``angle`` about ``axis`` (normalized internally)."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    return so_exp(angle * hat3(u))


def so_exp(s) -> np.ndarray:
    """Matrix exponential of a skew matrix.

    Only the skew part of ``s`` is used. n = 2 and n = 3 use closed forms
    (Rodrigues for n = 3); larger n goes through ``scipy.linalg.expm``.
    """
    s = skew_part(_square(s))
    n = s.shape[0]
    if n == 2:
        t = s[1, 0]
        c, sn = np.cos(t), np.sin(t)
        return np.array([[c, -sn], [sn, c]])
    if n == 3:
        w = _vee3(s)
        theta = np.linalg.norm(w)
        if theta < 1e-8:
            a = 1.0 - theta**2 / 6.0
            b = 0.5 - theta**2 / 24.0
        else:
            a = np.sin(theta) / theta
            b = (1.0 - np.cos(theta)) / theta**2
        return np.eye(3) + a * s + b * (s @ s)
    return scipy.linalg.expm(s)


def _log3(rs: np.ndarray, eps: float) -> np.ndarray:
    """Vectorized principal log on a stack of SO(3) matrices."""
    w = _vee3(skew_part(rs))  # sin(theta) * axis
    sin_t = np.linalg.norm(w, axis=-1)
    cos_t = 0.5 * (np.trace(rs, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(sin_t, cos_t)
    if np.any(theta > np.pi - eps):
        i = int(np.argmax(theta))
        raise AntipodalError(
            f"rotation angle {theta[i]:.9f} is within {eps:g} of pi; log is not unique"
        )
    out = np.empty_like(rs)
    small = theta < 1e-6
    mid = (~small) & (theta <= 0.75 * np.pi)
    big = theta > 0.75 * np.pi
    skew = skew_part(rs)
    if np.any(small):
        t2 = theta[small] ** 2
        out[small] = (1.0 + t2 / 6.0)[:, None, None] * skew[small]
    if np.any(mid):
        out[mid] = (theta[mid] / sin_t[mid])[:, None, None] * skew[mid]
    if np.any(big):
        # Near pi the skew part is tiny; recover the axis from the symmetric part.
        for k in np.flatnonzero(big):
            sym = 0.5 * (rs[k] + rs[k].T) - cos_t[k] * np.eye(3)  # (1-cos) u u^T
            j = int(np.argmax(np.diag(sym)))
            u = sym[:, j] / np.linalg.norm(sym[:, j])
            if np.dot(u, w[k]) < 0:
                u = -u
            out[k] = theta[k] * hat3(u)
    return out


def _log_schur(r: np.ndarray, eps: float) -> np.ndarray:
    n = r.shape[0]
    t, z = scipy.linalg.schur(r, output="real")
    log_t = np.zeros_like(t)
    i = 0
    while i < n:
        if i + 1 < n and t[i + 1, i] != 0.0:
            a, b, c, d = t[i, i], t[i, i + 1], t[i + 1, i], t[i + 1, i + 1]
            theta = np.arctan2(0.5 * (c - b), 0.5 * (a + d))
            if abs(theta) > np.pi - eps:
                raise AntipodalError(f"rotation angle {abs(theta):.9f} is too close to pi")
            log_t[i, i + 1] = -theta
            log_t[i + 1, i] = theta
            i += 2
        else:
            if t[i, i] < 0:
                raise AntipodalError("rotation has eigenvalue -1; log is not unique")
            i += 1
    return skew_part(z @ log_t @ z.T)


def so_log(r, eps: float = ANTIPODAL_EPS) -> np.ndarray:
    """Principal matrix logarithm of a rotation (a skew matrix).

    Raises :class:`AntipodalError` when the rotation angle is within ``eps``
    of pi, where the principal branch is not unique.
    """
    r = _square(r, "rotation")
    n = r.shape[0]
    if n == 2:
        theta = np.arctan2(r[1, 0] - r[0, 1], r[0, 0] + r[1, 1])
        if abs(theta) > np.pi - eps:
            raise AntipodalError(f"rotation angle {abs(theta):.9f} is too close to pi")
        return np.array([[0.0, -theta], [theta, 0.0]])
    if n == 3:
        return _log3(r[None], eps)[0]
    return _log_schur(r, eps)


def so_log_batch(rs, eps: float = ANTIPODAL_EPS) -> np.ndarray:
    """:func:`so_log` over a stack ``(count, n, n)``."""
    rs = _stack(rs)
    if rs.shape[1] == 3:
        return _log3(rs, eps)
    return np.stack([so_log(r, eps) for r in rs]) if len(rs) else np.zeros_like(rs)


def rotation_angles(r) -> np.ndarray:
    """Principal rotation angles in ``[0, pi]``, one per 2-plane, sorted descending."""
    r = _square(r)
    ang = np.sort(np.abs(np.angle(np.linalg.eigvals(r))))[::-1]
    # conjugate pairs share an angle; keep one of each
    return ang[::2][: r.shape[0] // 2]


def geodesic_distance(x, y) -> float:
    """Riemannian distance ``||Log(X^T Y)||_F`` under the trace metric."""
    return float(np.linalg.norm(so_log(np.asarray(x).T @ np.asarray(y))))


def _orthonormalize_columns(g: np.ndarray) -> np.ndarray:
    """Batched Gram-Schmidt with one re-orthogonalization pass.

    Returns the Q factor of the QR decomposition whose R has a positive
    diagonal; two passes keep orthogonality at round-off level.
    """
    q = np.empty_like(g)
    for j in range(g.shape[-1]):
        v = g[:, :, j].copy()
        if j:
            prev = q[:, :, :j]
            for _ in range(2):
                v -= np.einsum("bik,bk->bi", prev, np.einsum("bik,bi->bk", prev, v))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        q[:, :, j] = v
    return q


def haar_sample(n: int, count: int, rng=None) -> np.ndarray:
    """Draw ``count`` Haar-distributed rotations in SO(n), shape ``(count, n, n)``.

    Orthonormalizes a Gaussian matrix so that the triangular factor has a
    positive diagonal (the sign correction that makes the law Haar on O(n));
    a column flip then maps the determinant -1 coset onto SO(n).
    """
    if int(n) != n or n < 2:
        raise DimensionError(f"dimension must be an integer >= 2, got {n}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = as_rng(rng)
    g = rng.standard_normal((int(count), int(n), int(n)))
    if count == 0:
        return g
    q = _orthonormalize_columns(g)
    if n == 3:
        det = np.einsum("bi,bi->b", q[:, :, 0], np.cross(q[:, :, 1], q[:, :, 2]))
    else:
        det = np.linalg.det(q)
    neg = det < 0
    q[neg, :, 0] *= -1.0
    return q


def vec(a) -> np.ndarray:
    """Column-stacking vectorization."""
    return _square(a).reshape(-1, order="F")


def unvec(v) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=float).ravel()
    n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise DimensionError(f"length {v.size} is not a perfect square")
    return v.reshape((n, n), order="F")


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def perfect_shuffle(n: int) -> np.ndarray:
    """The n^2 x n^2 commutation matrix with ``S @ vec(F) == vec(F.T)``."""
    if int(n) != n or n < 1:
        raise DimensionError(f"perfect_shuffle needs n >= 1, got {n}")
    n = int(n)
    s = np.zeros((n * n, n * n))
    k, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    s[(n * k + l).ravel(), (n * l + k).ravel()] = 1.0
    return s
