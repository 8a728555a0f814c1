"""Closed-form Stein kernels on SO(n) for the base kernel ``exp(tau tr(X^T Y))``.

Every kernel here has the form::

    k_p(X, Y) = <A(X^T (g(X) + tau Y)), A(Y^T (g(Y) + tau X))> e^{tau tr(X^T Y)} + c(X, Y)

where ``g`` is the Riemannian gradient of ``log p`` and ``A`` the skew part.
The family only enters through the skew matrices ``P = A(X^T g(X))``, so all
families share one vectorized pairwise evaluator (:func:`stein_block`).

Pairwise terms are written as products of flattened per-sample features, so
an ``n x n`` block costs a handful of matrix multiplications and never
materializes ``n^2`` intermediate matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, EmptyInputError, TangencyError
from .lie import check_rotation, skew_part, so_log, so_log_batch, standard_basis

ScoreFn = Callable[[np.ndarray], np.ndarray]
LogDensityFn = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class KernelConfig:
    tau: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")


@dataclass(frozen=True)
class VmfParams:
    """von Mises-Fisher parameter: density proportional to ``exp(tr(F^T X))``."""

    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise DimensionError(f"F must be square, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("F has non-finite entries")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def n(self) -> int:
        return self.f.shape[0]

    def log_density(self, x) -> float:
        """Unnormalized log-density."""
        return float(np.sum(self.f * x))


@dataclass(frozen=True)
class RnParams:
    """Riemannian normal parameters ``(mu, varsigma)`` with ``varsigma = sigma^-2``."""

    mu: np.ndarray
    varsigma: float

    def __post_init__(self):
        mu = np.array(check_rotation(self.mu), dtype=float)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if not (np.isfinite(self.varsigma) and self.varsigma > 0):
            raise ValueError(f"varsigma must be positive, got {self.varsigma}")
        object.__setattr__(self, "varsigma", float(self.varsigma))

    @classmethod
    def from_sigma(cls, mu, sigma: float) -> "RnParams":
        return cls(mu, 1.0 / sigma**2)

    @property
    def sigma(self) -> float:
        return 1.0 / np.sqrt(self.varsigma)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    def log_density(self, x) -> float:
        lg = so_log(self.mu.T @ np.asarray(x))
        return -0.5 * self.varsigma * float(np.sum(lg * lg))


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def base_kernel(x, y, cfg: KernelConfig = KernelConfig()) -> float:
    x, y = _pair(x, y)
    return float(np.exp(cfg.tau * np.sum(x * y)))


def c_term(x, y, cfg: KernelConfig = KernelConfig()) -> float:
    """Family-independent part ``(tau/2)(n-1) tr(X^T Y) e^{tau tr(X^T Y)}``."""
    x, y = _pair(x, y)
    t = float(np.sum(x * y))
    return 0.5 * cfg.tau * (x.shape[0] - 1) * t * np.exp(cfg.tau * t)


def _kp_from_skew(x, y, px, py, cfg: KernelConfig) -> float:
    # px = A(X^T grad_X log p), py likewise
    tau = cfg.tau
    a = px + tau * skew_part(x.T @ y)
    b = py + tau * skew_part(y.T @ x)
    return float(np.sum(a * b)) * np.exp(tau * np.sum(x * y)) + c_term(x, y, cfg)


def kp_vmf(x, y, p: VmfParams, cfg: KernelConfig = KernelConfig()) -> float:
    x, y = _pair(x, y)
    f = p.f
    tau = cfg.tau
    a = skew_part(x.T @ (f + tau * y))
    b = skew_part(y.T @ (f + tau * x))
    return float(np.sum(a * b)) * np.exp(tau * np.sum(x * y)) + c_term(x, y, cfg)


def kp_rn(x, y, p: RnParams, cfg: KernelConfig = KernelConfig()) -> float:
    """Riemannian-normal Stein kernel; uses the score ``varsigma X Log(X^T mu)``."""
    x, y = _pair(x, y)
    s = p.varsigma
    return _kp_from_skew(x, y, s * so_log(x.T @ p.mu), s * so_log(y.T @ p.mu), cfg)


def _check_tangent(x, g, tol=1e-9):
    m = x.T @ g
    if np.linalg.norm(m + m.T) > tol * max(1.0, np.linalg.norm(g)):
        raise TangencyError(
            f"score is not tangent at X: |X^T g + g^T X| = {np.linalg.norm(m + m.T):.3e}"
        )
    return m


def kp_generic(x, y, score: ScoreFn, cfg: KernelConfig = KernelConfig()) -> float:
    """Stein kernel for an arbitrary score function (ambient Riemannian gradient)."""
    x, y = _pair(x, y)
    gx = np.asarray(score(x), dtype=float)
    gy = np.asarray(score(y), dtype=float)
    px = skew_part(_check_tangent(x, gx))
    py = skew_part(_check_tangent(y, gy))
    return _kp_from_skew(x, y, px, py, cfg)


def vmf_score(p: VmfParams) -> ScoreFn:
    """Riemannian gradient ``X A(X^T F)`` of ``tr(F^T X)``."""
    return lambda x: x @ skew_part(x.T @ p.f)


def rn_score(p: RnParams) -> ScoreFn:
    return lambda x: p.varsigma * (x @ so_log(x.T @ p.mu))


_STENCILS = {
    2: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    4: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
}


def _exp_minus_eye(s: np.ndarray) -> np.ndarray:
    """``exp(S) - I`` by its power series, accurate for small ``S``."""
    out = np.zeros_like(s)
    term = np.eye(s.shape[0])
    for k in range(1, 30):
        term = term @ s / k
        out += term
        if np.abs(term).max() < 1e-22:
            break
    return out


def stein_oracle(
    x,
    y,
    log_p: LogDensityFn,
    cfg: KernelConfig = KernelConfig(),
    h: float = 1e-4,
    basis=None,
    order: int = 4,
) -> float:
    """Stein kernel by finite differences of the Stein operator, basis by basis.

    For each basis element ``E`` the left-invariant derivative ``D_E f(X)`` is
    the derivative of ``t -> f(X exp(t E))`` at 0, taken by a central stencil
    of the given ``order`` (2 or 4). Returns
    ``sum_E (D_E^X + D_E^X log p)(D_E^Y + D_E^Y log p) k(X, Y)``.

    Stencil weights sum to zero, so the base kernel enters only through its
    increments ``k(X', Y') - k(X, Y)``; these are formed from trace
    increments with ``expm1`` to keep round-off at ``O(eps / h)`` rather than
    ``O(eps / h^2)``. Independent of the closed forms; used to check them.
    """
    x, y = _pair(x, y)
    if not 1e-6 <= h <= 1e-3:
        raise ValueError("step size h must lie in [1e-6, 1e-3]")
    if order not in _STENCILS:
        raise ValueError("order must be 2 or 4")
    steps, weights = _STENCILS[order]
    weights = weights / h
    basis = standard_basis(x.shape[0]) if basis is None else np.asarray(basis, dtype=float)
    tau = cfg.tau

    k0 = np.exp(tau * np.sum(x * y))
    lx, ly = log_p(x), log_p(y)
    total = 0.0
    for e in basis:
        dx = [x @ _exp_minus_eye(s * h * e) for s in steps]  # X' - X
        dy = [y @ _exp_minus_eye(s * h * e) for s in steps]
        ta = np.array([np.sum(d * y) for d in dx])  # tr(X'^T Y) - tr(X^T Y)
        tb = np.array([np.sum(x * d) for d in dy])
        dlx = sum(w * (log_p(x + d) - lx) for w, d in zip(weights, dx))
        dly = sum(w * (log_p(y + d) - ly) for w, d in zip(weights, dy))
        dkx = k0 * (weights @ np.expm1(tau * ta))
        dky = k0 * (weights @ np.expm1(tau * tb))
        # k(X',Y') - k(X',Y) - k(X,Y') + k(X,Y), the only part surviving the double stencil
        cross = np.array([[np.sum(da * db) for db in dy] for da in dx])
        tab = ta[:, None] + tb[None, :] + cross
        mixed = np.expm1(tau * tab) - np.expm1(tau * ta)[:, None] - np.expm1(tau * tb)[None, :]
        dkxy = k0 * (weights @ mixed @ weights)
        total += dkxy + dlx * dky + dly * dkx + dlx * dly * k0
    return float(total)


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(len(a), -1)


def stein_block(xa, pa, xb, pb, tau: float) -> np.ndarray:
    """Pairwise Stein kernel values between two stacks.

    ``xa`` ``(m, n, n)`` rotations with skew scores ``pa``; ``xb``/``pb``
    likewise. Returns the ``(m, k)`` matrix ``k_p(xa[i], xb[j])``.
    """
    n = xa.shape[-1]
    fa, fb = _flat(xa), _flat(xb)
    tr = fa @ fb.T
    pp = _flat(pa) @ _flat(pb).T
    # <P_i, A(X_i^T Y_j)> = <X_i P_i, Y_j>
    m1 = _flat(xa @ pa) @ fb.T
    # <A(X_i^T Y_j), Q_j> = -<Y_j Q_j, X_i>
    m2 = -(fa @ _flat(xb @ pb).T)
    # |A(X^T Y)|^2 = (n - tr(X^T Y X^T Y)) / 2, with the quartic trace as a feature product
    phi = np.einsum("iba,idc->ibadc", xa, xa).reshape(len(xa), -1)
    psi = np.einsum("jbc,jda->jbadc", xb, xb).reshape(len(xb), -1)
    sq = 0.5 * (n - phi @ psi.T)
    inner = pp - tau * m1 + tau * m2 - tau**2 * sq
    return (inner + 0.5 * tau * (n - 1) * tr) * np.exp(tau * tr)


@dataclass(frozen=True)
class SteinKernel:
    """A Stein kernel bound to a family's parameters and a :class:`KernelConfig`.

    Subclasses supply :meth:`skew_scores`; the pairwise algebra is shared.
    """

    cfg: KernelConfig = field(default_factory=KernelConfig)

    def skew_scores(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        x, y = _pair(x, y)
        p = self.skew_scores(np.stack([x, y]))
        return float(stein_block(x[None], p[:1], y[None], p[1:], self.cfg.tau)[0, 0])

    def block(self, xa, xb, pa=None, pb=None) -> np.ndarray:
        xa = np.asarray(xa, dtype=float)
        xb = np.asarray(xb, dtype=float)
        pa = self.skew_scores(xa) if pa is None else pa
        pb = self.skew_scores(xb) if pb is None else pb
        return stein_block(xa, pa, xb, pb, self.cfg.tau)

    def matrix(self, xs) -> np.ndarray:
        """Full ``(n, n)`` matrix of kernel values, exactly symmetrized."""
        xs = np.asarray(xs, dtype=float)
        p = self.skew_scores(xs)
        k = stein_block(xs, p, xs, p, self.cfg.tau)
        return 0.5 * (k + k.T)


@dataclass(frozen=True)
class VmfSteinKernel(SteinKernel):
    params: VmfParams = None

    def skew_scores(self, xs):
        return skew_part(np.swapaxes(xs, -1, -2) @ self.params.f)


@dataclass(frozen=True)
class RnSteinKernel(SteinKernel):
    params: RnParams = None

    def skew_scores(self, xs):
        return self.params.varsigma * so_log_batch(np.swapaxes(xs, -1, -2) @ self.params.mu)


@dataclass(frozen=True)
class ScoreSteinKernel(SteinKernel):
    score: ScoreFn = None

    def skew_scores(self, xs):
        out = np.empty_like(xs)
        for i, x in enumerate(xs):
            out[i] = skew_part(_check_tangent(x, np.asarray(self.score(x), dtype=float)))
        return out


def vmf_kernel(f, tau: float = 1.0) -> VmfSteinKernel:
    params = f if isinstance(f, VmfParams) else VmfParams(f)
    return VmfSteinKernel(KernelConfig(tau), params)


def rn_kernel(params: RnParams, tau: float = 1.0) -> RnSteinKernel:
    return RnSteinKernel(KernelConfig(tau), params)


def gram_matrix(samples, k: SteinKernel) -> np.ndarray:
    """Normalized Gram matrix ``(k(x_i, x_j) / n)_{ij}``."""
    xs = np.asarray(samples, dtype=float)
    if xs.ndim != 3 or len(xs) == 0:
        raise EmptyInputError("gram_matrix needs at least one sample")
    return k.matrix(xs) / len(xs)


def gram_eigenvalues(samples, k: SteinKernel) -> np.ndarray:
    """Eigenvalues of :func:`gram_matrix`, descending, round-off negatives clipped to 0."""
    ev = np.linalg.eigvalsh(gram_matrix(samples, k))[::-1]
    return np.clip(ev, 0.0, None)
