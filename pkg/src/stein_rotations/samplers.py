"""Exact rejection samplers on SO(n) with Haar proposals.

Each family's unnormalized density (relative to Haar measure) is bounded by
a known constant, so accepting a Haar draw ``Z`` with probability
``density(Z) / bound`` yields exact i.i.d. samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EnvelopeTooLooseError
from .kernels import RnParams, VmfParams
from .lie import ANTIPODAL_EPS, as_rng, check_rotation, haar_sample

MIN_ACCEPTANCE = 1e-6
PROBE_SIZE = 10_000
MAX_BATCH = 200_000


@dataclass(frozen=True)
class CayleyParams:
    """Cayley distribution: density proportional to ``det(I + X M^T)^kappa``."""

    m: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "m", check_rotation(self.m).copy())
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")

    @property
    def n(self) -> int:
        return self.m.shape[0]


def vmf_envelope(f) -> float:
    """Sum of singular values of ``F``; bounds ``tr(F^T X)`` over SO(n)."""
    return float(np.linalg.svd(np.asarray(f, dtype=float), compute_uv=False).sum())


def _rejection(dim, count, log_accept, rng, family, hint):
    rng = as_rng(rng)
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return np.zeros((0, dim, dim))
    probe = haar_sample(dim, PROBE_SIZE, rng)
    la = np.minimum(log_accept(probe), 0.0)
    rate = float(np.mean(np.exp(la)))
    if rate < MIN_ACCEPTANCE:
        raise EnvelopeTooLooseError(
            f"{family} sampler: estimated acceptance rate {rate:.2e} is below "
            f"{MIN_ACCEPTANCE:g}; {hint}"
        )
    accepted = [probe[np.log(rng.random(PROBE_SIZE)) < la]]
    got = len(accepted[0])
    while got < count:
        need = count - got
        batch = int(min(MAX_BATCH, max(1024, 1.2 * need / rate)))
        z = haar_sample(dim, batch, rng)
        keep = z[np.log(rng.random(batch)) < np.minimum(log_accept(z), 0.0)]
        accepted.append(keep)
        got += len(keep)
    return np.concatenate(accepted)[:count]


def sample_vmf(p: VmfParams, count: int, rng=None) -> np.ndarray:
    """Exact draws from ``exp(tr(F^T X))`` by rejection from Haar."""
    f = p.f
    bound = vmf_envelope(f)
    flat = f.ravel()

    def log_accept(z):
        return z.reshape(len(z), -1) @ flat - bound

    return _rejection(p.n, count, log_accept, rng, "vMF",
                      "the concentration is too large for rejection from Haar")


def sample_cayley(p: CayleyParams, count: int, rng=None) -> np.ndarray:
    """Exact draws from ``det(I + X M^T)^kappa`` by rejection (``det(I + R) <= 2^n``)."""
    n = p.n
    eye = np.eye(n)

    def log_accept(z):
        with np.errstate(divide="ignore"):
            return p.kappa * (np.log(np.clip(np.linalg.det(eye + z @ p.m.T), 0.0, None)) - n * np.log(2.0))

    if p.kappa == 0:
        return haar_sample(n, count, rng)
    return _rejection(n, count, log_accept, rng, "Cayley", "reduce kappa")


def _sq_log_norm(rel: np.ndarray) -> np.ndarray:
    """``||Log R||_F^2 = 2 sum_k theta_k^2`` for a stack, ``inf`` near the antipodal set."""
    if rel.shape[1] == 3:
        sin_t = np.linalg.norm(np.stack([rel[:, 2, 1] - rel[:, 1, 2],
                                         rel[:, 0, 2] - rel[:, 2, 0],
                                         rel[:, 1, 0] - rel[:, 0, 1]], axis=1), axis=1) / 2
        theta = np.arctan2(sin_t, 0.5 * (np.trace(rel, axis1=1, axis2=2) - 1.0))
        out = 2.0 * theta**2
    else:
        # eigenvalue angles list each rotation plane twice
        ang = np.abs(np.angle(np.linalg.eigvals(rel)))
        theta = ang.max(axis=1)
        out = np.sum(ang**2, axis=1)
    out[theta > np.pi - ANTIPODAL_EPS] = np.inf
    return out


def sample_rn(p: RnParams, count: int, rng=None) -> np.ndarray:
    """Exact draws from the Riemannian normal by rejection (density kernel <= 1).

    Proposals within ``ANTIPODAL_EPS`` of angle pi from ``mu`` (a null set,
    where the log is not unique) are rejected.
    """
    n, mu, vs = p.n, p.mu, p.varsigma

    def log_accept(z):
        return -0.5 * vs * _sq_log_norm(np.swapaxes(z, -1, -2) @ mu)

    return _rejection(n, count, log_accept, rng, "Riemannian normal",
                      "use a smaller varsigma (larger sigma) at this scale")
