"""Goodness-of-fit test of a rotation sample against a whole parametric family.

The family is fitted by minimum KSD, ``n`` times the minimized V-statistic
is the test statistic, and its null law is approximated by a weighted sum
of chi-square(1) variables whose weights are the eigenvalues of the
normalized Gram matrix at the fitted parameters.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EmptyInputError, InsufficientDrawsError
from .estimators import EstimateReport, as_samples, ksd_v, mksde_rn, mksde_vmf
from .kernels import KernelConfig, RnParams, RnSteinKernel, VmfParams, VmfSteinKernel, gram_eigenvalues
from .lie import as_rng

MIN_DRAWS = 100
DRAW_CHUNK = 1000
FAMILIES = ("vmf", "rn")


@dataclass
class GofResult:
    m_star: float
    theta_hat: Union[VmfParams, RnParams]
    statistic: float
    eigenvalues: np.ndarray
    quantile: float
    beta: float
    reject: bool
    m: int
    family: str = "vmf"
    converged: bool = True
    flags: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("theta_hat")
        d["eigenvalues"] = self.eigenvalues.tolist()
        if isinstance(self.theta_hat, VmfParams):
            d["theta_hat"] = {"F": self.theta_hat.f.tolist()}
        else:
            d["theta_hat"] = {"mu": self.theta_hat.mu.tolist(), "varsigma": self.theta_hat.varsigma}
        d["flags"] = list(self.flags)
        return d


def weighted_chisq_draws(lambdas, m: int, rng=None, workers: int = 1) -> np.ndarray:
    """``m`` draws of ``sum_j lambda_j Z_j^2``.

    Draws are generated in chunks of ``DRAW_CHUNK``, chunk ``c`` from its own
    stream seeded by ``(base, c)``, so the result does not depend on
    ``workers``.
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    if m < MIN_DRAWS:
        raise InsufficientDrawsError(f"need at least {MIN_DRAWS} draws, got {m}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("weights must be nonnegative and finite")
    base = int(as_rng(rng).integers(0, 2**63 - 1))
    starts = range(0, m, DRAW_CHUNK)

    def chunk(c_start):
        size = min(DRAW_CHUNK, m - c_start)
        z = np.random.default_rng([base, c_start // DRAW_CHUNK]).standard_normal((size, lam.size))
        return (z * z) @ lam

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    return np.concatenate(parts)


def upper_quantile(draws, beta: float) -> float:
    """Order statistic ``ceil((1 - beta) m)`` (1-based) of the draws."""
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    w = np.sort(np.asarray(draws, dtype=float))
    k = max(1, math.ceil((1.0 - beta) * len(w) - 1e-9))
    return float(w[k - 1])


def weighted_chisq_quantile(lambdas, m: int, beta: float, rng=None, workers: int = 1) -> float:
    """Monte Carlo ``(1 - beta)``-quantile of ``sum_j lambda_j Z_j^2``."""
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    return upper_quantile(weighted_chisq_draws(lambdas, m, rng, workers), beta)


def fit_family(samples, family: str, cfg: KernelConfig, rn_init: Optional[RnParams] = None):
    """Minimum-KSD fit; returns the report and the Stein kernel at the estimate."""
    if family == "vmf":
        rep = mksde_vmf(samples, cfg)
        return rep, VmfSteinKernel(cfg, rep.params)
    if family == "rn":
        rep = mksde_rn(samples, cfg, init=rn_init)
        return rep, RnSteinKernel(cfg, rep.params)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


@dataclass
class FittedNull:
    """Everything the test needs before choosing a level: fit, statistic and spectrum."""

    report: EstimateReport
    m_star: float
    statistic: float
    eigenvalues: np.ndarray


def fit_null(samples, family: str = "vmf", cfg: KernelConfig = KernelConfig(),
             rn_init: Optional[RnParams] = None) -> FittedNull:
    s = as_samples(samples)
    if len(s) < 2:
        raise EmptyInputError("the goodness-of-fit test needs at least two samples")
    rep, k = fit_family(s, family, cfg, rn_init)
    m_star = ksd_v(s, k)
    eig = gram_eigenvalues(s.rotations, k)
    return FittedNull(rep, m_star, len(s) * m_star, eig)


def gof_test(
    samples,
    family: str = "vmf",
    cfg: KernelConfig = KernelConfig(),
    beta: float = 0.05,
    m: int = 10_000,
    rng=None,
    rn_init: Optional[RnParams] = None,
    workers: int = 1,
) -> GofResult:
    """Test whether the sample is fitted by some member of ``family``.

    Rejects when ``n * m_star`` exceeds the estimated ``(1 - beta)``-quantile.
    A non-converged RN fit is carried through (any feasible parameter bounds
    the minimum from above) and flagged on the result.
    """
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    fitted = fit_null(samples, family, cfg, rn_init)
    q = weighted_chisq_quantile(fitted.eigenvalues, m, beta, rng, workers)
    return GofResult(
        m_star=fitted.m_star,
        theta_hat=fitted.report.params,
        statistic=fitted.statistic,
        eigenvalues=fitted.eigenvalues,
        quantile=q,
        beta=beta,
        reject=bool(fitted.statistic > q),
        m=m,
        family=family,
        converged=fitted.report.converged,
        flags=fitted.report.flags,
    )


def quantiles_at(eigenvalues, betas: Sequence[float], m: int, rng=None) -> dict:
    """Quantiles for several levels from one shared set of null draws."""
    draws = weighted_chisq_draws(eigenvalues, m, rng)
    return {b: upper_quantile(draws, b) for b in betas}
