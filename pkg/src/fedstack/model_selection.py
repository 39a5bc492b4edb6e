"""Cluster-count selection: BIC over Gaussian-mixture fits.

The score is -2 ln L + m_p ln n with m_p = k * 2d + (k - 1) for a
diagonal-covariance mixture (d means and d variances per component plus
k - 1 free mixing weights). Lower is better; ties go to the smaller k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from fedstack.clustering import (
    GMMModel,
    VectorsLike,
    _gmm_log_prob,
    _ids_and_matrix,
    _logsumexp_rows,
    gmm_fit,
)
from fedstack.errors import PreconditionError, ShapeMismatchError
from fedstack.parallel import map_ordered
from fedstack.seeding import subseed


@dataclass(frozen=True)
class BICRecord:
    k: int
    log_likelihood: float
    param_count: int
    sample_count: int
    score: float


@dataclass
class BICResult:
    records: list[BICRecord]
    selected_k: int

    def __post_init__(self):
        if not self.records:
            raise PreconditionError("BIC result needs at least one record")
        if self.selected_k != select_from_records(self.records):
            raise PreconditionError("selected_k must be the argmin of the scores")

    def scores(self) -> dict[int, float]:
        return {r.k: r.score for r in self.records}


def select_from_records(records: list[BICRecord]) -> int:
    """Smallest k achieving the minimum score."""
    best = min(records, key=lambda r: (r.score, r.k))
    return best.k


def log_likelihood(gmm: GMMModel, vectors: VectorsLike) -> float:
    """Total log density of the data under the mixture, in log space."""
    _, x = _ids_and_matrix(vectors)
    if x.shape[1] != gmm.dim:
        raise ShapeMismatchError(
            f"mixture has dimension {gmm.dim}, data has {x.shape[1]}"
        )
    logp = _gmm_log_prob(x, gmm.weights, gmm.means, gmm.variances)
    return float(_logsumexp_rows(logp).sum())


def param_count(k: int, dim: int) -> int:
    return k * 2 * dim + (k - 1)


def bic(gmm: GMMModel, vectors: VectorsLike) -> float:
    _, x = _ids_and_matrix(vectors)
    n = x.shape[0]
    if n < 2:
        raise PreconditionError("BIC needs at least two samples")
    ll = log_likelihood(gmm, vectors)
    return -2.0 * ll + param_count(gmm.k, gmm.dim) * math.log(n)


def select_k(
    vectors: VectorsLike,
    k_max: int,
    seed: int,
    restarts: int = 5,
    max_iter: int = 300,
    tol: float = 1e-6,
    workers: int = 1,
) -> BICResult:
    """Fit mixtures for k = 1..k_max (best of ``restarts`` each, by
    log-likelihood) and pick the k with the lowest BIC."""
    ids, x = _ids_and_matrix(vectors)
    n = x.shape[0]
    if not 1 <= k_max <= n:
        raise PreconditionError(f"k_max must lie in [1, {n}], got {k_max}")
    if restarts < 1:
        raise PreconditionError("restarts must be >= 1")

    def fit_one_k(k: int) -> BICRecord:
        best: GMMModel | None = None
        for r in range(restarts):
            model, _ = gmm_fit(
                x, k, subseed(seed, "gmm", k, "restart", r),
                max_iter=max_iter, tol=tol,
            )
            if best is None or model.log_likelihood > best.log_likelihood:
                best = model
        return BICRecord(
            k=k,
            log_likelihood=best.log_likelihood,
            param_count=param_count(k, x.shape[1]),
            sample_count=n,
            score=bic(best, x),
        )

    records = map_ordered(fit_one_k, range(1, k_max + 1), workers)
    return BICResult(records=records, selected_k=select_from_records(records))
