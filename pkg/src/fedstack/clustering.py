"""Clustering of client weight vectors.

Three algorithms cover the centroid, hierarchy, and distribution families:
Lloyd's K-Means with k-means++ seeding, average-linkage agglomerative
merging over a cosine-distance matrix, and a diagonal-covariance Gaussian
mixture fit by EM. K-Means and the GMM work on the raw vectors in
Euclidean space; the cosine-distance matrix feeds the agglomerative method
and the reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from fedstack.errors import PreconditionError, ShapeMismatchError, ZeroVectorError
from fedstack.nn import WeightSet

VARIANCE_FLOOR = 1e-6

VectorsLike = Union[WeightSet, np.ndarray]


def _ids_and_matrix(vectors: VectorsLike) -> tuple[list, np.ndarray]:
    """Canonical (ids, matrix) view: weight sets are ordered by client id,
    raw arrays get integer row ids."""
    if isinstance(vectors, WeightSet):
        ordered = vectors.ordered()
        return list(ordered.client_ids), ordered.as_matrix()
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError("expected a 2-D array of row vectors")
    return list(range(x.shape[0])), x


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product over the product of norms, clamped into [-1, 1]."""
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.shape != bv.shape:
        raise ShapeMismatchError(
            f"vectors have lengths {av.shape[0]} and {bv.shape[0]}"
        )
    na = np.linalg.norm(av)
    nb = np.linalg.norm(bv)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    return float(np.clip(av @ bv / (na * nb), -1.0, 1.0))


@dataclass
class DistanceMatrix:
    """Symmetric cosine distances (1 - similarity) between clients."""

    client_ids: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.client_ids)
        if self.values.shape != (n, n):
            raise ShapeMismatchError("distance matrix shape must match id count")
        if not np.allclose(self.values, self.values.T, atol=1e-12, rtol=0):
            raise PreconditionError("distance matrix must be symmetric")
        if np.any(np.diag(self.values) != 0.0):
            raise PreconditionError("distance matrix diagonal must be zero")
        if self.values.min() < 0.0 or self.values.max() > 2.0:
            raise PreconditionError("cosine distances must lie in [0, 2]")

    @property
    def n(self) -> int:
        return len(self.client_ids)


def distance_matrix(weights: WeightSet) -> DistanceMatrix:
    """Pairwise cosine distances, ordered by ascending client id."""
    ids, x = _ids_and_matrix(weights)
    if len(ids) < 2:
        raise PreconditionError("need at least two weight vectors")
    values = np.zeros((len(ids), len(ids)))
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            try:
                sim = cosine_similarity(x[i], x[j])
            except ZeroVectorError:
                zero = ids[i] if np.linalg.norm(x[i]) == 0.0 else ids[j]
                raise ZeroVectorError(
                    f"client {zero!r} has a zero weight vector"
                ) from None
            d = 1.0 - sim
            values[i, j] = d
            values[j, i] = d
    return DistanceMatrix(client_ids=ids, values=values)


@dataclass
class GMMModel:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray  # (k,) mixing weights on the simplex
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d), floored
    log_likelihood: float
    ll_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.weights.min() < 0:
            raise PreconditionError("mixing weights must be non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise PreconditionError("mixing weights must sum to 1")
        if self.means.shape != self.variances.shape:
            raise ShapeMismatchError("means and variances must share a shape")
        if self.variances.min() < VARIANCE_FLOOR:
            raise PreconditionError(
                f"variances must stay at or above the floor {VARIANCE_FLOOR}"
            )

    @property
    def k(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])


@dataclass
class ClusterAssignment:
    """client id -> cluster index mapping plus the method and k behind it."""

    method: str
    k: int
    mapping: dict
    model: object = None

    def __post_init__(self):
        if self.k < 1:
            raise PreconditionError("k must be >= 1")
        if not self.mapping:
            raise PreconditionError("assignment must cover at least one client")
        seen = set()
        for cid, cluster in self.mapping.items():
            if not 0 <= cluster < self.k:
                raise PreconditionError(
                    f"client {cid!r} assigned to cluster {cluster} outside [0, {self.k})"
                )
            seen.add(cluster)
        if seen != set(range(self.k)):
            missing = sorted(set(range(self.k)) - seen)
            raise PreconditionError(f"clusters {missing} have no members")

    def members(self, cluster: int) -> list:
        return sorted(cid for cid, c in self.mapping.items() if c == cluster)


def _mean_centroids(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centers = np.zeros((k, x.shape[1]))
    for j in range(k):
        members = x[labels == j]
        if members.shape[0] > 0:
            centers[j] = members.mean(axis=0)
    return centers


def _wcss_arrays(x: np.ndarray, labels: np.ndarray, k: int) -> float:
    total = 0.0
    for j in range(k):
        members = x[labels == j]
        if members.shape[0] > 0:
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def wcss(vectors: VectorsLike, assignment: ClusterAssignment) -> float:
    """Within-cluster sum of squared distances to the member-mean centroids."""
    ids, x = _ids_and_matrix(vectors)
    missing = [cid for cid in ids if cid not in assignment.mapping]
    if missing:
        raise PreconditionError(f"assignment does not cover clients {missing}")
    labels = np.array([assignment.mapping[cid] for cid in ids])
    return _wcss_arrays(x, labels, assignment.k)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: per step, sample a few candidates by the
    squared-distance distribution and keep the one with the lowest
    resulting potential."""
    n = x.shape[0]
    trials = 2 + int(np.log(k)) if k > 1 else 1
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            candidates = rng.integers(n, size=trials)
        else:
            cumulative = np.cumsum(d2)
            draws = rng.random(trials) * total
            candidates = np.minimum(
                np.searchsorted(cumulative, draws, side="right"), n - 1
            )
        best_idx = -1
        best_d2 = None
        best_pot = np.inf
        for idx in candidates:
            cand_d2 = np.minimum(d2, ((x - x[int(idx)]) ** 2).sum(axis=1))
            pot = float(cand_d2.sum())
            if pot < best_pot:
                best_idx, best_d2, best_pot = int(idx), cand_d2, pot
        centers[j] = x[best_idx]
        d2 = best_d2
    return centers


def _repair_empty(
    labels: np.ndarray, x: np.ndarray, centers: np.ndarray, k: int
) -> np.ndarray:
    """Give each empty cluster the point farthest from its own centroid,
    reseeding that cluster's center at the point."""
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        dist_own = ((x - centers[labels]) ** 2).sum(axis=1)
        eligible = sizes[labels] > 1
        if not np.any(eligible):
            raise PreconditionError("cannot repair empty cluster: k exceeds points")
        dist_own[~eligible] = -np.inf
        idx = int(np.argmax(dist_own))
        labels[idx] = j
        centers[j] = x[idx]
    return labels


def kmeans(
    vectors: VectorsLike,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> ClusterAssignment:
    """Lloyd iterations from a k-means++ start until the centroid shift
    drops below ``tol``. The true objective (sum of squared distances to
    member means) is checked to be non-increasing every iteration."""
    ids, x = _ids_and_matrix(vectors)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise PreconditionError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(x, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    prev_obj = np.inf
    for _ in range(max_iter):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        labels = _repair_empty(labels, x, centers, k)
        new_centers = _mean_centroids(x, labels, k)
        obj = _wcss_arrays(x, labels, k)
        if obj > prev_obj + 1e-9 * (1.0 + abs(prev_obj)):
            raise AssertionError(
                f"k-means objective increased: {prev_obj} -> {obj}"
            )
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        prev_obj = obj
        if shift < tol:
            break
    mapping = {cid: int(lbl) for cid, lbl in zip(ids, labels)}
    return ClusterAssignment(method="kmeans", k=k, mapping=mapping, model=centers)


def agglomerative(dist: DistanceMatrix, k: int) -> ClusterAssignment:
    """Average-linkage merging of the closest pair until k clusters remain.

    Ties pick the pair whose (lowest, second-lowest) member indices sort
    first, so the result is deterministic. Linkage updates use the exact
    size-weighted average, equivalent to the mean pairwise distance.
    """
    n = dist.n
    if not 1 <= k <= n:
        raise PreconditionError(f"k must lie in [1, {n}], got {k}")
    work = dist.values.astype(np.float64).copy()
    active = list(range(n))  # cluster key = lowest original member index
    sizes = {i: 1 for i in range(n)}
    members = {i: [i] for i in range(n)}

    while len(active) > k:
        best = None
        for a_pos in range(len(active)):
            for b_pos in range(a_pos + 1, len(active)):
                i, j = active[a_pos], active[b_pos]
                d = work[i, j]
                if best is None or d < best[0]:
                    best = (d, i, j)
        _, i, j = best
        ni, nj = sizes[i], sizes[j]
        for other in active:
            if other in (i, j):
                continue
            merged = (ni * work[i, other] + nj * work[j, other]) / (ni + nj)
            work[i, other] = merged
            work[other, i] = merged
        sizes[i] = ni + nj
        members[i].extend(members[j])
        del sizes[j], members[j]
        active.remove(j)

    mapping = {}
    for cluster, key in enumerate(sorted(active)):
        for idx in members[key]:
            mapping[dist.client_ids[idx]] = cluster
    return ClusterAssignment(method="agglomerative", k=k, mapping=mapping)


def _gmm_log_prob(
    x: np.ndarray, weights: np.ndarray, means: np.ndarray, variances: np.ndarray
) -> np.ndarray:
    """(n, k) matrix of log(pi_j) + log N(x_i | mu_j, diag sigma2_j)."""
    with np.errstate(divide="ignore"):
        log_pi = np.log(weights)
    const = -0.5 * np.log(2.0 * np.pi * variances).sum(axis=1)
    logp = np.empty((x.shape[0], means.shape[0]))
    for j in range(means.shape[0]):
        sq = ((x - means[j]) ** 2 / variances[j]).sum(axis=1)
        logp[:, j] = log_pi[j] + const[j] - 0.5 * sq
    return logp


def _logsumexp_rows(logp: np.ndarray) -> np.ndarray:
    m = logp.max(axis=1, keepdims=True)
    return m[:, 0] + np.log(np.exp(logp - m).sum(axis=1))


def gmm_fit(
    vectors: VectorsLike,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> tuple[GMMModel, ClusterAssignment]:
    """EM for a diagonal-covariance mixture, started from k-means++ means.

    Stops when the log-likelihood gain drops below ``tol``. Variances are
    floored at ``VARIANCE_FLOOR`` so a collapsing component can never
    produce NaNs; the log-likelihood is checked to be non-decreasing
    (within 1e-9) at every step. Points go to the component with the
    highest responsibility; if that leaves a component empty, the point
    most responsible for it is moved over so every cluster has a member.
    """
    ids, x = _ids_and_matrix(vectors)
    n, d = x.shape
    if not 1 <= k <= n:
        raise PreconditionError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)

    means = _kmeanspp_init(x, k, rng).copy()
    base_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    variances = np.tile(base_var, (k, 1))
    mix = np.full(k, 1.0 / k)

    ll_history: list[float] = []
    prev_ll = None
    for _ in range(max_iter):
        logp = _gmm_log_prob(x, mix, means, variances)
        lse = _logsumexp_rows(logp)
        ll = float(lse.sum())
        if prev_ll is not None and ll < prev_ll - 1e-9:
            raise AssertionError(f"EM log-likelihood decreased: {prev_ll} -> {ll}")
        ll_history.append(ll)
        if prev_ll is not None and ll - prev_ll < tol:
            break
        prev_ll = ll

        resp = np.exp(logp - lse[:, None])
        nj = resp.sum(axis=0)
        mix = nj / n
        for j in range(k):
            if nj[j] < 1e-12:
                continue  # dead component: keep parameters, weight ~ 0
            means[j] = resp[:, j] @ x / nj[j]
            sq = (x - means[j]) ** 2
            variances[j] = np.maximum(resp[:, j] @ sq / nj[j], VARIANCE_FLOOR)

    logp = _gmm_log_prob(x, mix, means, variances)
    lse = _logsumexp_rows(logp)
    resp = np.exp(logp - lse[:, None])
    final_ll = float(lse.sum())
    if final_ll < ll_history[-1] - 1e-9:
        raise AssertionError("EM log-likelihood decreased at the final step")
    if final_ll != ll_history[-1]:
        ll_history.append(final_ll)

    labels = resp.argmax(axis=1).astype(np.int64)
    for j in range(k):
        while not np.any(labels == j):
            sizes = np.bincount(labels, minlength=k)
            candidates = resp[:, j].copy()
            candidates[sizes[labels] <= 1] = -np.inf
            labels[int(np.argmax(candidates))] = j

    model = GMMModel(
        weights=mix,
        means=means,
        variances=variances,
        log_likelihood=final_ll,
        ll_history=ll_history,
    )
    mapping = {cid: int(lbl) for cid, lbl in zip(ids, labels)}
    return model, ClusterAssignment(method="gmm", k=k, mapping=mapping, model=model)
