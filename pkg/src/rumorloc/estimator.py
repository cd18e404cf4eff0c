"""Two-stage Gaussian maximum-likelihood source estimator.

For a candidate source ``v`` every sensor's arrival time is the sum of the
independent Gaussian delays on the Dijkstra path from ``v``.  The
inter-arrival vector against the reference sensor is then Gaussian; its mean
holds path-mean differences and its covariance entries are variance sums over
shared path edges.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .community import GatewayGraph, Partition, build_gateway_graph
from .diffusion import ObservationVector
from .errors import CoverageError, EmptyGatewayError, NumericalError
from .graph import NodeId, PathCache, SocialGraph, betweenness_centrality, hop_distance

log = logging.getLogger(__name__)

RIDGE = 1e-9


@dataclass(frozen=True)
class CandidateStats:
    candidate: NodeId
    mean: np.ndarray
    cov: np.ndarray


def _moments(cache: PathCache, cand_index: int, sensor_idx: np.ndarray):
    dm, dv, par = cache.arrays(cand_index)
    if not np.all(np.isfinite(dm[sensor_idx])):
        return None
    G = kernels.shared_variance(par, dv, sensor_idx)
    mean = dm[sensor_idx[1:]] - dm[sensor_idx[0]]
    # grouped so that (a, b) and (b, a) round identically
    cov = G[1:, 1:] - (G[1:, :1] + G[:1, 1:]) + G[0, 0]
    return mean, cov


def candidate_stats(g: SocialGraph, v: NodeId, sensors: Sequence[NodeId],
                    cache: PathCache | None = None) -> CandidateStats:
    """Mean vector and covariance of the inter-arrival vector if ``v`` is the source."""
    cache = cache if cache is not None else PathCache(g)
    sidx = np.array([g.index(s) for s in sensors], dtype=np.int64)
    out = _moments(cache, g.index(v), sidx)
    if out is None:
        dm = cache.arrays(g.index(v))[0]
        lost = [s for s, i in zip(sensors, sidx) if not np.isfinite(dm[i])]
        raise CoverageError(f"sensors {lost} unreachable from candidate {v}")
    return CandidateStats(int(v), *out)


def _regularize(cov: np.ndarray) -> np.ndarray:
    k = cov.shape[-1]
    tr = np.trace(cov, axis1=-2, axis2=-1)
    ridge = RIDGE * tr / k
    return cov + ridge[..., None, None] * np.eye(k)


def _whitener(cov: np.ndarray):
    """Inverse Cholesky factors and log-determinants of a covariance batch."""
    chol = np.linalg.cholesky(cov)
    eye = np.broadcast_to(np.eye(cov.shape[-1]), cov.shape)
    white = np.linalg.solve(chol, eye)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    return white, logdet


def _gauss_scores(mean: np.ndarray, cov: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Batched ``-1/2 log det L - 1/2 r^T L^-1 r`` via Cholesky."""
    white, logdet = _whitener(cov)
    return _whitened_scores(mean, white, logdet, observed)


def _whitened_scores(mean, white, logdet, observed):
    z = np.einsum("...ij,...j->...i", white, observed - mean)
    return -0.5 * logdet - 0.5 * np.einsum("...i,...i->...", z, z)


def log_likelihood(stats: CandidateStats, obs: ObservationVector) -> float:
    """Gaussian log-likelihood up to the candidate-independent ``2 pi`` term."""
    if not obs.complete:
        raise ValueError("observation vector has missing entries; recover them first")
    if len(obs) != len(stats.mean):
        raise ValueError(f"dimension mismatch: {len(obs)} observations vs {len(stats.mean)} moments")
    cov = _regularize(stats.cov)
    try:
        return float(_gauss_scores(stats.mean, cov, obs.values))
    except np.linalg.LinAlgError:
        raise NumericalError(f"covariance for candidate {stats.candidate} is not positive definite") from None


def _candidate_batch(g, cache, candidates, sidx):
    """Moments and whitening factors for every candidate reaching all sensors.

    They depend on the sensor layout only, so results are memoised on the
    path cache and reused across observation vectors.
    """
    cands = tuple(sorted(int(c) for c in candidates))
    key = ("gauss", cands, sidx.tobytes())
    hit = cache.memo_get(key)
    if hit is not None:
        return hit
    ids, means, covs = [], [], []
    for v in cands:
        m = _moments(cache, g.index(v), sidx)
        if m is None:
            continue
        ids.append(v)
        means.append(m[0])
        covs.append(m[1])
    if not ids:
        raise CoverageError("no candidate reaches every sensor")
    mean = np.array(means)
    cov = _regularize(np.array(covs))
    try:
        white, logdet = _whitener(cov)
    except np.linalg.LinAlgError:
        for v, l in zip(ids, cov):
            try:
                np.linalg.cholesky(l)
            except np.linalg.LinAlgError:
                raise NumericalError(f"covariance for candidate {v} is not positive definite") from None
        raise
    out = (ids, mean, white, logdet)
    cache.memo_put(key, out)
    return out


def likelihood_table(g: SocialGraph, candidates: Iterable[NodeId], obs: ObservationVector,
                     cache: PathCache | None = None) -> dict[NodeId, float]:
    """Log-likelihood of every candidate that reaches all sensors, ordered by id."""
    if not obs.complete:
        raise ValueError("observation vector has missing entries; recover them first")
    cache = cache if cache is not None else PathCache(g)
    sidx = np.array([g.index(s) for s in obs.all_sensors], dtype=np.int64)
    ids, mean, white, logdet = _candidate_batch(g, cache, candidates, sidx)
    scores = _whitened_scores(mean, white, logdet, obs.values)
    return dict(zip(ids, scores.tolist()))


def _argmax(table: dict[NodeId, float]) -> NodeId:
    # dict is ordered by id, max() keeps the first maximum
    return max(table, key=table.__getitem__)


def stage1_estimate(gw: GatewayGraph, obs: ObservationVector, sensors: Sequence[NodeId] | None = None,
                    cache: PathCache | None = None) -> tuple[NodeId, dict[NodeId, float]]:
    """Most likely gateway node.  Path statistics use the full parent graph."""
    _check_sensors(obs, sensors)
    table = likelihood_table(gw.parent, gw.nodes, obs, cache)
    return _argmax(table), table


def stage2_estimate(g: SocialGraph, cluster: Iterable[NodeId], obs2: ObservationVector | None,
                    sensors2: Sequence[NodeId] | None = None,
                    cache: PathCache | None = None) -> tuple[NodeId, dict[NodeId, float]]:
    """Most likely source inside ``cluster``."""
    cluster = sorted(int(v) for v in cluster)
    if len(cluster) == 1:
        return cluster[0], {}
    _check_sensors(obs2, sensors2)
    table = likelihood_table(g, cluster, obs2, cache)
    return _argmax(table), table


def _check_sensors(obs, sensors):
    if sensors is not None and list(sensors) != obs.all_sensors:
        raise ValueError("sensor list does not match the observation vector")


@dataclass(frozen=True)
class SourceEstimate:
    stage1_pick: NodeId | None
    stage2_pick: NodeId
    stage1_table: dict[NodeId, float] = field(repr=False)
    stage2_table: dict[NodeId, float] = field(repr=False)
    cluster: frozenset = field(repr=False)
    hop_error: int | None = None

    @property
    def source(self) -> NodeId:
        return self.stage2_pick


def cluster_sensors(g: SocialGraph, cluster: Iterable[NodeId], k2: int,
                    cache: dict | None = None) -> list[NodeId]:
    """Top-``k2`` betweenness nodes of the cluster subgraph (clipped to its size)."""
    members = frozenset(int(v) for v in cluster)
    key = members
    if cache is not None and key in cache:
        scores = cache[key]
    else:
        scores = betweenness_centrality(g.subgraph(members))
        if cache is not None:
            cache[key] = scores
    sub_nodes = sorted(members)
    k = max(2, min(k2, len(sub_nodes)))
    ranked = sorted(sub_nodes, key=lambda v: (-scores.get(v, 0.0), v))
    return ranked[:k]


def two_stage_localize(g: SocialGraph, partition: Partition, obs1: ObservationVector | None,
                       observe_stage2: Callable[[list[NodeId]], ObservationVector],
                       k2: int = 10, true_source: NodeId | None = None,
                       gateway: GatewayGraph | None = None, cache: PathCache | None = None,
                       sensor_cache: dict | None = None) -> SourceEstimate:
    """Pick a cluster through its most likely gateway, then search inside it.

    ``observe_stage2`` receives the stage-two sensor list (chosen after stage
    one, by betweenness inside the picked cluster) and returns the observation
    vector for it, already recovered if entries were missing.  When the
    partition has no gateway nodes the whole graph is searched as one cluster.
    """
    cache = cache if cache is not None else PathCache(g)
    if gateway is None:
        try:
            gateway = build_gateway_graph(g, partition)
        except EmptyGatewayError:
            gateway = None

    if gateway is None:
        log.debug("no gateway nodes; single-stage search over all %d nodes", g.n_nodes)
        pick1, table1 = None, {}
        cluster = frozenset(g.nodes.tolist())
    else:
        if obs1 is None:
            raise ValueError("stage-one observations required when gateways exist")
        pick1, table1 = stage1_estimate(gateway, obs1, cache=cache)
        cluster = partition.clusters[partition.cluster_of[pick1]]

    if len(cluster) == 1:
        pick2, table2 = next(iter(cluster)), {}
    else:
        sensors2 = cluster_sensors(g, cluster, k2, sensor_cache)
        obs2 = observe_stage2(sensors2)
        pick2, table2 = stage2_estimate(g, cluster, obs2, cache=cache)

    hop = hop_distance(g, pick2, true_source) if true_source is not None else None
    return SourceEstimate(pick1, pick2, table1, table2, cluster, hop)
