"""Seeded experiment harness: synthetic networks, recovery and localization runs, CSV output.

Every random draw is keyed by ``derive_seed(base_seed, stream, ...)`` so that
a trial sees the same network, source, cascade and mask positions whatever
method or missing rate is being evaluated; comparisons are paired.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Iterator, Sequence

import numpy as np

from .community import Partition, build_gateway_graph, louvain_partition
from .diffusion import (MissingnessSpec, ObservationVector, apply_missingness, derive_seed,
                        observe, simulate_cascade)
from .errors import EmptyGatewayError, RumorLocError
from .estimator import two_stage_localize
from .graph import (EdgeDelay, PathCache, SocialGraph, betweenness_centrality, chain_order, is_connected,
                    load_edge_list, select_sensors)
from .recovery import (PartialDelayMatrix, RenewalParams, condition_check_and_load, cs_recover, dn_complete,
                       observed_row_covariance, pca_basis, renewal_residual_matrix, sample_residuals)

log = logging.getLogger(__name__)

FAMILIES = ("barabasi_albert", "watts_strogatz", "tree", "two_clique")
ALIASES = {"ba": "barabasi_albert", "ws": "watts_strogatz"}
METHODS = ("cs", "dn", "dn_renewal", "none")


# ---------------------------------------------------------------- networks
def _ba_edges(n, m, rng):
    if m < 1 or n <= m:
        raise ValueError(f"barabasi_albert needs 1 <= m < n, got n={n}, m={m}")
    edges = [(i, j) for i in range(m + 1) for j in range(i + 1, m + 1)]
    repeated = [v for e in edges for v in e]
    for new in range(m + 1, n):
        targets = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            edges.append((t, new))
            repeated.extend((t, new))
    return edges


def _ws_edges(n, k, p, rng, tries=100):
    if k < 2 or k % 2 or k >= n or not 0 <= p <= 1:
        raise ValueError(f"watts_strogatz needs even 2 <= k < n and p in [0,1], got k={k}, p={p}")
    for _ in range(tries):
        adj = {v: set() for v in range(n)}
        for v in range(n):
            for j in range(1, k // 2 + 1):
                w = (v + j) % n
                adj[v].add(w)
                adj[w].add(v)
        for j in range(1, k // 2 + 1):
            for v in range(n):
                w = (v + j) % n
                if w in adj[v] and rng.random() < p:
                    choices = [u for u in range(n) if u != v and u not in adj[v]]
                    if not choices:
                        continue
                    u = choices[int(rng.integers(len(choices)))]
                    adj[v].discard(w)
                    adj[w].discard(v)
                    adj[v].add(u)
                    adj[u].add(v)
        edges = sorted({(min(v, w), max(v, w)) for v in adj for w in adj[v]})
        g = SocialGraph(range(n), [(u, v, EdgeDelay(1.0, 0.0)) for u, v in edges])
        if is_connected(g):
            return edges
    raise ValueError("could not draw a connected Watts-Strogatz graph")


def _tree_edges(n, rng):
    if n < 1:
        raise ValueError("tree needs n >= 1")
    return [(int(rng.integers(v)), v) for v in range(1, n)]


def _two_clique_edges(a, b):
    if a < 1 or b < 1:
        raise ValueError("two_clique needs positive clique sizes")
    left = [(i, j) for i in range(a) for j in range(i + 1, a)]
    right = [(a + i, a + j) for i in range(b) for j in range(i + 1, b)]
    return left + right + [(a - 1, a)]


def generate_network(family: str, params: dict | None = None, mean_range=(1.0, 2.0),
                     var_range=(0.01, 0.05), seed: int = 0, relative_variance: bool = False) -> SocialGraph:
    """Connected synthetic network with uniform random edge delays.

    ``params``: ``n``, plus ``m`` (barabasi_albert), ``k``/``p``
    (watts_strogatz) or ``a``/``b`` (two_clique).  With
    ``relative_variance`` the drawn variance multiplies ``mean**2``.
    """
    family = ALIASES.get(family, family)
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if family == "barabasi_albert":
        n = int(params.get("n", 1000))
        edges = _ba_edges(n, int(params.get("m", 2)), rng)
    elif family == "watts_strogatz":
        n = int(params.get("n", 1000))
        edges = _ws_edges(n, int(params.get("k", 4)), float(params.get("p", 0.1)), rng)
    elif family == "tree":
        n = int(params.get("n", 100))
        edges = _tree_edges(n, rng)
    elif family == "two_clique":
        a = int(params.get("a", params.get("n", 10) // 2))
        b = int(params.get("b", a))
        n = a + b
        edges = _two_clique_edges(a, b)
    else:
        raise ValueError(f"unknown network family {family!r}; choose from {FAMILIES}")
    lo, hi = mean_range
    vlo, vhi = var_range
    if not 0 < lo <= hi or not 0 <= vlo <= vhi:
        raise ValueError("delay ranges must satisfy 0 < mean_lo <= mean_hi and 0 <= var_lo <= var_hi")
    means = rng.uniform(lo, hi, len(edges))
    variances = rng.uniform(vlo, vhi, len(edges))
    if relative_variance:
        variances = variances * means**2
    delays = [EdgeDelay(float(mean), float(var)) for mean, var in zip(means, variances)]
    return SocialGraph(range(n), [(u, v, d) for (u, v), d in zip(edges, delays)])


# ----------------------------------------------------------------- config
@dataclass
class ExperimentConfig:
    network: str = "barabasi_albert"
    nodes: int = 1000
    network_params: dict = field(default_factory=dict)
    mean_range: tuple = (1.0, 2.0)
    var_range: tuple = (0.1, 0.25)
    relative_variance: bool = True
    networks: int = 1
    sensor_pcts: list = field(default_factory=lambda: [10.0])
    missing_rates: list = field(default_factory=lambda: [0.0, 0.15, 0.30])
    mode: str = "sporadic"
    methods: list = field(default_factory=lambda: ["cs"])
    trials: int = 20
    seed: int = 0
    k2: int = 10
    basis: str = "pca"
    dn_mode: str = "normalized"
    vacation_mean: float = 1.0
    vacation_cv: float = 0.5
    louvain_seed: int | None = None
    sensor_order: str = "chain"
    mask_stage2: bool = False
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        self.network = ALIASES.get(self.network, self.network)
        self.methods = [m.replace("-", "_") for m in self.methods]
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown recovery method(s) {bad}; choose from {METHODS}")
        if any(not 0 <= r <= 1 for r in self.missing_rates):
            raise ValueError("missing rates must lie in [0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.networks < 1:
            raise ValueError("networks must be >= 1")
        if self.mode not in ("sporadic", "burst"):
            raise ValueError("mode must be 'sporadic' or 'burst'")
        if any(p <= 0 or p > 100 for p in self.sensor_pcts):
            raise ValueError("sensor percentages must lie in (0, 100]")
        if self.sensor_order not in ("chain", "rank"):
            raise ValueError("sensor_order must be 'chain' or 'rank'")
        if self.basis not in ("dct", "identity", "haar", "pca"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.k2 < 2:
            raise ValueError("k2 must be >= 2")

    def layout(self, ctx: "NetworkContext", sensors: Sequence[int], graph: SocialGraph | None = None) -> list[int]:
        """Sensor order used for the inter-arrival vector; the reference stays first."""
        if self.sensor_order == "rank":
            return list(sensors)
        return chain_order(graph or ctx.graph, sensors, ctx.cache if graph is None else None)

    def sensor_count(self, pct: float, n: int) -> int:
        k = math.ceil(round(pct / 100.0 * n, 9))
        if k < 2:
            raise ValueError(f"{pct}% of {n} nodes gives fewer than 2 sensors")
        return min(k, n)


# ---------------------------------------------------------------- records
@dataclass
class TrialRecord:
    experiment: str
    network: str
    nodes: int
    network_index: int
    sensor_pct: float
    sensors: int
    missing_rate: float
    mode: str
    method: str
    trial: int
    seed: int
    source: int
    status: str = "ok"
    n_missing: int | None = None
    mse: float | None = None
    estimate: int | None = None
    hop_distance: int | None = None
    diag_load: float | None = None
    wall_time: float | None = None

    @classmethod
    def columns(cls, timing: bool = False) -> list[str]:
        cols = [f.name for f in fields(cls)]
        return cols if timing else [c for c in cols if c != "wall_time"]


@dataclass
class MetricsRecord:
    """Aggregate over trials for one (sensor %, missing rate, method) cell."""

    experiment: str
    sensor_pct: float
    missing_rate: float
    method: str
    mode: str
    trials: int
    failed: int
    recovery_mse: float | None
    source_distance: float | None
    per_trial_mse: list
    per_trial_distance: list
    wall_time: float


def summarize(records: Iterable[TrialRecord]) -> list[MetricsRecord]:
    cells: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        cells.setdefault((r.experiment, r.sensor_pct, r.missing_rate, r.method, r.mode), []).append(r)
    out = []
    for (exp, pct, rate, method, mode), rows in cells.items():
        ok = [r for r in rows if r.status == "ok"]
        mses = [r.mse for r in ok if r.mse is not None]
        dists = [r.hop_distance for r in ok if r.hop_distance is not None]
        out.append(MetricsRecord(exp, pct, rate, method, mode, len(rows), len(rows) - len(ok),
                                 float(np.mean(mses)) if mses else None,
                                 float(np.mean(dists)) if dists else None,
                                 mses, dists, float(sum(r.wall_time or 0.0 for r in rows))))
    return out


# ---------------------------------------------------------------- CSV sink
def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(fh, records: Iterable[TrialRecord], timing: bool = False, header: bool = True) -> int:
    """CSV rows to an open text stream, flushed one by one; returns the row count."""
    cols = TrialRecord.columns(timing)
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(cols)
    count = 0
    for rec in records:
        row = asdict(rec)
        w.writerow([_fmt(row[c]) for c in cols])
        fh.flush()
        count += 1
    return count


def emit_csv(records: Iterable[TrialRecord], path, append: bool = False, timing: bool = False) -> int:
    """Write a header and one row per record; returns the row count.

    Floats use shortest round-trip formatting.  With ``append`` the header is
    only written when the file is new or empty.
    """
    try:
        header = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
        with open(path, "a" if append else "w", newline="") as fh:
            return write_rows(fh, records, timing, header)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> list[TrialRecord]:
    """Parse a file written by ``emit_csv`` back into records."""
    types = {f.name: f.type for f in fields(TrialRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                if v == "":
                    kw[k] = None
                elif t.startswith("int"):
                    kw[k] = int(v)
                elif t.startswith("float"):
                    kw[k] = float(v)
                else:
                    kw[k] = v
            out.append(TrialRecord(**kw))
    return out


# --------------------------------------------------------- network context
class NetworkContext:
    """A network plus everything derived from it that trials share."""

    def __init__(self, g: SocialGraph, name: str, louvain_seed: int):
        self.graph = g
        self.name = name
        self.cache = PathCache(g)
        self._louvain_seed = louvain_seed
        self._scores = None
        self._partition = None
        self._gateway = False
        self._gw_scores = None
        self.sensor_cache: dict = {}

    @property
    def scores(self):
        if self._scores is None:
            self._scores = betweenness_centrality(self.graph)
        return self._scores

    @property
    def partition(self) -> Partition:
        if self._partition is None:
            self._partition = louvain_partition(self.graph, self._louvain_seed)
        return self._partition

    @property
    def gateway(self):
        if self._gateway is False:
            try:
                self._gateway = build_gateway_graph(self.graph, self.partition)
            except EmptyGatewayError:
                self._gateway = None
        return self._gateway

    @property
    def gateway_scores(self):
        if self._gw_scores is None and self.gateway is not None:
            self._gw_scores = betweenness_centrality(self.gateway.graph)
        return self._gw_scores


def build_networks(cfg: ExperimentConfig) -> list[NetworkContext]:
    out = []
    for i in range(cfg.networks):
        if os.path.exists(cfg.network):
            with open(cfg.network) as fh:
                g = load_edge_list(fh)
            name = os.path.basename(cfg.network)
        else:
            params = {"n": cfg.nodes, **cfg.network_params}
            g = generate_network(cfg.network, params, cfg.mean_range, cfg.var_range,
                                 derive_seed(cfg.seed, "network", i), cfg.relative_variance)
            name = cfg.network
        lseed = cfg.louvain_seed if cfg.louvain_seed is not None else derive_seed(cfg.seed, "louvain", i)
        out.append(NetworkContext(g, name, lseed))
    return out


def _trial_source(cfg, ctx, trial) -> tuple[int, int]:
    """(source, cascade seed) for a trial; independent of rate, method and sensor count."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "source", trial))
    source = int(ctx.graph.nodes[rng.integers(ctx.graph.n_nodes)])
    return source, derive_seed(cfg.seed, "cascade", trial)


# ------------------------------------------------------------- recovery
def _mse(truth, estimate, idx) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        return 0.0
    diff = np.asarray(estimate)[idx] - np.asarray(truth)[idx]
    return float(np.mean(diff**2))


def model_basis(ctx: "NetworkContext", sensors: Sequence[int]):
    """PCA basis of the noise-free inter-arrival vectors of every possible source.

    Built from the mean-delay graph only; row ``v`` of the example matrix is
    the mean delay from ``v`` to each sensor minus that to the reference.
    """
    key = ("pca", tuple(int(s) for s in sensors))
    hit = ctx.cache.memo_get(key)
    if hit is None:
        g = ctx.graph
        dist = np.array([ctx.cache.arrays(g.index(s))[0] for s in sensors])
        examples = (dist[1:] - dist[0]).T
        hit = pca_basis(examples[np.all(np.isfinite(examples), axis=1)])
        ctx.cache.memo_put(key, hit)
    return hit


def recover_vector(obs: ObservationVector, method: str, basis: str = "dct",
                   ctx: "NetworkContext | None" = None) -> ObservationVector:
    """Fill an observation vector's gaps with ``cs`` or zeros (``none``).

    ``basis="pca"`` needs ``ctx`` to learn the basis from the network.
    """
    if obs.complete:
        return obs
    if method == "cs":
        if basis == "pca":
            if ctx is None:
                raise ValueError("the pca basis needs a network context")
            return cs_recover(obs, model_basis(ctx, obs.all_sensors))
        return cs_recover(obs, basis)
    if method == "none":
        values = np.where(obs.mask, obs.values, 0.0)
        return obs.with_values(values)
    raise ValueError(f"method {method!r} does not recover observation vectors")


def burst_block_size(rate: float, k: int) -> int:
    """Smallest idle-group size n whose missing block covers ``rate`` of the k x k matrix."""
    if rate <= 0 or k < 3:
        return 0
    target = rate * k * k
    for n in range(1, k - 1):
        if 2 * n * (k - 1 - n) >= target - 1e-9:
            return n
    return (k - 1) // 2


def vacation_moments(cfg: ExperimentConfig, k: int, rng) -> tuple[np.ndarray, np.ndarray]:
    mean_s = cfg.vacation_mean * rng.uniform(0.5, 1.5, k)
    return mean_s, (cfg.vacation_cv * mean_s) ** 2


def delay_matrix_trial(cfg: ExperimentConfig, ctx: NetworkContext, sensors: Sequence[int], rate: float,
                       seed: int, methods: Sequence[str]) -> dict:
    """Block-clique completion of vacation-renewal residual delays between sensors.

    Returns ``{method: (mse, n_missing, diag_load)}``.  All methods share the
    same residual draw and block layout.
    """
    g = ctx.graph
    k = len(sensors)
    rng = np.random.default_rng(seed)
    nb = burst_block_size(rate, k)
    if nb == 0:
        return {m: (0.0, 0, 0.0) for m in methods}
    order = rng.permutation(k)
    layout = np.concatenate([order[nb + 1:], order[nb:nb + 1], order[:nb]])  # A, e, B
    idx = np.array([g.index(sensors[i]) for i in layout])
    mean = np.empty((k, k))
    var = np.empty((k, k))
    for a, ia in enumerate(idx):
        dm, dv, _ = ctx.cache.arrays(int(ia))
        mean[a] = dm[idx]
        var[a] = dv[idx]
    mean_s, var_s = vacation_moments(cfg, k, rng)
    iu = np.triu_indices(k, 1)
    resid = np.zeros((k, k))
    resid[iu] = sample_residuals(mean[iu], var[iu], mean_s[iu[0]], var_s[iu[0]], rng)
    resid = resid + resid.T
    m = k - 1 - nb
    p = PartialDelayMatrix.from_matrix(resid, m)
    truth = resid[:m, m + 1:]
    params = RenewalParams(mean[:m, m + 1:], var[:m, m + 1:], mean_s[:m], var_s[:m])
    loaded = condition_check_and_load(p, observed_row_covariance(p))
    out = {}
    for method in methods:
        if method == "dn":
            est = dn_complete(p, params.cycle_mean(), mode=cfg.dn_mode).block
        elif method == "dn_renewal":
            est = dn_complete(p, renewal_residual_matrix(params), mode=cfg.dn_mode).block
        elif method == "none":
            est = np.zeros_like(truth)
        elif method == "cs":
            raise ValueError("cs recovers observation vectors, not delay matrices")
        out[method] = (float(np.mean((est - truth) ** 2)), int(2 * truth.size), loaded.diagonal_load)
    return out


def run_recovery_experiment(cfg: ExperimentConfig, networks: list[NetworkContext] | None = None
                            ) -> Iterator[TrialRecord]:
    """Recovery error on masked entries for every (sensor %, rate, method, trial).

    ``cs`` and ``none`` work on the inter-arrival vector of a simulated
    cascade; ``dn`` and ``dn_renewal`` complete a block of the sensor delay
    matrix whose entries are residual delays of vacation renewal paths.
    """
    networks = networks or build_networks(cfg)
    vec_methods = [m for m in cfg.methods if m in ("cs", "none")]
    mat_methods = [m for m in cfg.methods if m in ("dn", "dn_renewal")]

    def job(args):
        pct, rate, trial = args
        ctx = networks[trial % len(networks)]
        g = ctx.graph
        k = cfg.sensor_count(pct, g.n_nodes)
        source, cseed = _trial_source(cfg, ctx, trial)
        base = dict(experiment="recover", network=ctx.name, nodes=g.n_nodes,
                    network_index=trial % len(networks), sensor_pct=pct, sensors=k,
                    missing_rate=rate, trial=trial, seed=cseed, source=source)
        rows = {}
        t0 = time.perf_counter()
        sensors = cfg.layout(ctx, select_sensors(g, k, ctx.scores))
        if vec_methods:
            try:
                obs = observe(simulate_cascade(g, source, 0.0, cseed), sensors)
                masked = apply_missingness(obs, MissingnessSpec(cfg.mode, rate,
                                                                derive_seed(cfg.seed, "mask", trial)))
            except RumorLocError as exc:
                for m in vec_methods:
                    rows[m] = TrialRecord(**base, mode=cfg.mode, method=m, status=f"failed: {exc}")
            else:
                for m in vec_methods:
                    t1 = time.perf_counter()
                    try:
                        rec = recover_vector(masked, m, cfg.basis, ctx)
                    except RumorLocError as exc:
                        rows[m] = TrialRecord(**base, mode=cfg.mode, method=m, status=f"failed: {exc}",
                                              n_missing=len(masked.missing))
                        continue
                    rows[m] = TrialRecord(**base, mode=cfg.mode, method=m, n_missing=len(masked.missing),
                                          mse=_mse(obs.values, rec.values, masked.missing),
                                          wall_time=time.perf_counter() - t1)
        if mat_methods:
            t1 = time.perf_counter()
            try:
                res = delay_matrix_trial(cfg, ctx, sensors, rate, derive_seed(cfg.seed, "delays", trial),
                                         mat_methods)
            except RumorLocError as exc:
                for m in mat_methods:
                    rows[m] = TrialRecord(**base, mode="burst", method=m, status=f"failed: {exc}")
            else:
                dt = (time.perf_counter() - t1) / len(mat_methods)
                for m, (mse, nmiss, load) in res.items():
                    rows[m] = TrialRecord(**base, mode="burst", method=m, n_missing=nmiss, mse=mse,
                                          diag_load=load, wall_time=dt)
        for r in rows.values():
            if r.wall_time is None:
                r.wall_time = time.perf_counter() - t0
        return [rows[m] for m in cfg.methods]

    grid = [(pct, rate, t) for pct in cfg.sensor_pcts for rate in cfg.missing_rates for t in range(cfg.trials)]
    yield from _ordered(job, grid, cfg.workers)


# ---------------------------------------------------------- localization
def _pipeline_observer(cfg, ctx, cascade, rate, method, trial, stage):
    """Observation -> missingness -> recovery for one stage's sensor list."""
    mask_seed = derive_seed(cfg.seed, "mask", trial, stage)
    if stage == 2 and not cfg.mask_stage2:
        rate = 0.0
    stats = {}

    def fn(sensors):
        if stage == 2:
            sensors = cfg.layout(ctx, sensors)
        obs = observe(cascade, sensors)
        masked = apply_missingness(obs, MissingnessSpec(cfg.mode, rate, mask_seed))
        stats["n_missing"] = len(masked.missing)
        if masked.complete:
            stats["mse"] = 0.0
            return obs
        if method == "none":
            present = masked.restrict_to_present()
            if len(present) == 0:
                raise RumorLocError("all stage observations are missing")
            stats["mse"] = None
            return present
        if method in ("dn", "dn_renewal"):
            rec = dn_impute(cfg, ctx, masked, renewal=(method == "dn_renewal"),
                            seed=derive_seed(cfg.seed, "vacation", trial, stage))
        else:
            rec = recover_vector(masked, method, cfg.basis, ctx)
        stats["mse"] = _mse(obs.values, rec.values, masked.missing)
        return rec

    return fn, stats


def dn_impute(cfg: ExperimentConfig, ctx: NetworkContext, obs: ObservationVector, renewal: bool,
              seed: int) -> ObservationVector:
    """Model-based fill of missing inter-arrival entries through DN completion.

    The present sensors (reference first) form the known group, the last of
    them the hub sensor and the missing sensors the idle group; known
    blocks hold expected delays from the mean graph.  The completed
    reference row gives the missing inter-arrival estimates, i.e. the
    delay of relaying from the reference to sensor j.
    """
    g = ctx.graph
    sensors = np.array(obs.sensors)
    present = [obs.reference, *sensors[obs.mask].tolist()]
    missing = sensors[~obs.mask].tolist()
    if len(present) < 2:
        return recover_vector(obs, "none")
    order = present + missing
    m = len(present) - 1
    idx = np.array([g.index(s) for s in order])
    mean = np.empty((len(order), len(order)))
    var = np.empty_like(mean)
    for a, ia in enumerate(idx):
        dm, dv, _ = ctx.cache.arrays(int(ia))
        mean[a] = dm[idx]
        var[a] = dv[idx]
    rng = np.random.default_rng(seed)
    mean_s, var_s = vacation_moments(cfg, m, rng)
    params = RenewalParams(mean[:m, m + 1:], var[:m, m + 1:], mean_s, var_s)
    p = PartialDelayMatrix.from_matrix(mean, m)
    expected = renewal_residual_matrix(params) if renewal else params.cycle_mean()
    block = dn_complete(p, expected, mode=cfg.dn_mode).block
    values = obs.values.copy()
    values[~obs.mask] = block[0]
    return obs.with_values(values)


def run_localization_experiment(cfg: ExperimentConfig, networks: list[NetworkContext] | None = None,
                                cascades: list | None = None) -> Iterator[TrialRecord]:
    """Hop distance between estimated and true source for every (sensor %, rate, method, trial).

    With ``cascades`` given, trial ``t`` localizes ``cascades[t]`` instead of
    a simulated one.
    """
    networks = networks or build_networks(cfg)
    trials = len(cascades) if cascades else cfg.trials

    def job(args):
        pct, rate, method, trial = args
        ctx = networks[trial % len(networks)]
        g = ctx.graph
        if cascades:
            cascade = cascades[trial]
            source, cseed = cascade.source, -1 if cascade.seed is None else cascade.seed
        else:
            source, cseed = _trial_source(cfg, ctx, trial)
            cascade = None
        gw = ctx.gateway
        n_gate = gw.graph.n_nodes if gw is not None else g.n_nodes
        k1 = min(max(cfg.sensor_count(pct, g.n_nodes), 2), n_gate)
        base = dict(experiment="localize", network=ctx.name, nodes=g.n_nodes,
                    network_index=trial % len(networks), sensor_pct=pct, sensors=k1,
                    missing_rate=rate, mode=cfg.mode, method=method, trial=trial, seed=cseed, source=source)
        t0 = time.perf_counter()
        try:
            if cascade is None:
                cascade = simulate_cascade(g, source, 0.0, cseed)
            obs1 = None
            stats1 = {}
            if gw is not None:
                sensors1 = cfg.layout(ctx, select_sensors(gw.graph, k1, ctx.gateway_scores))
                fn1, stats1 = _pipeline_observer(cfg, ctx, cascade, rate, method, trial, 1)
                obs1 = fn1(sensors1)
            fn2, stats2 = _pipeline_observer(cfg, ctx, cascade, rate, method, trial, 2)
            est = two_stage_localize(g, ctx.partition, obs1, fn2, cfg.k2, true_source=source,
                                     gateway=gw, cache=ctx.cache, sensor_cache=ctx.sensor_cache)
        except RumorLocError as exc:
            return TrialRecord(**base, status=f"failed: {exc}", wall_time=time.perf_counter() - t0)
        stats = stats1 if gw is not None else stats2
        return TrialRecord(**base, n_missing=stats.get("n_missing"), mse=stats.get("mse"),
                           estimate=est.source, hop_distance=est.hop_error,
                           wall_time=time.perf_counter() - t0)

    grid = [(pct, rate, m, t) for pct in cfg.sensor_pcts for rate in cfg.missing_rates
            for m in cfg.methods for t in range(trials)]
    for rec in _ordered(job, grid, cfg.workers):
        yield from (rec if isinstance(rec, list) else [rec])


def _ordered(job, grid, workers):
    """Run ``job`` over ``grid`` and yield results in grid order."""
    if workers <= 1:
        for item in grid:
            res = job(item)
            yield from (res if isinstance(res, list) else [res])
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for res in pool.map(job, grid):
            yield from (res if isinstance(res, list) else [res])
