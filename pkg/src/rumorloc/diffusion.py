"""Cascade simulation, sensor observations and missingness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import kernels
from .errors import CoverageError, NotFoundError, ParseError
from .graph import NodeId, SocialGraph

MAX_RESAMPLE = 64


def derive_seed(base: int, *keys) -> int:
    """Child seed for a (base, key...) coordinate.

    Uses numpy's SeedSequence spawn keys, so sibling streams never collide
    and do not depend on how many other streams were drawn first.
    """
    ints = []
    for key in keys:
        if isinstance(key, str):
            ints.append(int.from_bytes(key.encode()[:8].ljust(8, b"\0"), "little"))
        else:
            ints.append(int(key))
    ss = np.random.SeedSequence(entropy=int(base) & (2**64 - 1), spawn_key=tuple(ints))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Cascade:
    source: NodeId
    start_epoch: float
    arrival: dict[NodeId, float]
    seed: int | None = None
    delays: np.ndarray | None = field(default=None, repr=False, compare=False)
    warnings: tuple[str, ...] = ()

    def shifted(self, offset: float) -> "Cascade":
        return Cascade(self.source, self.start_epoch + offset,
                       {v: t + offset for v, t in self.arrival.items()},
                       self.seed, self.delays, self.warnings)


@dataclass(frozen=True)
class ObservationVector:
    """Arrival times of ``sensors`` minus the arrival time at ``reference``.

    ``mask[i]`` is True where ``values[i]`` is observed.  Missing entries hold
    NaN until a recovery method fills them.
    """

    reference: NodeId
    sensors: tuple[NodeId, ...]
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.shape != (len(self.sensors),) or mask.shape != values.shape:
            raise ValueError("values, mask and sensors must have equal length")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("present values must be finite")
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "sensors", tuple(int(s) for s in self.sensors))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def all_sensors(self) -> list[NodeId]:
        return [self.reference, *self.sensors]

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    @property
    def missing(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    def __len__(self):
        return len(self.sensors)

    def with_values(self, values, mask=None) -> "ObservationVector":
        return ObservationVector(self.reference, self.sensors, values,
                                 np.ones(len(self.sensors), bool) if mask is None else mask)

    def restrict_to_present(self) -> "ObservationVector":
        keep = self.mask
        return ObservationVector(self.reference, tuple(np.array(self.sensors)[keep].tolist()),
                                 self.values[keep], np.ones(int(keep.sum()), bool))


@dataclass(frozen=True)
class MissingnessSpec:
    mode: str = "sporadic"
    rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("sporadic", "burst"):
            raise ValueError(f"mode must be 'sporadic' or 'burst', got {self.mode!r}")
        if not (0.0 <= self.rate <= 1.0):
            raise ValueError(f"missing rate must lie in [0, 1], got {self.rate}")


def missing_count(rate: float, length: int) -> int:
    # guard against products like 0.07 * 100 = 7.000000000000001
    return min(length, math.ceil(round(rate * length, 9)))


def sample_delays(g: SocialGraph, rng: np.random.Generator, size=None) -> np.ndarray:
    """Gaussian edge delays, resampled while non-positive.

    After ``MAX_RESAMPLE`` failed draws an entry falls back to ``mean/1000``.
    """
    shape = (g.n_edges,) if size is None else (size, g.n_edges)
    mean = np.broadcast_to(g.edge_mean, shape)
    std = np.broadcast_to(np.sqrt(g.edge_var), shape)
    out = rng.normal(mean, std)
    bad = out <= 0
    for _ in range(MAX_RESAMPLE - 1):
        if not bad.any():
            break
        out[bad] = rng.normal(mean[bad], std[bad])
        bad = out <= 0
    if bad.any():
        out[bad] = mean[bad] / 1000.0
    return out


def simulate_cascade(g: SocialGraph, source: NodeId, start_epoch: float = 0.0, seed: int = 0) -> Cascade:
    """One diffusion: sample every edge delay once, then first arrivals by Dijkstra."""
    if source not in g:
        raise NotFoundError(f"source {source} not in graph")
    rng = np.random.default_rng(seed)
    delays = sample_delays(g, rng)
    arr = kernels.batch_arrivals(g.indptr, g.indices, g.edge_ids, delays[None, :], g.index(source))[0]
    arrival = {int(v): start_epoch + float(t) for v, t in zip(g.nodes, arr) if np.isfinite(t)}
    delays.flags.writeable = False
    return Cascade(int(source), float(start_epoch), arrival, seed, delays)


def simulate_arrivals(g: SocialGraph, source: NodeId, samples: int, seed: int = 0) -> np.ndarray:
    """Arrival-time matrix (samples x nodes) of independent cascades from ``source``."""
    rng = np.random.default_rng(seed)
    delays = sample_delays(g, rng, size=samples)
    return kernels.batch_arrivals(g.indptr, g.indices, g.edge_ids, delays, g.index(source))


def observe(c: Cascade, sensors: Sequence[NodeId]) -> ObservationVector:
    if len(sensors) < 2:
        raise ValueError("need at least two sensors")
    unreached = [s for s in sensors if s not in c.arrival or not math.isfinite(c.arrival[s])]
    if unreached:
        raise CoverageError(f"sensors never reached by the cascade: {unreached}")
    t1 = c.arrival[sensors[0]]
    values = [c.arrival[s] - t1 for s in sensors[1:]]
    return ObservationVector(int(sensors[0]), tuple(sensors[1:]), values, np.ones(len(values), bool))


def apply_missingness(o: ObservationVector, spec: MissingnessSpec) -> ObservationVector:
    """Mask ``ceil(rate * len)`` entries.

    Sporadic masks take a prefix of one seeded permutation, so for a fixed
    seed a higher rate masks a superset of a lower rate's entries.
    """
    if not o.complete:
        raise ValueError("apply_missingness expects a fully observed vector")
    k = len(o)
    count = missing_count(spec.rate, k)
    rng = np.random.default_rng(spec.seed)
    mask = np.ones(k, dtype=bool)
    if count:
        if spec.mode == "sporadic":
            mask[rng.permutation(k)[:count]] = False
        else:
            start = int(rng.integers(0, k - count + 1))
            mask[start:start + count] = False
    values = o.values.copy()
    values[~mask] = np.nan
    return ObservationVector(o.reference, o.sensors, values, mask)


def load_cascade(stream: TextIO) -> Cascade:
    """Read ``source <node> <start>`` followed by ``<node> <time>`` lines."""
    source = start = None
    arrival: dict[NodeId, float] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if source is None:
            if len(parts) != 3 or parts[0] != "source":
                raise ParseError(f"line {lineno}: expected 'source <node> <start_time>' header")
            try:
                source, start = int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"line {lineno}: bad source header {raw.strip()!r}") from None
            continue
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected '<node> <time>', got {raw.strip()!r}")
        try:
            node, t = int(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field in {raw.strip()!r}") from None
        if node in arrival:
            raise ParseError(f"line {lineno}: duplicate node {node}")
        arrival[node] = t
    if source is None:
        raise ParseError("missing 'source' header line")
    warnings = []
    if source not in arrival:
        arrival[source] = start
    elif arrival[source] != start:
        warnings.append(f"source arrival {arrival[source]!r} differs from start {start!r}")
    early = sorted(v for v, t in arrival.items() if t < start)
    if early:
        warnings.append(f"{len(early)} arrivals precede the start epoch (first: node {early[0]})")
    return Cascade(source, start, arrival, None, None, tuple(warnings))


def save_cascade(c: Cascade, stream: TextIO) -> None:
    stream.write(f"source {c.source} {c.start_epoch!r}\n")
    for v in sorted(c.arrival):
        stream.write(f"{v} {c.arrival[v]!r}\n")
