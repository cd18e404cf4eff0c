"""Residual-delay correction from renewal theory.

A sensor relays a message, idles for a vacation, relays again, and so on; the
receiving sensor sees a renewal process whose cycles last transmission plus
vacation.  Inspected at a random late time, the expected wait until the next
reception is half the mean cycle scaled by one plus the cycle's squared
coefficient of variation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ValidationError
from .dn import DN_MAX_ITER, DN_TOL, DNResult, PartialDelayMatrix, dn_complete

Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class RenewalParams:
    """First two moments of transmission (per pair) and vacation (per sender).

    ``transmit_mean``/``transmit_var`` are m x n over (sender i, receiver j);
    ``vacation_mean``/``vacation_var`` have length m.
    """

    transmit_mean: np.ndarray
    transmit_var: np.ndarray
    vacation_mean: np.ndarray
    vacation_var: np.ndarray

    def __post_init__(self):
        mx = np.atleast_2d(np.asarray(self.transmit_mean, dtype=float))
        vx = np.atleast_2d(np.asarray(self.transmit_var, dtype=float))
        ms = np.asarray(self.vacation_mean, dtype=float).ravel()
        vs = np.asarray(self.vacation_var, dtype=float).ravel()
        if vx.shape != mx.shape or ms.shape != vs.shape or ms.shape[0] != mx.shape[0]:
            raise ValidationError("renewal moment arrays have inconsistent shapes")
        if np.any(mx <= 0) or np.any(ms < 0):
            raise ValidationError("transmission means must be > 0 and vacation means >= 0")
        if np.any(vx < 0) or np.any(vs < 0):
            raise ValidationError("variances must be >= 0")
        for name, val in (("transmit_mean", mx), ("transmit_var", vx), ("vacation_mean", ms), ("vacation_var", vs)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def shape(self):
        return self.transmit_mean.shape

    def cycle_mean(self) -> np.ndarray:
        """Mean transmission plus mean vacation: the expected delay used without the correction."""
        return self.transmit_mean + self.vacation_mean[:, None]

    def cycle_var(self) -> np.ndarray:
        return self.transmit_var + self.vacation_var[:, None]


def mean_residual(cycle_mean, cycle_var):
    """``mean/2 * (1 + var/mean**2)``, elementwise."""
    cycle_mean = np.asarray(cycle_mean, dtype=float)
    if np.any(cycle_mean <= 0):
        raise ValueError("combined cycle mean must be positive")
    return 0.5 * cycle_mean * (1.0 + np.asarray(cycle_var, dtype=float) / cycle_mean**2)


def renewal_expected_residual(r: RenewalParams, i: int, j: int) -> float:
    total = r.transmit_mean[i, j] + r.vacation_mean[i]
    if total <= 0:
        raise ValueError(f"pair ({i}, {j}) has zero combined mean")
    return float(mean_residual(total, r.transmit_var[i, j] + r.vacation_var[i]))


def renewal_residual_matrix(r: RenewalParams) -> np.ndarray:
    return mean_residual(r.cycle_mean(), r.cycle_var())


@dataclass(frozen=True)
class ResidualEstimate:
    mean: float
    stderr: float
    renewals: int
    short_horizon: bool

    def __float__(self):
        return self.mean


def renewal_epochs(transmit: Sampler, horizon: float, rng: np.random.Generator,
                   vacation: Sampler | None = None, first: Sampler | None = None,
                   chunk: int = 4096) -> np.ndarray:
    """Reception epochs of one vacation renewal path, extended past ``horizon``.

    The first reception takes a ``first`` lifetime (default ``transmit``);
    each later one a vacation followed by a transmission.
    """
    epochs = []
    t = float((first or transmit)(rng, 1)[0])
    epochs.append(np.array([t]))
    while t <= horizon:
        life = transmit(rng, chunk)
        if vacation is not None:
            life = life + vacation(rng, chunk)
        if np.any(life <= 0):
            raise ValueError("lifetimes must be positive")
        ep = t + np.cumsum(life)
        epochs.append(ep)
        # size the next draw to cover what is left of the horizon
        per = (ep[-1] - t) / chunk
        t = float(ep[-1])
        chunk = int(min(max((horizon - t) / per * 1.05, 0) + 16, 1 << 24))
    return np.concatenate(epochs)


def simulate_renewal_residual(transmit: Sampler, horizon: float, samples: int, seed: int = 0,
                              vacation: Sampler | None = None, first: Sampler | None = None
                              ) -> ResidualEstimate:
    """Monte Carlo mean residual time at ``samples`` uniform inspection epochs in ``[0, horizon]``."""
    rng = np.random.default_rng(seed)
    epochs = renewal_epochs(transmit, horizon, rng, vacation, first)
    inspect = rng.uniform(0.0, horizon, size=samples)
    nxt = np.searchsorted(epochs, inspect, side="right")
    resid = epochs[nxt] - inspect
    renewals = int(np.searchsorted(epochs, horizon, side="right"))
    return ResidualEstimate(float(resid.mean()), float(resid.std(ddof=1) / np.sqrt(samples)),
                            renewals, renewals < 100)


def gamma_sampler(mean: float, var: float) -> Sampler:
    """Gamma lifetimes with the given moments (constant when ``var == 0``)."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    if var == 0:
        return lambda rng, size: np.full(size, float(mean))
    shape, scale = mean**2 / var, var / mean
    return lambda rng, size: rng.gamma(shape, scale, size)


def sample_residuals(transmit_mean, transmit_var, vacation_mean, vacation_var, rng: np.random.Generator,
                     horizon_cycles: float = 200.0) -> np.ndarray:
    """One observed residual per entry from independent vacation renewal paths.

    Transmission and vacation times are gamma with the given moments; each
    path is inspected once at a uniform time in ``[0, horizon]`` with the
    horizon set to ``horizon_cycles`` mean cycles of that entry.
    """
    transmit_mean = np.asarray(transmit_mean, dtype=float)
    shape = transmit_mean.shape
    mx, vx = transmit_mean.ravel(), np.broadcast_to(transmit_var, shape).ravel()
    ms, vs = np.broadcast_to(vacation_mean, shape).ravel(), np.broadcast_to(vacation_var, shape).ravel()
    out = np.empty(mx.size)
    for k in range(mx.size):
        tx = gamma_sampler(mx[k], vx[k])
        sv = gamma_sampler(ms[k], vs[k]) if ms[k] > 0 else None
        horizon = horizon_cycles * (mx[k] + ms[k])
        ep = renewal_epochs(tx, horizon, rng, sv, chunk=int(horizon_cycles) + 16)
        u = rng.uniform(0.0, horizon)
        out[k] = ep[np.searchsorted(ep, u, side="right")] - u
    return out.reshape(shape)


def dn_complete_renewal(p: PartialDelayMatrix, r: RenewalParams, tol: float = DN_TOL,
                        max_iter: int = DN_MAX_ITER, mode: str = "literal") -> DNResult:
    """DN completion driven by expected residual delays instead of cycle means."""
    if r.shape != (p.m, p.n):
        raise ValueError(f"renewal moments are {r.shape}, block is {(p.m, p.n)}")
    return dn_complete(p, renewal_residual_matrix(r), tol, max_iter, mode)
