"""Doubly non-negative completion of a block-clique delay matrix.

Layout of the symmetric sensor delay matrix::

        | group1    link1  block  |
        | link1^T   hub    link2^T |
        | block^T   link2  group2 |

``group1`` (m x m), ``group2`` (n x n), the hub links and the hub diagonal
are known; the m x n ``block`` is filled as
``diag(row_scale) link1 link2^T diag(col_scale)`` where the scalings come
from alternating least-squares fits of ``row_scale col_scale^T`` to the
expected-delay matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConvergenceError, DegenerateInputError, ValidationError

DN_TOL = 1e-9
DN_MAX_ITER = 1000


@dataclass(frozen=True)
class PartialDelayMatrix:
    group1: np.ndarray
    link1: np.ndarray
    hub: float
    link2: np.ndarray
    group2: np.ndarray
    diagonal_load: float = 0.0

    def __post_init__(self):
        g1 = np.atleast_2d(np.asarray(self.group1, dtype=float))
        g2 = np.atleast_2d(np.asarray(self.group2, dtype=float))
        l1 = np.asarray(self.link1, dtype=float).ravel()
        l2 = np.asarray(self.link2, dtype=float).ravel()
        m, n = len(l1), len(l2)
        if g1.shape != (m, m) or g2.shape != (n, n):
            raise ValidationError(f"block shapes disagree: group1 {g1.shape}, link1 {m}, "
                                  f"group2 {g2.shape}, link2 {n}")
        if not (np.allclose(g1, g1.T) and np.allclose(g2, g2.T)):
            raise ValidationError("group blocks must be symmetric")
        known = np.concatenate([g1.ravel(), g2.ravel(), l1, l2, [self.hub]])
        if np.any(known < 0) or not np.all(np.isfinite(known)):
            raise ValidationError("known delays must be finite and non-negative")
        for name, val in (("group1", g1), ("group2", g2), ("link1", l1), ("link2", l2)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "hub", float(self.hub))

    @property
    def m(self) -> int:
        return len(self.link1)

    @property
    def n(self) -> int:
        return len(self.link2)

    @property
    def size(self) -> int:
        return self.m + 1 + self.n

    @classmethod
    def from_matrix(cls, full, m: int) -> "PartialDelayMatrix":
        """Split a full (m+1+n) square matrix; its unknown block is discarded."""
        full = np.asarray(full, dtype=float)
        return cls(full[:m, :m], full[:m, m], full[m, m], full[m + 1:, m], full[m + 1:, m + 1:])

    def assemble(self, block) -> np.ndarray:
        """Full matrix with ``block`` (and its transpose) in the unknown places."""
        m, n = self.m, self.n
        block = np.asarray(block, dtype=float).reshape(m, n)
        full = np.empty((self.size, self.size))
        full[:m, :m] = self.group1
        full[:m, m] = full[m, :m] = self.link1
        full[m, m] = self.hub
        full[m + 1:, m] = full[m, m + 1:] = self.link2
        full[m + 1:, m + 1:] = self.group2
        full[:m, m + 1:] = block
        full[m + 1:, :m] = block.T
        return full

    def known_mask(self) -> np.ndarray:
        m = self.m
        mask = np.ones((self.size, self.size), dtype=bool)
        mask[:m, m + 1:] = False
        mask[m + 1:, :m] = False
        return mask


@dataclass(frozen=True)
class DNResult:
    block: np.ndarray
    row_scale: np.ndarray
    col_scale: np.ndarray
    iterations: int
    residual: float
    mode: str

    @property
    def outer(self) -> np.ndarray:
        return np.outer(self.row_scale, self.col_scale)


def fit_rank_one(expected, tol: float = DN_TOL, max_iter: int = DN_MAX_ITER):
    """Alternating least squares for ``expected ~ outer(rows, cols)``.

    Each sweep sets ``rows = expected @ cols / |cols|^2`` then
    ``cols = expected.T @ rows / |rows|^2``, starting from ``cols = 1/sqrt(n)``.
    Returns ``(rows, cols, iterations, residual)`` with the relative
    Frobenius residual of the product.
    """
    expected = np.asarray(expected, dtype=float)
    if expected.ndim != 2:
        raise ValueError("expected-delay matrix must be 2-D")
    norm_exp = np.linalg.norm(expected)
    if norm_exp == 0:
        raise DegenerateInputError("expected-delay matrix is zero")
    n = expected.shape[1]
    col_scale = np.full(n, 1.0 / np.sqrt(n))
    row_scale = np.zeros(expected.shape[0])
    for it in range(1, max_iter + 1):
        cc = col_scale @ col_scale
        if cc == 0:
            raise DegenerateInputError("column scaling collapsed to zero")
        rows_new = expected @ col_scale / cc
        rr = rows_new @ rows_new
        if rr == 0:
            raise DegenerateInputError("row scaling collapsed to zero")
        cols_new = expected.T @ rows_new / rr
        change = max(np.linalg.norm(rows_new - row_scale) / np.linalg.norm(rows_new),
                     np.linalg.norm(cols_new - col_scale) / max(np.linalg.norm(cols_new), 1e-300))
        row_scale, col_scale = rows_new, cols_new
        if change < tol:
            resid = np.linalg.norm(np.outer(row_scale, col_scale) - expected) / norm_exp
            return row_scale, col_scale, it, float(resid)
    resid = float(np.linalg.norm(np.outer(row_scale, col_scale) - expected) / norm_exp)
    raise ConvergenceError(f"rank-one fit did not converge in {max_iter} iterations "
                           f"(residual {resid:.3g})", resid)


def dn_complete(p: PartialDelayMatrix, expected, tol: float = DN_TOL, max_iter: int = DN_MAX_ITER,
                mode: str = "literal") -> DNResult:
    """Fill the unknown block from the expected delays ``expected`` (m x n).

    ``mode="literal"`` fits the scalings to ``expected`` itself and returns
    ``row_i link1_i link2_j col_j``.  ``mode="normalized"`` fits to
    ``expected_ij / (link1_i link2_j)`` instead, so the completed block
    approximates ``expected`` in its own units.
    """
    expected = np.asarray(expected, dtype=float)
    if expected.shape != (p.m, p.n):
        raise ValueError(f"expected must be {p.m}x{p.n}, got {expected.shape}")
    if np.any(expected < 0):
        raise ValueError("expected delays must be non-negative")
    if not (np.all(p.link1 > 0) and np.all(p.link2 > 0)):
        raise DegenerateInputError("hub links must be strictly positive")
    links = np.outer(p.link1, p.link2)
    if mode == "literal":
        target = expected
    elif mode == "normalized":
        target = expected / links
    else:
        raise ValueError(f"unknown mode {mode!r}")
    row_scale, col_scale, its, resid = fit_rank_one(target, tol, max_iter)
    block = row_scale[:, None] * links * col_scale[None, :]
    return DNResult(block, row_scale, col_scale, its, resid, mode)


def condition_number(cov) -> float:
    w = np.linalg.eigvalsh(np.asarray(cov, dtype=float))
    if w[0] <= 0:
        return np.inf
    return float(w[-1] / w[0])


def condition_check_and_load(p: PartialDelayMatrix, sample_cov, tol: float = 1e-6) -> PartialDelayMatrix:
    """Load the full matrix's diagonal until the shifted covariance has condition number below 2.

    The smallest sufficient shift is located by bisection to within ``tol``;
    the returned matrix records it in ``diagonal_load``.
    """
    cov = np.asarray(sample_cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise ValueError("sample covariance must be a symmetric matrix")
    w = np.linalg.eigvalsh(cov)
    lo_eig, hi_eig = w[0], w[-1]

    def cond(delta):
        den = lo_eig + delta
        return np.inf if den <= 0 else (hi_eig + delta) / den

    if cond(0.0) < 2.0:
        return p
    lo, hi = 0.0, max(1.0, abs(hi_eig))
    while not cond(hi) < 2.0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 0.5 * tol:
        mid = 0.5 * (lo + hi)
        if cond(mid) < 2.0:
            hi = mid
        else:
            lo = mid
    delta = hi
    # the bracket can end on the boundary itself; confirm on the shifted matrix
    eye = np.eye(len(cov))
    for _ in range(2):
        if condition_number(cov + delta * eye) < 2.0:
            break
        delta += 0.25 * tol
    return replace(p,
                   group1=p.group1 + delta * np.eye(p.m),
                   group2=p.group2 + delta * np.eye(p.n),
                   hub=p.hub + delta,
                   diagonal_load=p.diagonal_load + delta)


def observed_row_covariance(p: PartialDelayMatrix) -> np.ndarray:
    """Sample covariance across the fully observed rows ``[group1 | link1]``.

    Each of the m rows is one sample of the m+1 delays to the first group and
    the hub sensor.
    """
    rows = np.hstack([p.group1, p.link1[:, None]])
    if len(rows) < 2:
        return np.eye(rows.shape[1])
    return np.atleast_2d(np.cov(rows, rowvar=False))
