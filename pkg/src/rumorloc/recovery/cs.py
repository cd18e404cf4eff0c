"""Compressed-sensing recovery of sporadically missing observations.

The observed entries are a row selection of the full vector, and the full
vector is assumed sparse in an orthonormal basis.  Missing entries come from
the minimum-l1 coefficient vector that reproduces the observed entries
exactly (basis pursuit), solved as a linear program.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from ..diffusion import ObservationVector
from ..errors import ConvergenceError, InfeasibleError, UnrecoverableError

log = logging.getLogger(__name__)

BP_TOL = 1e-8


@dataclass(frozen=True)
class SelectionMatrix:
    rows: int
    cols: int
    kept_indices: tuple[int, ...]

    @property
    def matrix(self) -> np.ndarray:
        sel = np.zeros((self.rows, self.cols))
        sel[np.arange(self.rows), list(self.kept_indices)] = 1.0
        return sel

    def __matmul__(self, other):
        # row selection without materialising sel
        return np.asarray(other)[list(self.kept_indices)]


def build_selection_matrix(mask) -> SelectionMatrix:
    mask = np.asarray(mask, dtype=bool)
    kept = np.flatnonzero(mask)
    if len(kept) == 0:
        raise UnrecoverableError("every entry is missing; nothing to recover from")
    return SelectionMatrix(len(kept), len(mask), tuple(kept.tolist()))


@dataclass(frozen=True)
class SparsifyingBasis:
    """Orthonormal synthesis matrix: ``signal = matrix @ coefficients``."""

    matrix: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("basis must be square")
        if not np.allclose(matrix.T @ matrix, np.eye(len(matrix)), atol=1e-10):
            raise ValueError("basis must be orthonormal")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @property
    def size(self) -> int:
        return len(self.matrix)


def dct_basis(size: int) -> SparsifyingBasis:
    """Orthonormal DCT-II; columns are the cosine atoms, column 0 is the constant."""
    if size < 1:
        raise ValueError("basis size must be >= 1")
    n = np.arange(size)
    atoms = np.sqrt(2.0 / size) * np.cos(np.pi * (2 * n[None, :] + 1) * n[:, None] / (2 * size))
    atoms[0] /= np.sqrt(2.0)
    return SparsifyingBasis(atoms.T, "dct")


def identity_basis(size: int) -> SparsifyingBasis:
    return SparsifyingBasis(np.eye(size), "identity")


def haar_basis(size: int) -> SparsifyingBasis:
    """Orthonormal Haar wavelet basis; ``size`` must be a power of two."""
    if size < 1 or size & (size - 1):
        raise ValueError("Haar basis needs a power-of-two size")
    haar = np.array([[1.0]])
    while len(haar) < size:
        top = np.kron(haar, [1.0, 1.0])
        bottom = np.kron(np.eye(len(haar)), [1.0, -1.0])
        haar = np.vstack([top, bottom]) / np.sqrt(2.0)
    return SparsifyingBasis(haar.T, "haar")


def pca_basis(samples) -> SparsifyingBasis:
    """Principal directions of example signals (rows of ``samples``), strongest first.

    Uncentred, so a common offset lands in the leading direction.  Directions
    the examples do not excite complete the basis in arbitrary order.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if not np.all(np.isfinite(samples)):
        raise ValueError("example signals must be finite")
    _, _, vt = np.linalg.svd(samples, full_matrices=True)
    # fix each direction's sign so the basis is reproducible
    flip = np.sign(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)])
    return SparsifyingBasis((vt * flip[:, None]).T, "pca")


BASES = {"dct": dct_basis, "identity": identity_basis, "haar": haar_basis}


def _independent_rows(sensing, target, tol):
    """Drop linearly dependent rows, failing if they disagree with the rest."""
    n_rows = sensing.shape[0]
    if n_rows == 0:
        return sensing, target
    _, R, piv = scipy.linalg.qr(sensing.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > max(sensing.shape) * np.finfo(float).eps * diag[0])) if diag.size else 0
    if rank == n_rows:
        return sensing, target
    keep = np.sort(piv[:rank])
    sol, *_ = np.linalg.lstsq(sensing[keep], target[keep], rcond=None)
    if np.max(np.abs(sensing @ sol - target)) > tol * max(1.0, np.max(np.abs(target))):
        raise InfeasibleError("measurement rows are inconsistent")
    return sensing[keep], target[keep]


def basis_pursuit(sensing, target, tol: float = BP_TOL, max_iter: int | None = None) -> np.ndarray:
    """Minimise ``||coef||_1`` subject to ``sensing @ coef == target``.

    Solved as an LP over ``coef = u - v`` with ``u, v >= 0``; the LP vertex is
    then re-solved exactly on its support so the equality residual sits at
    rounding level rather than at the LP solver's feasibility tolerance.
    """
    sensing = np.atleast_2d(np.asarray(sensing, dtype=float))
    target = np.asarray(target, dtype=float).ravel()
    n_rows, size = sensing.shape
    if len(target) != n_rows:
        raise ValueError("sensing and target disagree in length")
    if n_rows > size:
        raise ValueError("basis pursuit needs n_rows <= size")
    if not np.any(target):
        return np.zeros(size)
    sensing_r, target_r = _independent_rows(sensing, target, tol)

    cost = np.ones(2 * size)
    A_eq = np.hstack([sensing_r, -sensing_r])
    options = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    if max_iter is not None:
        options["maxiter"] = max_iter
    res = linprog(cost, A_eq=A_eq, b_eq=target_r, bounds=(0, None), method="highs", options=options)
    if res.status == 2:
        raise InfeasibleError("no coef satisfies sensing @ coef == target")
    if res.status == 1:
        resid = np.inf if res.x is None else float(np.max(np.abs(A_eq @ res.x - target_r)))
        raise ConvergenceError(f"basis pursuit hit the iteration cap (residual {resid:.3g})", resid)
    if res.status != 0:
        raise ConvergenceError(f"LP solver failed: {res.message}")
    coef = res.x[:size] - res.x[size:]

    scale = max(1.0, np.max(np.abs(coef)))
    support = np.flatnonzero(np.abs(coef) > 1e-10 * scale)
    if 0 < len(support) <= n_rows:
        z, *_ = np.linalg.lstsq(sensing[:, support], target, rcond=None)
        polished = np.zeros(size)
        polished[support] = z
        if (np.max(np.abs(sensing @ polished - target)) <= np.max(np.abs(sensing @ coef - target))
                and np.abs(polished).sum() <= np.abs(coef).sum() + tol):
            coef = polished
    gap = target - sensing @ coef
    if np.max(np.abs(gap)) > 0.1 * tol:
        # degenerate vertex: pull back onto the constraint set by the least-norm step
        step, *_ = np.linalg.lstsq(sensing, gap, rcond=None)
        coef = coef + step
    resid = float(np.max(np.abs(sensing @ coef - target)))
    if resid > tol * max(1.0, np.max(np.abs(target))):
        raise ConvergenceError(f"basis pursuit residual {resid:.3g} above tolerance", resid)
    return coef


def _looks_bursty(mask) -> bool:
    miss = np.flatnonzero(~mask)
    return len(miss) >= 3 and miss[-1] - miss[0] == len(miss) - 1


def cs_recover(obs: ObservationVector, basis: SparsifyingBasis | str = "dct",
               tol: float = BP_TOL) -> ObservationVector:
    """Fill missing entries from ``matrix @ best``; observed entries pass through untouched."""
    if obs.complete:
        return obs
    size = len(obs)
    if isinstance(basis, str):
        basis = BASES[basis](size)
    if basis.size != size:
        raise ValueError(f"basis size {basis.size} does not match vector length {size}")
    sel = build_selection_matrix(obs.mask)
    if _looks_bursty(obs.mask):
        log.warning("missing entries form one contiguous run; compressed sensing suits sporadic loss")
    sensing = sel @ basis.matrix
    target = sel @ obs.values
    coef = basis_pursuit(sensing, target, tol)
    estimate = basis.matrix @ coef
    values = obs.values.copy()
    values[~obs.mask] = estimate[~obs.mask]
    return obs.with_values(values)
