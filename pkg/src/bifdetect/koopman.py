"""Koopman eigenfunction identification by eigenvalue sweep.

For a candidate eigenvalue ``lam`` the eigenfunction ``psi = xi^T phi`` must
satisfy ``psi(x_k) = exp(lam tau) psi(x_{k-1})`` along every orbit.  Stacking
these conditions gives a matrix ``D(lam)`` whose smallest right singular
vector is the best unit-norm ``xi``; the smallest singular value (divided by
``sqrt(M P)``) is the RMSE.  Local minima of the RMSE over a grid of ``lam``
locate eigenvalues.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import PolyBasis
from .dynamics import KOOPMAN, TargetLinearDynamics
from .errors import InvalidInputError, SpectrumIdentificationError
from .sampling import OrbitDataset


@dataclass(frozen=True, eq=False)
class KoopmanScan:
    lambdas: np.ndarray
    rmse: np.ndarray
    coeffs: np.ndarray  # (len(lambdas), N), unit rows
    minima: tuple
    tau: float

    @property
    def minima_lambdas(self) -> np.ndarray:
        return self.lambdas[list(self.minima)]

    def to_csv(self, path) -> None:
        mins = set(self.minima)
        with open(path, "w") as fh:
            fh.write("lambda,rmse,is_min\n")
            for j, (lam, r) in enumerate(zip(self.lambdas, self.rmse)):
                fh.write(f"{float(lam)!r},{float(r)!r},{int(j in mins)}\n")


@dataclass(frozen=True, eq=False)
class EigenfunctionGrid:
    """``values[i, j] = psi(xs[i], ys[j])``."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x1,x2,psi\n")
            for i, x in enumerate(self.xs):
                for j, y in enumerate(self.ys):
                    fh.write(f"{float(x)!r},{float(y)!r},{float(self.values[i, j])!r}\n")


def _features(ds: OrbitDataset, b: PolyBasis):
    if b.n != ds.n:
        raise InvalidInputError("basis and dataset dimensions disagree")
    return b.eval(ds.states)  # (M, P+1, N)


def _dmatrix(F, lam, tau):
    return (F[:, 1:] - math.exp(lam * tau) * F[:, :-1]).reshape(-1, F.shape[-1])


def dmatrix(ds: OrbitDataset, b: PolyBasis, lam: float) -> np.ndarray:
    """Rows ``phi(x_k) - exp(lam tau) phi(x_{k-1})``; shape ``(M P, N)``."""
    return _dmatrix(_features(ds, b), lam, ds.tau)


def _smallest(D):
    _, s, vt = np.linalg.svd(D, full_matrices=False)
    xi = vt[-1]
    if xi[np.argmax(np.abs(xi))] < 0:
        xi = -xi
    return xi, s[-1] if s.size == D.shape[1] else 0.0


def _solve(F, lam, tau, sparse):
    D = _dmatrix(F, lam, tau)
    xi, sigma = _smallest(D)
    if sparse:
        keep = np.abs(xi) >= 0.01 * np.abs(xi).max()
        sub, sigma = _smallest(D[:, keep])
        xi = np.zeros_like(xi)
        xi[keep] = sub
    return xi, sigma / math.sqrt(D.shape[0])


def eigenfunction_at(ds: OrbitDataset, b: PolyBasis, lam: float, sparse: bool = False):
    """Best unit-norm eigenfunction coefficients at ``lam`` and their RMSE.

    With ``sparse=True`` coefficients below 1% of the largest are dropped and
    the problem is re-solved on the remaining support.
    """
    if ds.M * ds.P < b.N:
        warnings.warn(f"only {ds.M * ds.P} equations for {b.N} unknowns; rmse may be trivially 0",
                      stacklevel=2)
    return _solve(_features(ds, b), lam, ds.tau, sparse)


def _local_minima(r):
    return tuple(j for j in range(1, len(r) - 1) if r[j] < r[j - 1] and r[j] < r[j + 1])


def scan(ds: OrbitDataset, b: PolyBasis, lambda_lo: float = -5.0, lambda_hi: float = -0.1,
         steps: int = 491, sparse: bool = False) -> KoopmanScan:
    """Evaluate :func:`eigenfunction_at` on a uniform grid of ``steps`` points."""
    if not lambda_lo < lambda_hi:
        raise InvalidInputError("lambda_lo must be below lambda_hi")
    if steps < 3:
        raise InvalidInputError("need at least 3 grid points")
    if ds.M * ds.P < b.N:
        warnings.warn(f"only {ds.M * ds.P} equations for {b.N} unknowns", stacklevel=2)
    F = _features(ds, b)
    # rounding keeps grid values such as -0.11 free of representation noise
    lambdas = np.round(np.linspace(lambda_lo, lambda_hi, steps), 12)
    coeffs = np.empty((steps, b.N))
    rmse = np.empty(steps)
    for j, lam in enumerate(lambdas):
        coeffs[j], rmse[j] = _solve(F, lam, ds.tau, sparse)
    return KoopmanScan(lambdas, rmse, coeffs, _local_minima(rmse), ds.tau)


def select_pair(sc: KoopmanScan, alpha0: Optional[float] = None) -> TargetLinearDynamics:
    """Reference dynamics from the outermost two RMSE minima."""
    if len(sc.minima) < 2:
        raise SpectrumIdentificationError(
            f"need at least 2 local minima of the RMSE, found {len(sc.minima)}")
    lam = sc.minima_lambdas
    return TargetLinearDynamics.from_generator(np.diag([lam.min(), lam.max()]), sc.tau,
                                               KOOPMAN, alpha0)


def pair_coefficients(sc: KoopmanScan):
    """Eigenfunction coefficients at the two outermost minima (low, high)."""
    if len(sc.minima) < 2:
        raise SpectrumIdentificationError("need at least 2 local minima")
    return sc.coeffs[sc.minima[0]], sc.coeffs[sc.minima[-1]]


def eval_eigenfunction(xi, b: PolyBasis, xs, ys) -> EigenfunctionGrid:
    """Tabulate ``psi = xi^T phi`` on the tensor grid ``xs x ys`` (planar only)."""
    if b.n != 2:
        raise InvalidInputError("grid export is only supported for n = 2")
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    return EigenfunctionGrid(xs, ys, b.eval(pts) @ np.asarray(xi, dtype=float))
