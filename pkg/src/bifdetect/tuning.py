"""Hyperparameter selection for the conjugacy fit.

* ``mu`` is picked a posteriori: fit along an ascending grid and keep the
  value with the smallest scaled MSE on the training data.
* ``beta`` (and the horizon ``P``) are judged by K-fold cross-validation over
  orbits, aggregating fold losses with a geometric mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .basis import PolyBasis
from .conjugacy import FitOptions, assemble, fit, scaled_mse
from .dynamics import TargetLinearDynamics
from .errors import BifDetectError, InvalidInputError, TuningError
from .parallel import run_tasks
from .sampling import OrbitDataset

MU_GRID = tuple(np.logspace(-6, 0, 13))
BETA_GRID = tuple(np.logspace(-8, -1, 15))
P_GRID = (5, 10, 15, 20, 25)
DEFAULT_K = 5
LOSS_FLOOR = 1e-300
SWEEPABLE = ("mu", "beta", "P")
TUNE_HEADER = "swept_name,value,mse_term,reg_term,train_L2,cv_L2,status"

# failures a single fit may raise without invalidating a whole sweep
_FIT_ERRORS = (BifDetectError, ArithmeticError, np.linalg.LinAlgError)


class TuneRow(NamedTuple):
    value: float
    mse_term: float
    reg_term: float
    train_L2: float
    cv_L2: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class TuneTable:
    """Rows sorted by the swept value. Failed rows carry NaN losses."""

    swept: str
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.value)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return self.column("value")

    def row_at(self, value, rtol=1e-9) -> TuneRow:
        for r in self.rows:
            if math.isclose(r.value, value, rel_tol=rtol):
                return r
        raise KeyError(value)

    def to_csv(self, path) -> None:
        def num(v):
            return "" if not math.isfinite(v) else repr(float(v))

        with open(path, "w") as fh:
            fh.write(TUNE_HEADER + "\n")
            for r in self.rows:
                value = str(int(r.value)) if self.swept == "P" else repr(float(r.value))
                fh.write(",".join([self.swept, value, num(r.mse_term), num(r.reg_term),
                                   num(r.train_L2), num(r.cv_L2), r.status]) + "\n")


def _status(exc) -> str:
    # keep the CSV single-field: no commas or newlines
    text = f"failed: {type(exc).__name__}: {exc}"
    return text.replace(",", ";").replace("\n", " ")


def kfold_split(ds, K: int, seed: int):
    """Shuffle orbit indices with ``seed`` and cut them into ``K`` folds.

    ``ds`` is an :class:`OrbitDataset` or an orbit count. Returns a list of
    ``(train, validation)`` index arrays; fold sizes differ by at most one.
    """
    M = ds if isinstance(ds, (int, np.integer)) else ds.M
    if K < 2:
        raise InvalidInputError("K must be at least 2")
    if K > M:
        raise InvalidInputError(f"cannot split {M} orbits into {K} folds")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(M)
    folds = np.array_split(perm, K)
    return [(np.sort(np.concatenate(folds[:j] + folds[j + 1:])), np.sort(f))
            for j, f in enumerate(folds)]


def select_mu(data, beta: float, mu_grid=MU_GRID, opts: Optional[FitOptions] = None,
              warm: bool = True):
    """Fit along ascending ``mu_grid`` and keep the smallest training ``L_mu``.

    Each fit starts from the previous solution when ``warm`` is set (feasibility
    does not depend on ``mu``, so the previous optimum is a valid start).
    Returns ``(mu_star, FitResult, TuneTable)``; ties go to the smaller ``mu``.
    """
    grid = sorted(float(m) for m in mu_grid)
    if not grid:
        raise InvalidInputError("empty mu grid")
    if grid[0] <= 0:
        raise InvalidInputError("mu values must be positive")
    rows, best = [], None
    init = None
    for mu in grid:
        try:
            res = fit(data, beta, mu, init=init, opts=opts)
            if not (res.feasible and math.isfinite(res.L_mu)):
                raise TuningError("fit ended infeasible or non-finite")
        except _FIT_ERRORS as exc:
            rows.append(TuneRow(mu, math.nan, math.nan, math.nan, math.nan, _status(exc)))
            continue
        rows.append(TuneRow(mu, res.mse_term, res.reg_term, res.L2, math.nan))
        if warm:
            init = res.Theta
        if best is None or res.L_mu < best[1].L_mu:
            best = (mu, res)
    table = TuneTable("mu", rows)
    if best is None:
        raise TuningError("every mu on the grid failed",
                          diagnostics=[(r.value, r.status) for r in rows])
    return best[0], best[1], table


def _fold_loss(ds, b, target, beta, mu, train, val, opts):
    try:
        res = fit(assemble(ds.subset(train), b, target), beta, mu, opts=opts)
        L, _ = scaled_mse(res.Theta, assemble(ds.subset(val), b, target))
    except _FIT_ERRORS as exc:
        return None, _status(exc)
    if not math.isfinite(L):
        return None, "failed: non-finite validation loss"
    return L, "ok"


def geometric_mean(values) -> float:
    v = np.maximum(np.asarray(values, dtype=float), LOSS_FLOOR)
    return float(np.exp(np.mean(np.log(v))))


def cv_loss(ds: OrbitDataset, b: PolyBasis, target: TargetLinearDynamics, beta: float,
            mu: float, K: int = DEFAULT_K, seed: int = 0, opts: Optional[FitOptions] = None,
            jobs=1, return_folds: bool = False):
    """Cross-validated ``L_mu``: geometric mean of per-fold validation losses.

    Both the residual and the determinant normalizer of a fold's loss are
    computed on its validation orbits. Failed folds are dropped from the mean;
    more than ``K / 2`` failures raise :class:`TuningError`.
    """
    folds = kfold_split(ds, K, seed)
    out = run_tasks(_fold_loss, [(ds, b, target, beta, mu, tr, va, opts) for tr, va in folds],
                    jobs)
    losses = [L for L, _ in out if L is not None]
    failed = [(j, s) for j, (L, s) in enumerate(out) if L is None]
    if len(failed) > K / 2:
        raise TuningError(f"{len(failed)} of {K} folds failed", diagnostics=failed)
    g = geometric_mean(losses)
    if return_folds:
        return g, [L for L, _ in out]
    return g


def _sweep_row(ds, b, target, which, value, beta, mu, K, seed, opts):
    if which == "beta":
        beta = value
    elif which == "mu":
        mu = value
    try:
        if which == "P":
            ds = ds.truncate(int(value))
        res = fit(assemble(ds, b, target), beta, mu, opts=opts)
        if not res.feasible:
            raise TuningError("fit ended infeasible")
        cv = cv_loss(ds, b, target, beta, mu, K, seed, opts)
    except _FIT_ERRORS as exc:
        return TuneRow(float(value), math.nan, math.nan, math.nan, math.nan, _status(exc))
    return TuneRow(float(value), res.mse_term, res.reg_term, res.L2, cv * cv)


def sweep(ds: OrbitDataset, b: PolyBasis, target: TargetLinearDynamics, which: str, grid,
          fixed: Optional[dict] = None, K: int = DEFAULT_K, seed: int = 0,
          opts: Optional[FitOptions] = None, jobs=1) -> TuneTable:
    """One row per grid value of ``which`` with the others held at ``fixed``.

    ``fixed`` supplies ``beta`` and ``mu`` (defaults ``1e-4`` and ``1e-3``).
    A ``P`` sweep truncates every orbit to its first ``P`` transitions. Rows
    whose fit fails are kept with a ``failed: ...`` status.
    """
    if which not in SWEEPABLE:
        raise InvalidInputError(f"cannot sweep {which!r}; choose one of {SWEEPABLE}")
    grid = list(grid)
    if not grid:
        raise InvalidInputError("empty sweep grid")
    fixed = dict(fixed or {})
    unknown = set(fixed) - {"beta", "mu"}
    if unknown:
        raise InvalidInputError(f"unknown fixed hyperparameters {sorted(unknown)}")
    beta = float(fixed.get("beta", 1e-4))
    mu = float(fixed.get("mu", 1e-3))
    tasks = [(ds, b, target, which, v, beta, mu, K, seed, opts) for v in grid]
    return TuneTable(which, run_tasks(_sweep_row, tasks, jobs))
