"""Bifurcation detection by sweeping the system parameter.

A reference linear system is fixed once (at ``alpha0``). For every ``alpha``
on a grid and every horizon ``P`` the conjugacy fit is repeated on fresh data
from the same initial points, and the scaled loss ``L*^2`` is recorded. Loss
of conjugacy shows up as a jump of ``L*^2`` above its baseline level.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import PolyBasis
from .conjugacy import FitOptions, assemble, fit
from .dynamics import ParamSystem, TargetLinearDynamics
from .errors import BifDetectError, DatasetParseError, InvalidInputError
from .parallel import run_tasks
from .sampling import generate_dataset, sample_initial
from .tuning import MU_GRID, select_mu

DETECT_HEADER = "alpha,P,mu_star,L2,mse_numerator,denominator,flag,status"
DEFAULT_KAPPA = 10.0

_CELL_ERRORS = (BifDetectError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(eq=False)
class DetectionCurve:
    """Per-cell results indexed ``[alpha, P]``; failed cells hold NaN.

    ``numerator`` and ``denominator`` are the two factors of ``L*``
    (RMS residual and mean absolute Jacobian determinant). ``causes`` keeps
    the failure message of each failed cell.
    """

    alphas: np.ndarray
    P_list: tuple
    L2: np.ndarray
    mu_star: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    failed: np.ndarray
    target_provenance: str = ""
    baseline_alpha: Optional[float] = None
    flags: Optional[np.ndarray] = None
    majority: Optional[np.ndarray] = None
    causes: Optional[dict] = None

    def __post_init__(self):
        A, nP = len(self.alphas), len(self.P_list)
        for name in ("L2", "mu_star", "numerator", "denominator", "failed"):
            if np.shape(getattr(self, name)) != (A, nP):
                raise InvalidInputError(f"{name} must have shape {(A, nP)}")
        if self.causes is None:
            self.causes = {}

    def column(self, P) -> np.ndarray:
        """``L*^2`` over alpha at horizon ``P``."""
        return self.L2[:, self.P_list.index(P)]

    def flagged_alphas(self) -> list:
        if self.majority is None:
            return []
        return [float(a) for a, f in zip(self.alphas, self.majority) if f]


def _cell(sys, alpha, inits, P, tau, step, b, target, beta, mu_grid, frozen_mu, opts):
    """Returns ``(mu, L2, numerator, denominator, cause)``."""
    try:
        ds = generate_dataset(sys, alpha, inits, P, tau, step)
        data = assemble(ds, b, target)
        if frozen_mu is None:
            mu, res, _ = select_mu(data, beta, mu_grid, opts)
        else:
            mu, res = frozen_mu, fit(data, beta, frozen_mu, opts=opts)
            if not res.feasible:
                raise ArithmeticError("fit ended infeasible")
    except _CELL_ERRORS as exc:
        return math.nan, math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}"
    return mu, res.L2, res.numerator, res.denom, None


def detect_curve(sys: ParamSystem, alpha_grid, target: TargetLinearDynamics, b: PolyBasis,
                 beta: float = 1e-4, mu_grid=MU_GRID, P_list=(25,), M: int = 100,
                 box=((-1.0, 1.0), (-1.0, 1.0)), seed: int = 0, *, step=None,
                 frozen_mu: Optional[float] = None, kappa: float = DEFAULT_KAPPA,
                 opts: Optional[FitOptions] = None, jobs=1) -> DetectionCurve:
    """Sweep ``alpha_grid`` against a fixed reference ``target``.

    One set of ``M`` initial points (drawn once from ``seed``) is shared by all
    cells. Each ``(alpha, P)`` cell re-selects ``mu`` on ``mu_grid`` unless
    ``frozen_mu`` is given. A cell that fails (for instance an orbit leaving
    the divergence guard) is recorded as failed and the sweep goes on.
    """
    alphas = np.array(alpha_grid, dtype=float).ravel()
    if alphas.size == 0:
        raise InvalidInputError("empty alpha grid")
    P_list = tuple(int(p) for p in P_list)
    if not P_list or min(P_list) < 1:
        raise InvalidInputError("P_list must hold positive horizons")
    if target.n != sys.n:
        raise InvalidInputError("target and system dimensions disagree")
    inits = sample_initial(box, M, seed)
    tasks = [(sys, a, inits, P, target.tau, step, b, target, beta, tuple(mu_grid), frozen_mu,
              opts) for a in alphas for P in P_list]
    out = run_tasks(_cell, tasks, jobs)
    shape = (alphas.size, len(P_list))
    cols = np.array([o[:4] for o in out], dtype=float).reshape(shape + (4,))
    causes = {}
    for j, o in enumerate(out):
        if o[4] is not None:
            causes[divmod(j, len(P_list))] = o[4]
    failed = np.zeros(shape, dtype=bool)
    for key in causes:
        failed[key] = True
    curve = DetectionCurve(alphas, P_list, cols[..., 1], cols[..., 0], cols[..., 2],
                           cols[..., 3], failed, target.provenance, target.alpha0,
                           causes=causes)
    flag_bifurcation(curve, kappa)
    return curve


def baseline_mask(alphas, alpha0) -> np.ndarray:
    """The half of the grid lying on ``alpha0``'s side (the whole grid if
    there is a single point)."""
    alphas = np.asarray(alphas, dtype=float)
    order = np.argsort(alphas, kind="stable")
    half = max(1, (alphas.size + 1) // 2)
    if alpha0 is None:
        alpha0 = alphas[order[0]]
    mid = 0.5 * (alphas.min() + alphas.max())
    pick = order[:half] if alpha0 <= mid else order[-half:]
    mask = np.zeros(alphas.size, dtype=bool)
    mask[pick] = True
    return mask


def flag_bifurcation(curve: DetectionCurve, kappa: float = DEFAULT_KAPPA):
    """Flag ``alpha`` where ``L*^2 > kappa * median(baseline L*^2)``.

    Flags are set per horizon and combined by strict majority over ``P``.
    The result is stored on the curve and returned as ``(flags, majority)``.
    """
    if not kappa > 0:
        raise InvalidInputError("kappa must be positive")
    L2 = curve.L2
    flags = np.zeros(L2.shape, dtype=bool)
    if np.all(~np.isfinite(L2)):
        warnings.warn("every cell of the curve failed; nothing to flag", stacklevel=2)
    else:
        base = baseline_mask(curve.alphas, curve.baseline_alpha)
        for j in range(L2.shape[1]):
            ref = L2[base, j]
            ref = ref[np.isfinite(ref)]
            if ref.size == 0:
                continue
            level = kappa * float(np.median(ref))
            col = L2[:, j]
            flags[:, j] = np.isfinite(col) & (col > level)
    majority = flags.sum(axis=1) * 2 > L2.shape[1]
    curve.flags, curve.majority = flags, majority
    return flags, majority


def _num(v) -> str:
    return repr(float(v)) if math.isfinite(v) else ""


def export_curve(curve: DetectionCurve, path) -> None:
    """One CSV row per ``(alpha, P)`` cell, alpha-major."""
    flags = curve.flags if curve.flags is not None else np.zeros(curve.L2.shape, dtype=bool)
    with open(path, "w") as fh:
        fh.write(DETECT_HEADER + "\n")
        for i, a in enumerate(curve.alphas):
            for j, P in enumerate(curve.P_list):
                status = "failed" if curve.failed[i, j] else "ok"
                fh.write(",".join([repr(float(a)), str(P), _num(curve.mu_star[i, j]),
                                   _num(curve.L2[i, j]), _num(curve.numerator[i, j]),
                                   _num(curve.denominator[i, j]), str(int(flags[i, j])),
                                   status]) + "\n")


def read_curve(path, target_provenance: str = "", baseline_alpha=None) -> DetectionCurve:
    """Inverse of :func:`export_curve` (flags re-read, majority recomputed)."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != DETECT_HEADER:
            raise DatasetParseError("unexpected detection header", 1)
        rows = []
        for lineno, raw in enumerate(fh, 2):
            f = raw.rstrip("\n").split(",")
            if len(f) != 8:
                raise DatasetParseError(f"expected 8 fields, got {len(f)}", lineno)
            try:
                rows.append((float(f[0]), int(f[1]),
                             *(float(v) if v else math.nan for v in f[2:6]),
                             f[6] == "1", f[7]))
            except ValueError:
                raise DatasetParseError("non-numeric field", lineno) from None
    alphas = list(dict.fromkeys(r[0] for r in rows))
    P_list = tuple(dict.fromkeys(r[1] for r in rows))
    if len(rows) != len(alphas) * len(P_list):
        raise DatasetParseError("rows do not form a complete alpha x P table")
    shape = (len(alphas), len(P_list))
    vals = np.full(shape + (4,), math.nan)
    flags = np.zeros(shape, dtype=bool)
    failed = np.zeros(shape, dtype=bool)
    for r in rows:
        i, j = alphas.index(r[0]), P_list.index(r[1])
        vals[i, j] = r[2:6]
        flags[i, j] = r[6]
        failed[i, j] = r[7] != "ok"
    curve = DetectionCurve(np.array(alphas), P_list, vals[..., 1], vals[..., 0], vals[..., 2],
                           vals[..., 3], failed, target_provenance, baseline_alpha)
    curve.flags = flags
    curve.majority = flags.sum(axis=1) * 2 > len(P_list)
    return curve
