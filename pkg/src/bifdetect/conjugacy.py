"""Learning a polynomial conjugacy ``h(x) = Theta^T phi(x)`` to a linear map.

The objective over the ``N x n`` coefficient matrix ``Theta`` is::

    J(Theta) = 1/(2MP) sum_k ||Phi_k Theta - Phi_{k-1} Theta Abar^T||_F^2
             + beta/2 ||Theta||_F^2
             + mu/M sum_i max(0, -log det(Theta^T C_i + C_i^T Theta - I))

where ``Phi_k`` stacks the features of the ``k``-th state of every orbit and
``C_i`` is the feature Jacobian at the ``i``-th initial state.  It is convex
on the open set where every ``S_i = Theta^T C_i + C_i^T Theta - I`` is
positive definite and ``+inf`` elsewhere.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .basis import PolyBasis
from .dynamics import TargetLinearDynamics
from .errors import (
    ConfigurationError,
    DegenerateMapError,
    DomainError,
    InvalidInputError,
)
from .sampling import OrbitDataset

log = logging.getLogger(__name__)

#: Cholesky pivots at or below this value count as "not positive definite".
PD_FLOOR = 1e-12

TRACE_HEADER = "iter,objective,mse_term,reg_term,barrier_term,grad_norm,step_size"


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Feature matrices for one dataset against one target.

    ``Phi[k]`` is ``M x N`` (features of ``states[:, k]``), ``C[i]`` is
    ``N x n`` (feature Jacobian at ``states[i, 0]``).
    """

    Phi: np.ndarray
    C: np.ndarray
    Abar: np.ndarray

    def __post_init__(self):
        for name in ("Phi", "C", "Abar"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.Phi.shape[1] != self.C.shape[0] or self.Phi.shape[2] != self.C.shape[1]:
            raise InvalidInputError("Phi and C shapes disagree")
        object.__setattr__(self, "_flat", self.Phi.reshape(-1, self.N))

    @property
    def M(self):
        return self.Phi.shape[1]

    @cached_property
    def quad_hessian(self) -> np.ndarray:
        """Hessian of the matching term in row-major ``vec(Theta)`` order."""
        M, N, n = self.M, self.N, self.n
        X = self._flat[M:]
        Y = self._flat[:-M]
        Gxx, Gxy, Gyy = X.T @ X, X.T @ Y, Y.T @ Y
        A = self.Abar
        H = (np.einsum("bc,kl->kblc", np.eye(n), Gxx)
             - np.einsum("bc,kl->kblc", A, Gxy)
             - np.einsum("cb,kl->kblc", A, Gxy.T)
             + np.einsum("bc,kl->kblc", A.T @ A, Gyy))
        return H.reshape(N * n, N * n) / (M * self.P)

    @property
    def P(self):
        return self.Phi.shape[0] - 1

    @property
    def N(self):
        return self.Phi.shape[2]

    @property
    def n(self):
        return self.C.shape[2]


class ObjectiveValue(NamedTuple):
    value: float
    mse_term: float
    reg_term: float
    barrier_term: float


@dataclass
class FitResult:
    Theta: np.ndarray
    objective: float
    mse_term: float
    reg_term: float
    barrier_term: float
    L_mu: float
    denom: float
    iterations: int
    converged: bool
    feasible: bool
    beta: float = 0.0
    mu: float = 0.0
    history: list = field(default_factory=list, repr=False)
    trace: list = field(default_factory=list, repr=False)

    @property
    def L2(self) -> float:
        return self.L_mu ** 2

    @property
    def numerator(self) -> float:
        return self.L_mu * self.denom

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(TRACE_HEADER + "\n")
            for row in self.trace:
                fh.write(",".join(str(row[0]) if j == 0 else format(v, ".17g")
                                  for j, v in enumerate(row)) + "\n")


@dataclass
class FitOptions:
    """Solver controls.

    ``method``:

    ``"newton"`` (default)
        Path-following interior point on the epigraph form of the hinge. Each
        hinge ``max(0, -l_i)`` is replaced by ``min_t {t : t >= 0, t >= -l_i}``
        with log barriers of weight ``kappa``; the slack is eliminated in
        closed form, leaving a smooth convex function of ``Theta`` minimized
        by damped Newton. ``kappa`` shrinks tenfold until the barrier gap
        ``2 M kappa`` falls below ``rtol`` times the objective.
    ``"lbfgs"`` / ``"gd"``
        Descent on the objective itself with Armijo backtracking and the zero
        subgradient at hinge kinks. Accepted objective values never increase.
        These stall when many samples sit on a kink at once, which happens at
        the identity start once ``mu`` is large.

    Every method rejects trial points whose objective is not finite.
    """

    max_iters: int = 5000
    rtol: float = 1e-10
    gtol: float = 1e-8
    method: str = "newton"
    memory: int = 10
    c1: float = 1e-4
    max_backtracks: int = 60
    record_trace: bool = False


def assemble(ds: OrbitDataset, b: PolyBasis, target: TargetLinearDynamics) -> RegressionData:
    if b.n != ds.n or target.n != ds.n:
        raise ConfigurationError("dataset, basis and target dimensions disagree")
    if abs(target.tau - ds.tau) > 1e-12 * max(1.0, ds.tau):
        raise ConfigurationError(f"target tau={target.tau} but dataset tau={ds.tau}")
    states = ds.states.transpose(1, 0, 2)  # (P+1, M, n)
    return RegressionData(b.eval(states), b.jacobian(ds.states[:, 0]), target.Abar)


def _residual(Theta, data):
    Z = data._flat @ Theta
    M = data.M
    return Z[M:] - Z[:-M] @ data.Abar.T


def _evaluate(Theta, data, beta, mu, need_grad):
    E = _residual(Theta, data)
    MP = data.M * data.P
    mse = float(np.vdot(E, E)) / (2.0 * MP)
    reg = 0.5 * beta * float(np.vdot(Theta, Theta))
    feasible, hinge, gbar, _ = kernels.barrier_terms(Theta, data.C, need_grad, PD_FLOOR)
    if not feasible:
        return ObjectiveValue(math.inf, mse, reg, math.inf), None
    barrier = mu * hinge / data.M
    grad = None
    if need_grad:
        M = data.M
        W = np.zeros((data._flat.shape[0], data.n))
        W[M:] += E
        W[:-M] -= E @ data.Abar
        grad = data._flat.T @ W / MP + beta * Theta
        if mu:
            grad += (mu / M) * gbar
    return ObjectiveValue(mse + reg + barrier, mse, reg, barrier), grad


def objective(Theta, data: RegressionData, beta: float, mu: float) -> ObjectiveValue:
    """``(value, mse_term, reg_term, barrier_term)``; ``value`` is ``inf`` when
    any surrogate matrix fails the Cholesky test."""
    if beta < 0 or mu < 0:
        raise InvalidInputError("beta and mu must be nonnegative")
    return _evaluate(np.asarray(Theta, dtype=float), data, beta, mu, False)[0]


def gradient(Theta, data: RegressionData, beta: float, mu: float) -> np.ndarray:
    """Gradient of the objective; hinge terms with ``det S_i >= 1`` contribute zero."""
    if beta < 0 or mu < 0:
        raise InvalidInputError("beta and mu must be nonnegative")
    val, grad = _evaluate(np.asarray(Theta, dtype=float), data, beta, mu, True)
    if grad is None:
        raise DomainError("gradient requested at an infeasible Theta")
    return grad


def jacobian_dets(Theta, data: RegressionData) -> np.ndarray:
    """``det(Theta^T C_i)`` for every sample."""
    return np.linalg.det(np.einsum("ka,ikb->iab", Theta, data.C))


def pushforward_measure(Theta, data: RegressionData) -> float:
    """Sample mean of ``|det dh/dx|`` at the initial states.

    For uniform sampling this estimates the volume ratio of ``h(X)`` to ``X``.
    """
    return float(np.mean(np.abs(jacobian_dets(np.asarray(Theta, dtype=float), data))))


def scaled_mse(Theta, data: RegressionData):
    """RMS matching residual divided by the mean absolute Jacobian determinant.

    Returns ``(L_mu, denom)``.
    """
    Theta = np.asarray(Theta, dtype=float)
    denom = pushforward_measure(Theta, data)
    if not denom > 0 or not math.isfinite(denom):
        raise DegenerateMapError(f"mean |det| of the learned map is {denom}")
    E = _residual(Theta, data)
    num = math.sqrt(float(np.vdot(E, E)) / (data.M * data.P))
    return num / denom, denom


def _slack_barrier(ell, a, kappa):
    """Closed-form ``min_t a t - kappa log t - kappa log(t + ell)`` and its
    first two derivatives in ``ell``."""
    al = a * ell
    r = np.sqrt(al * al + 4.0 * kappa * kappa)
    pos = al >= 0
    t = np.where(pos, 2 * kappa + 4 * kappa * kappa / (r + np.abs(al)), 2 * kappa - al + r) / (2 * a)
    u = np.where(pos, 2 * kappa + al + r, 2 * kappa + 4 * kappa * kappa / (r + np.abs(al))) / (2 * a)
    val = a * t - kappa * (np.log(t) + np.log(u))
    return val, -kappa / u, kappa / (u * u + t * t)


def _surrogates(Theta, data):
    T = np.einsum("ka,ikb->iab", Theta, data.C)
    S = T + T.transpose(0, 2, 1) - np.eye(data.n)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None
    diag = np.diagonal(L, axis1=1, axis2=2)
    if not np.all(diag * diag > PD_FLOOR):
        return None
    return L, 2.0 * np.log(diag).sum(axis=1)


def _smoothed(Theta, data, beta, a, kappa, order):
    """Barrier-smoothed objective; ``order`` 0, 1 or 2 selects value,
    gradient, Hessian. Returns ``None`` outside the domain."""
    sur = _surrogates(Theta, data)
    if sur is None:
        return None
    L, ell = sur
    E = _residual(Theta, data)
    MP = data.M * data.P
    g0, g1, g2 = _slack_barrier(ell, a, kappa)
    val = float(np.vdot(E, E)) / (2.0 * MP) + 0.5 * beta * float(np.vdot(Theta, Theta)) + float(g0.sum())
    if order == 0:
        return val, None, None
    M, N, n = data.M, data.N, data.n
    Linv = np.linalg.inv(L)
    W = Linv.transpose(0, 2, 1) @ Linv  # S_i^{-1}
    V = data.C @ W  # (M, N, n); gradient of log det S_i is 2 V_i
    Wq = np.zeros((data._flat.shape[0], n))
    Wq[M:] += E
    Wq[:-M] -= E @ data.Abar
    grad = data._flat.T @ Wq / MP + beta * Theta + 2.0 * np.einsum("i,ika->ka", g1, V)
    if order == 1:
        return val, grad, None
    Vf = V.reshape(M, N * n)
    H = data.quad_hessian + beta * np.eye(N * n)
    H += (Vf.T * (4.0 * g2)) @ Vf
    R = ((Vf.T * g1) @ Vf).reshape(N, n, N, n).transpose(0, 3, 2, 1)
    Q = np.einsum("ika,iab,ilb->ikl", data.C, W, data.C).reshape(M, N * N)
    K = ((Q.T * g1) @ W.reshape(M, n * n)).reshape(N, N, n, n).transpose(0, 2, 1, 3)
    H -= 2.0 * (R + K).reshape(N * n, N * n)
    return val, grad, H


def _fit_newton(x, data, beta, mu, opts):
    a = mu / data.M
    parts = _evaluate(x, data, beta, mu, False)[0]
    J0 = parts.value
    kappa = 0.1 * max(J0, 1e-300) / (2 * data.M)
    history = [J0]
    trace = []
    if opts.record_trace:
        trace.append((0, J0, parts.mse_term, parts.reg_term, parts.barrier_term, math.nan, 0.0))
    it = 0
    converged = False
    shape = x.shape
    while it < opts.max_iters:
        # centering for the current kappa
        while it < opts.max_iters:
            val, grad, H = _smoothed(x, data, beta, a, kappa, 2)
            g = grad.ravel()
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec2 = -float(g @ step)
            if not dec2 > 0 or 0.5 * dec2 <= 1e-3 * 2 * data.M * kappa:
                break
            t = 1.0
            for _ in range(opts.max_backtracks):
                trial = x + t * step.reshape(shape)
                tv = _smoothed(trial, data, beta, a, kappa, 0)
                if tv is not None and tv[0] <= val - 0.25 * t * dec2:
                    break
                t *= 0.5
            else:
                break
            x = trial
            it += 1
            parts = _evaluate(x, data, beta, mu, False)[0]
            history.append(parts.value)
            if opts.record_trace:
                trace.append((it, parts.value, parts.mse_term, parts.reg_term,
                              parts.barrier_term, float(np.linalg.norm(g)), t))
        parts = _evaluate(x, data, beta, mu, False)[0]
        if 2 * data.M * kappa <= opts.rtol * max(abs(parts.value), 1e-300):
            converged = True
            break
        kappa *= 0.1
    return x, parts, it, converged, history, trace


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.vdot(s, q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= np.vdot(s, y) / np.vdot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        bcoef = rho * np.vdot(y, q)
        q += (a - bcoef) * s
    return -q


def fit(data: RegressionData, beta: float, mu: float, init=None,
        opts: Optional[FitOptions] = None) -> FitResult:
    """Minimize the barrier objective from a feasible start.

    ``init`` defaults to the identity embedding, which is feasible for every
    dataset because all ``S_i`` equal ``I`` there.
    """
    opts = opts or FitOptions()
    if opts.method not in ("newton", "lbfgs", "gd"):
        raise InvalidInputError(f"unknown method {opts.method!r}")
    if init is None:
        x = np.zeros((data.N, data.n))
        x[: data.n] = np.eye(data.n)
    else:
        x = np.array(init, dtype=float)
        if x.shape != (data.N, data.n):
            raise InvalidInputError(f"init must have shape {(data.N, data.n)}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("init has non-finite entries")
    parts, g = _evaluate(x, data, beta, mu, True)
    if g is None:
        raise InvalidInputError("init is infeasible (some surrogate matrix is not positive definite)")
    if opts.method == "newton" and mu > 0:
        x, parts, it, converged, history, trace = _fit_newton(x, data, beta, mu, opts)
        return _result(x, data, parts, it, converged, beta, mu, history, trace)
    f = parts.value

    pairs = deque(maxlen=opts.memory)
    history = [f]
    trace = []
    if opts.record_trace:
        trace.append((0, f, parts.mse_term, parts.reg_term, parts.barrier_term,
                      float(np.linalg.norm(g)), 0.0))
    converged = False
    step = 1.0
    it = 0
    while it < opts.max_iters:
        gnorm = float(np.linalg.norm(g))
        if gnorm < opts.gtol:
            converged = True
            break
        if opts.method == "lbfgs" and pairs:
            d = _two_loop(g, pairs)
            slope = float(np.vdot(g, d))
            if not slope < 0:
                pairs.clear()
                d = -g
                slope = -gnorm * gnorm
            t = 1.0
        else:
            d = -g
            slope = -gnorm * gnorm
            t = min(1.0, 1.0 / gnorm) if opts.method == "lbfgs" else min(2.0 * step, 1e6)

        accepted = False
        for _ in range(opts.max_backtracks):
            trial = x + t * d
            tparts, _unused = _evaluate(trial, data, beta, mu, False)
            if math.isfinite(tparts.value) and tparts.value <= f + opts.c1 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if pairs:
                pairs.clear()
                continue
            # no decrease even along -g at rounding resolution: stationary to
            # working precision, which is the relative-decrease test with 0 change
            converged = True
            break

        it += 1
        tparts, g_new = _evaluate(trial, data, beta, mu, True)
        f_new = tparts.value
        s = (trial - x).ravel()
        y = (g_new - g).ravel()
        sy = float(np.vdot(s, y))
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s.reshape(x.shape), y.reshape(x.shape), 1.0 / sy))
        decrease = f - f_new
        x, g, f, parts, step = trial, g_new, f_new, tparts, t
        history.append(f)
        if opts.record_trace:
            trace.append((it, f, parts.mse_term, parts.reg_term, parts.barrier_term,
                          float(np.linalg.norm(g)), t))
        if decrease <= opts.rtol * max(abs(f), 1e-300):
            converged = True
            break

    return _result(x, data, parts, it, converged, beta, mu, history, trace)


def _result(x, data, parts, it, converged, beta, mu, history, trace):
    L, denom = scaled_mse(x, data)
    return FitResult(x, parts.value, parts.mse_term, parts.reg_term, parts.barrier_term,
                     L, denom, it, converged, math.isfinite(parts.barrier_term), beta, mu,
                     history, trace)
