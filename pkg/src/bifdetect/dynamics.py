"""Parameterized vector fields, their flows, and reference linear dynamics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import (
    DatasetParseError,
    InvalidInputError,
    OrbitDivergenceError,
    UnsupportedSpectrumError,
)

#: Sup-norm radius beyond which an integration is declared divergent.
R_MAX = 10.0
#: Default central-difference step for :func:`jacobian_at`.
FD_STEP = 1e-6

MODEL_AWARE = "model-aware"
KOOPMAN = "koopman"


@dataclass(frozen=True, eq=False)
class ParamSystem:
    """A vector field ``f(x; alpha)`` with an equilibrium at the origin.

    ``field`` must accept states of shape ``(..., n)`` and a parameter
    vector of shape ``(q,)`` and return derivatives with the state's shape.

    ``jacobian`` is an optional analytic override ``(x, alpha) -> (n, n)``.
    ``kernel`` names a compiled right-hand side (``("pitchfork",)`` or
    ``("linear", A)``) so batch integration can bypass Python callbacks.
    """

    n: int
    q: int
    field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    kernel: Optional[tuple] = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.q < 1:
            raise InvalidInputError("state and parameter dimensions must be positive")


@dataclass(frozen=True, eq=False)
class TargetLinearDynamics:
    """Reference linear system: generator ``A`` and its ``tau``-step map ``Abar``."""

    A: np.ndarray
    Abar: np.ndarray
    tau: float
    provenance: str
    alpha0: Optional[float] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidInputError("tau must be positive")
        if self.provenance not in (MODEL_AWARE, KOOPMAN):
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        for name in ("A", "Abar"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_generator(cls, A, tau, provenance, alpha0=None):
        A = np.asarray(A, dtype=float)
        return cls(A, matrix_exp(A, tau), float(tau), provenance, alpha0)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class ResonanceReport:
    eigenvalues: tuple
    max_order: int
    C: float
    nu: float
    violations: tuple  # of (k, m, gap), k zero-based

    @property
    def ok(self):
        return not self.violations


def _as_param(sys, alpha):
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape != (sys.q,):
        raise InvalidInputError(f"{sys.name}: expected {sys.q} parameter(s), got shape {a.shape}")
    return a


def _as_state(sys, x):
    v = np.asarray(x, dtype=float)
    if v.shape != (sys.n,):
        raise InvalidInputError(f"{sys.name}: expected state of length {sys.n}, got shape {v.shape}")
    return v


def eval_field(sys: ParamSystem, x, alpha) -> np.ndarray:
    """Evaluate ``f(x; alpha)`` for a single state."""
    v = _as_state(sys, x)
    a = _as_param(sys, alpha)
    out = np.asarray(sys.field(v, a), dtype=float)
    if out.shape != (sys.n,):
        raise InvalidInputError(f"{sys.name}: field returned shape {out.shape}")
    return out


def _step_count(t, step):
    if t < 0:
        raise InvalidInputError("integration time must be nonnegative")
    if t == 0:
        return 0, 0.0
    if step is None:
        step = t / 100.0
    if not step > 0:
        raise InvalidInputError("integrator step must be positive")
    if step > t * (1 + 1e-12):
        raise InvalidInputError(f"integrator step {step} exceeds duration {t}")
    nsteps = max(1, math.ceil(t / step - 1e-9))
    return nsteps, t / nsteps


def _integrate(sys, X, alpha, h, nsteps, r_max):
    if sys.kernel is not None and sys.kernel[0] == "pitchfork":
        out, bad, at = kernels.rk4_pitchfork(X, alpha[0], h, nsteps, r_max)
    elif sys.kernel is not None and sys.kernel[0] == "linear":
        out, bad, at = kernels.rk4_linear(X, sys.kernel[1], h, nsteps, r_max)
    else:
        out, bad, at = kernels.rk4_loop(lambda x: sys.field(x, alpha), X, h, nsteps, r_max)
    if bad >= 0:
        raise OrbitDivergenceError(at * h, orbit=int(bad))
    return out


def flow_batch(sys: ParamSystem, X0, alpha, t: float, step: float | None = None,
               r_max: float = R_MAX) -> np.ndarray:
    """RK4 flow map applied to each row of ``X0`` (shape ``(m, n)``).

    Raises :class:`OrbitDivergenceError` carrying the first offending row.
    """
    X = np.array(X0, dtype=float, ndmin=2)
    if X.shape[1] != sys.n:
        raise InvalidInputError(f"{sys.name}: states must have {sys.n} columns")
    a = _as_param(sys, alpha)
    nsteps, h = _step_count(float(t), step)
    bad = ~(np.abs(X).max(axis=1) <= r_max)
    if bad.any():
        raise OrbitDivergenceError(0.0, orbit=int(np.argmax(bad)))
    if nsteps == 0:
        return X
    return _integrate(sys, X, a, h, nsteps, r_max)


def flow(sys: ParamSystem, x0, alpha, t: float, step: float | None = None,
         r_max: float = R_MAX) -> np.ndarray:
    """Fixed-step RK4 approximation of the time-``t`` flow from ``x0``.

    ``step`` is the largest allowed internal step; the actual step is
    ``t / ceil(t / step)`` so the integration lands exactly on ``t``.
    Defaults to ``t / 100``.
    """
    x = _as_state(sys, x0)
    try:
        return flow_batch(sys, x[None, :], alpha, t, step, r_max)[0]
    except OrbitDivergenceError as exc:
        raise OrbitDivergenceError(exc.time) from None


def jacobian_at(sys: ParamSystem, x, alpha, h: float = FD_STEP) -> np.ndarray:
    """Jacobian of the field at ``x``; central differences unless the system
    supplies an analytic one."""
    if not h > 0:
        raise InvalidInputError("finite-difference step must be positive")
    v = _as_state(sys, x)
    a = _as_param(sys, alpha)
    if sys.jacobian is not None:
        return np.asarray(sys.jacobian(v, a), dtype=float)
    J = np.empty((sys.n, sys.n))
    for j in range(sys.n):
        e = np.zeros(sys.n)
        e[j] = h
        J[:, j] = (eval_field(sys, v + e, a) - eval_field(sys, v - e, a)) / (2.0 * h)
    return J


def real_spectrum(J) -> np.ndarray:
    """Real, simple eigenvalues of ``J`` in ascending order.

    2x2 matrices use the closed-form quadratic. Raises
    :class:`UnsupportedSpectrumError` for complex or repeated eigenvalues.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    scale = max(1.0, float(np.abs(J).max()))
    if n == 1:
        return J.reshape(1).copy()
    if n == 2:
        half_tr = 0.5 * (J[0, 0] + J[1, 1])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        disc = half_tr * half_tr - det
        if abs(disc) <= 1e-20 * scale * scale:
            raise UnsupportedSpectrumError("repeated eigenvalue")
        if disc < 0:
            raise UnsupportedSpectrumError("complex-conjugate eigenvalue pair")
        r = math.sqrt(disc)
        # avoid cancellation in the smaller-magnitude root
        big = half_tr + math.copysign(r, half_tr) if half_tr != 0 else r
        small = det / big if big != 0 else -r
        return np.sort(np.array([big, small]))
    eig = np.linalg.eigvals(J)
    if np.any(np.abs(eig.imag) > 1e-10 * scale):
        raise UnsupportedSpectrumError("complex eigenvalues")
    eig = np.sort(eig.real)
    if np.any(np.diff(eig) <= 1e-10 * scale):
        raise UnsupportedSpectrumError("repeated eigenvalue")
    return eig


def linearize_diag(sys: ParamSystem, alpha0, tau: float) -> TargetLinearDynamics:
    """Model-aware reference: diagonal of the sorted Jacobian spectrum at the origin."""
    J = jacobian_at(sys, np.zeros(sys.n), alpha0)
    eig = real_spectrum(J)
    a0 = np.atleast_1d(np.asarray(alpha0, dtype=float))
    return TargetLinearDynamics.from_generator(
        np.diag(eig), tau, MODEL_AWARE, float(a0[0]) if a0.size == 1 else None
    )


# Pade coefficients and 1-norm thresholds for scaling and squaring
# (Higham, SIAM J. Matrix Anal. Appl. 26, 2005).
_PADE = {
    3: (1.495585217958292e-2, (120.0, 60.0, 12.0, 1.0)),
    5: (2.539398330063230e-1, (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0)),
    7: (9.504178996162932e-1,
        (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0)),
    9: (2.097847961257068e0,
        (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
         2162160.0, 110880.0, 3960.0, 90.0, 1.0)),
}
_THETA13 = 5.371920351148152
_B13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
        33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0)


def _pade_low(X, b):
    n = X.shape[0]
    ident = np.eye(n)
    X2 = X @ X
    powers = [ident]
    for _ in range(len(b) // 2 - 1):
        powers.append(powers[-1] @ X2)
    U = sum(b[2 * j + 1] * powers[j] for j in range(len(powers)))
    V = sum(b[2 * j] * powers[j] for j in range(len(powers)))
    return X @ U, V


def _pade13(X):
    b = _B13
    ident = np.eye(X.shape[0])
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident)
    return U, V


def matrix_exp(A, t: float = 1.0) -> np.ndarray:
    """``exp(A t)`` by Pade scaling and squaring."""
    X = np.asarray(A, dtype=float) * float(t)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise InvalidInputError("matrix_exp needs a square matrix")
    norm = np.linalg.norm(X, 1)
    for m in (3, 5, 7, 9):
        theta, b = _PADE[m]
        if norm <= theta:
            U, V = _pade_low(X, b)
            return np.linalg.solve(V - U, V + U)
    s = max(0, math.ceil(math.log2(norm / _THETA13)))
    U, V = _pade13(X / 2.0 ** s)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def _multi_indices(n, total):
    """All length-``n`` nonnegative integer tuples summing to ``total``."""
    for cut in itertools.combinations(range(total + n - 1), n - 1):
        prev = -1
        parts = []
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(total + n - 1 - prev - 1)
        yield tuple(parts)


def resonance_check(eigs, max_order: int, C: float, nu: float) -> ResonanceReport:
    """Enumerate multi-indices of order 2..max_order and report where
    ``|lambda_k - sum m_r lambda_r| < C |m|^(-nu)``."""
    if max_order < 2:
        raise InvalidInputError("max_order must be at least 2")
    lam = np.asarray(eigs, dtype=complex)
    violations = []
    for order in range(2, max_order + 1):
        bound = C * order ** (-nu)
        for m in _multi_indices(len(lam), order):
            combo = np.dot(m, lam)
            for k, lk in enumerate(lam):
                gap = abs(lk - combo)
                if gap < bound:
                    violations.append((k, m, float(gap)))
    return ResonanceReport(tuple(complex(v) if v.imag else float(v.real) for v in lam),
                           max_order, float(C), float(nu), tuple(violations))


def save_target(target: TargetLinearDynamics, path) -> None:
    """Write ``A`` (row-major), ``tau``, ``provenance`` and ``alpha0`` as ``key=value``."""
    A = ",".join(format(float(v), ".17g") for v in target.A.ravel())
    a0 = "" if target.alpha0 is None else format(float(target.alpha0), ".17g")
    with open(path, "w") as fh:
        fh.write(f"A={A}\ntau={format(target.tau, '.17g')}\n"
                 f"provenance={target.provenance}\nalpha0={a0}\n")


def load_target(path) -> TargetLinearDynamics:
    from .sampling import read_key_values  # sampling imports this module

    kv = read_key_values(path)
    missing = [k for k in ("A", "tau", "provenance") if k not in kv]
    if missing:
        raise DatasetParseError(f"target file missing keys {missing}")
    try:
        vals = [float(v) for v in kv["A"].split(",")]
        tau = float(kv["tau"])
        a0 = float(kv["alpha0"]) if kv.get("alpha0") else None
    except ValueError as exc:
        raise DatasetParseError(f"bad target value: {exc}") from None
    n = int(round(math.sqrt(len(vals))))
    if n * n != len(vals) or n == 0:
        raise DatasetParseError("A must hold a square matrix")
    return TargetLinearDynamics.from_generator(np.reshape(vals, (n, n)), tau,
                                               kv["provenance"], a0)
