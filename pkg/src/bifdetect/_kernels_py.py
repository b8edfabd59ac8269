"""Pure numpy implementations of the hot kernels.

Signatures mirror the compiled ``_core`` module exactly so that
:mod:`bifdetect.kernels` can swap one for the other.
"""
import numpy as np

TWO_PI = 2.0 * np.pi


def rk4_loop(field, X, h, nsteps, rmax):
    """Advance a batch of states ``nsteps`` classical RK4 steps of size ``h``.

    ``field`` maps an ``(m, n)`` array to its ``(m, n)`` derivative.

    Returns
    -------
    out : ndarray, shape (m, n)
    fail_orbit : int
        Index of the first orbit that left the sup-norm ball of radius
        ``rmax`` (or became non-finite), ``-1`` if none did.
    fail_step : int
        1-based internal step at which that happened, ``-1`` if none.
    """
    x = np.array(X, dtype=float, copy=True)
    half = 0.5 * h
    sixth = h / 6.0
    for step in range(nsteps):
        k1 = field(x)
        k2 = field(x + half * k1)
        k3 = field(x + half * k2)
        k4 = field(x + h * k3)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bad = ~(np.abs(x).max(axis=1) <= rmax)
        if bad.any():
            return x, int(np.argmax(bad)), step + 1
    return x, -1, -1


def _pitchfork_field(alpha):
    def f(x):
        x1 = x[:, 0]
        x2 = x[:, 1]
        out = np.empty_like(x)
        out[:, 0] = alpha * x1 + x2 + np.sin(TWO_PI * x1) / TWO_PI
        out[:, 1] = x1 - x2
        return out

    return f


def rk4_pitchfork(X, alpha, h, nsteps, rmax):
    return rk4_loop(_pitchfork_field(float(alpha)), X, h, nsteps, rmax)


def rk4_linear(X, A, h, nsteps, rmax):
    At = np.ascontiguousarray(np.asarray(A, dtype=float).T)
    return rk4_loop(lambda x: x @ At, X, h, nsteps, rmax)


def barrier_terms(Theta, C, need_grad, floor):
    """Hinge log-det barrier summed over samples.

    For each sample ``S_i = Theta^T C_i + C_i^T Theta - I`` is tested for
    positive definiteness by Cholesky (every pivot must exceed ``floor``).

    Returns
    -------
    feasible : bool
    hinge_sum : float
        ``sum_i max(0, -log det S_i)``; ``inf`` when infeasible.
    grad : ndarray or None
        ``sum_{i active} -2 C_i S_i^{-1}`` where active means ``det S_i < 1``.
        ``None`` if not requested or infeasible.
    n_active : int
    """
    Theta = np.asarray(Theta, dtype=float)
    C = np.asarray(C, dtype=float)
    n = Theta.shape[1]
    T = np.einsum("ka,ikb->iab", Theta, C)
    S = T + T.transpose(0, 2, 1) - np.eye(n)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return False, np.inf, None, 0
    diag = np.diagonal(L, axis1=1, axis2=2)
    if not np.all(diag * diag > floor):
        return False, np.inf, None, 0
    logdet = 2.0 * np.log(diag).sum(axis=1)
    active = logdet < 0.0
    hinge_sum = float(-logdet[active].sum())
    n_active = int(active.sum())
    grad = None
    if need_grad:
        grad = np.zeros_like(Theta)
        if n_active:
            Linv = np.linalg.inv(L[active])
            Sinv = Linv.transpose(0, 2, 1) @ Linv
            grad = -2.0 * np.einsum("ika,iab->kb", C[active], Sinv)
    return True, hinge_sum, grad, n_active
