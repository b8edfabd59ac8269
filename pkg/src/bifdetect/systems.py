"""Built-in vector fields and the name registry used by the CLI."""
import numpy as np

from .dynamics import ParamSystem
from .errors import InvalidInputError

TWO_PI = 2.0 * np.pi


def _pitchfork_field(x, alpha):
    x = np.asarray(x, dtype=float)
    a = alpha[0]
    x1 = x[..., 0]
    x2 = x[..., 1]
    return np.stack([a * x1 + x2 + np.sin(TWO_PI * x1) / TWO_PI, x1 - x2], axis=-1)


class _LinearField:
    # a class rather than a closure so systems pickle into worker processes
    def __init__(self, A):
        self.A = np.array(A, dtype=float)

    def __call__(self, x, alpha):
        return np.asarray(x, dtype=float) @ self.A.T


def pitchfork_system() -> ParamSystem:
    """Planar system with a supercritical pitchfork at ``alpha = -2``::

        x1' = alpha x1 + x2 + sin(2 pi x1) / (2 pi)
        x2' = x1 - x2
    """
    return ParamSystem(2, 1, _pitchfork_field, "pitchfork", kernel=("pitchfork",))


def linear_system(A, name=None) -> ParamSystem:
    """``x' = A x``; the single parameter is accepted and ignored."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError("linear system matrix must be square")
    if name is None:
        name = "linear:" + ",".join(repr(float(v)) for v in A.ravel())
    return ParamSystem(A.shape[0], 1, _LinearField(A), name, kernel=("linear", A))


def get_system(name: str) -> ParamSystem:
    """Look up ``pitchfork`` or ``linear:a11,a12,...`` (row-major, square)."""
    name = name.strip()
    if name == "pitchfork":
        return pitchfork_system()
    if name.startswith("linear:"):
        try:
            vals = [float(v) for v in name[len("linear:"):].split(",")]
        except ValueError:
            raise InvalidInputError(f"bad linear system spec {name!r}") from None
        n = int(round(len(vals) ** 0.5))
        if n * n != len(vals) or n == 0:
            raise InvalidInputError(f"linear system needs a square matrix, got {len(vals)} entries")
        return linear_system(np.reshape(vals, (n, n)), name=name)
    raise InvalidInputError(f"unknown system {name!r}")
