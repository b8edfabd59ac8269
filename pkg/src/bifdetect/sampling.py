"""Orbit datasets: generation, truncation, and CSV persistence.

Initial states are drawn with numpy's ``Generator(PCG64(seed))``, i.e. the
PCG-64 permuted congruential generator, so a seed reproduces the same points
on any platform running the same numpy stream.  The CSV file, not the seed,
is the portable artifact.

File format
-----------
``<name>.csv``::

    orbit_id,step,x1,...,xn
    0,0,<17 significant digits>,...

``<name>.meta`` (same basename), one ``key=value`` per line with keys
``system, alpha, tau, M, P, seed, box, integrator_step``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import ParamSystem, flow_batch
from .errors import (
    DatasetConsistencyError,
    DatasetParseError,
    InvalidInputError,
    OrbitDivergenceError,
)

META_KEYS = ("system", "alpha", "tau", "M", "P", "seed", "box", "integrator_step")


@dataclass(frozen=True, eq=False)
class OrbitDataset:
    """``M`` orbits of ``P + 1`` states sampled every ``tau`` time units.

    ``states[i, k]`` is the ``k``-th sample of orbit ``i``.
    """

    states: np.ndarray
    alpha: tuple
    tau: float
    box: Optional[tuple] = None
    seed: Optional[int] = None
    system: str = ""
    integrator_step: Optional[float] = None

    def __post_init__(self):
        s = np.array(self.states, dtype=float)
        if s.ndim != 3:
            raise InvalidInputError("states must have shape (M, P + 1, n)")
        if s.shape[0] < 1 or s.shape[1] < 2:
            raise InvalidInputError("need M >= 1 and P >= 1")
        if not self.tau > 0:
            raise InvalidInputError("tau must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))
        if self.box is not None:
            object.__setattr__(self, "box", tuple((float(lo), float(hi)) for lo, hi in self.box))

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def P(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n(self) -> int:
        return self.states.shape[2]

    def _replace_states(self, states):
        return OrbitDataset(states, self.alpha, self.tau, self.box, self.seed,
                            self.system, self.integrator_step)

    def truncate(self, P: int) -> "OrbitDataset":
        """Keep the first ``P`` transitions of every orbit."""
        if not 1 <= P <= self.P:
            raise InvalidInputError(f"cannot truncate P={self.P} dataset to P={P}")
        return self._replace_states(self.states[:, : P + 1])

    def subset(self, orbits) -> "OrbitDataset":
        """Dataset restricted to the given orbit indices (in that order)."""
        idx = np.asarray(orbits, dtype=np.intp)
        if idx.size == 0:
            raise InvalidInputError("empty orbit subset")
        return self._replace_states(self.states[idx])


def _check_box(box):
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if not box:
        raise InvalidInputError("empty sampling box")
    for lo, hi in box:
        if not lo < hi:
            raise InvalidInputError(f"degenerate box interval [{lo}, {hi}]")
    return box


def sample_initial(box, M: int, seed: int) -> np.ndarray:
    """``M`` points uniform on the axis-aligned ``box``; shape ``(M, n)``."""
    box = _check_box(box)
    if M < 1:
        raise InvalidInputError("need at least one initial point")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rng = np.random.Generator(np.random.PCG64(seed))
    return lo + (hi - lo) * rng.random((M, len(box)))


def generate_dataset(sys: ParamSystem, alpha, inits, P: int, tau: float,
                     step: float | None = None, *, box=None, seed=None) -> OrbitDataset:
    """Advance each initial state ``P`` times by the ``tau``-flow.

    ``step`` is the internal RK4 step (default ``tau / 100``). ``box`` and
    ``seed`` are recorded as provenance only.
    """
    if P < 1:
        raise InvalidInputError("P must be at least 1")
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    if step is None:
        step = tau / 100.0
    X = np.array(inits, dtype=float, ndmin=2)
    states = np.empty((X.shape[0], P + 1, X.shape[1]))
    states[:, 0] = X
    for k in range(1, P + 1):
        try:
            X = flow_batch(sys, X, alpha, tau, step)
        except OrbitDivergenceError as exc:
            t = (k - 1) * tau + exc.time
            raise OrbitDivergenceError(
                t, orbit=exc.orbit,
                message=f"{sys.name} at alpha={list(np.atleast_1d(alpha))}: "
                        f"orbit {exc.orbit} diverged at t={t:.6g}",
            ) from None
        states[:, k] = X
    return OrbitDataset(states, tuple(np.atleast_1d(alpha)), float(tau),
                        box=box, seed=seed, system=sys.name, integrator_step=float(step))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def save_dataset(ds: OrbitDataset, path) -> None:
    """Write ``path`` (CSV) and its ``.meta`` sidecar."""
    path = Path(path)
    n = ds.n
    lines = ["orbit_id,step," + ",".join(f"x{r + 1}" for r in range(n))]
    for i in range(ds.M):
        for k in range(ds.P + 1):
            lines.append(f"{i},{k}," + ",".join(_fmt(v) for v in ds.states[i, k]))
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "system": ds.system,
        "alpha": ",".join(_fmt(a) for a in ds.alpha),
        "tau": _fmt(ds.tau),
        "M": str(ds.M),
        "P": str(ds.P),
        "seed": "" if ds.seed is None else str(int(ds.seed)),
        "box": "" if ds.box is None else ",".join(_fmt(v) for pair in ds.box for v in pair),
        "integrator_step": "" if ds.integrator_step is None else _fmt(ds.integrator_step),
    }
    _meta_path(path).write_text("".join(f"{k}={meta[k]}\n" for k in META_KEYS))


def read_key_values(path) -> dict:
    """Parse a ``key=value`` (or ``key = value``) file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DatasetParseError(f"expected key=value, got {raw.rstrip()!r}", lineno)
            key, value = line.split("=", 1)
            key = key.strip()
            if key in out:
                raise DatasetParseError(f"duplicate key {key!r}", lineno)
            out[key] = value.strip()
    return out


def _floats(text, what):
    try:
        return tuple(float(v) for v in text.split(",")) if text else ()
    except ValueError:
        raise DatasetParseError(f"bad {what} field {text!r}") from None


def load_dataset(path) -> OrbitDataset:
    path = Path(path)
    meta = read_key_values(_meta_path(path))
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise DatasetParseError(f"metadata missing keys {missing}")
    try:
        M = int(meta["M"])
        P = int(meta["P"])
        tau = float(meta["tau"])
        seed = int(meta["seed"]) if meta["seed"] else None
        step = float(meta["integrator_step"]) if meta["integrator_step"] else None
    except ValueError as exc:
        raise DatasetParseError(f"bad metadata value: {exc}") from None
    alpha = _floats(meta["alpha"], "alpha")
    box_flat = _floats(meta["box"], "box")
    if len(box_flat) % 2:
        raise DatasetParseError("box needs lo/hi pairs")
    box = tuple(zip(box_flat[::2], box_flat[1::2])) if box_flat else None

    with open(path) as fh:
        header = fh.readline()
        cols = header.strip().split(",")
        if len(cols) < 3 or cols[:2] != ["orbit_id", "step"]:
            raise DatasetParseError("header must start with orbit_id,step", 1)
        n = len(cols) - 2
        if cols[2:] != [f"x{r + 1}" for r in range(n)]:
            raise DatasetParseError("state columns must be x1..xn", 1)
        if not header.endswith("\n"):
            raise DatasetParseError("truncated header", 1)
        states = np.empty((M, P + 1, n))
        expected = ((i, k) for i in range(M) for k in range(P + 1))
        count = 0
        lineno = 1
        for lineno, raw in enumerate(fh, 2):
            if not raw.endswith("\n"):
                raise DatasetParseError("truncated row (no line terminator)", lineno)
            fields = raw.rstrip("\n").split(",")
            if len(fields) != n + 2:
                raise DatasetParseError(f"expected {n + 2} fields, got {len(fields)}", lineno)
            try:
                i, k = int(fields[0]), int(fields[1])
                vals = [float(v) for v in fields[2:]]
            except ValueError:
                raise DatasetParseError("non-numeric field", lineno) from None
            want = next(expected, None)
            if want is None:
                raise DatasetConsistencyError(f"line {lineno}: more rows than M*(P+1)={M * (P + 1)}")
            if (i, k) != want:
                raise DatasetConsistencyError(
                    f"line {lineno}: expected orbit {want[0]} step {want[1]}, got {i},{k}")
            states[i, k] = vals
            count += 1
    if count != M * (P + 1):
        raise DatasetConsistencyError(f"found {count} rows, metadata implies {M * (P + 1)}")
    return OrbitDataset(states, alpha, tau, box=box, seed=seed,
                        system=meta["system"], integrator_step=step)


def dataset_filename(alpha) -> str:
    a = np.atleast_1d(alpha)
    return "dataset_alpha" + "_".join(f"{v:+.4f}" for v in a) + ".csv"


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
