"""Command-line front end.

::

    bifdetect simulate  [--config FILE] [--key value ...]
    bifdetect koopman   DATASET [...]
    bifdetect tune      DATASET [--target-file FILE] [...]
    bifdetect detect    [TARGET_FILE] [...]
    bifdetect resonance [...]

Any configuration key may be overridden with ``--key value``. Exit codes:
2 configuration or input error, 3 orbit divergence, 4 fewer than two RMSE
minima, 5 tuning failure, 6 every detection cell failed, 7 complex or
repeated reference spectrum.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import detection, koopman, tuning
from .basis import build_basis
from .config import RunConfig, derive_seed, load_config
from .conjugacy import FitOptions
from .dynamics import (
    KOOPMAN,
    jacobian_at,
    linearize_diag,
    load_target,
    real_spectrum,
    resonance_check,
    save_target,
)
from .errors import (
    BifDetectError,
    ConfigurationError,
    DatasetError,
    InvalidInputError,
    OrbitDivergenceError,
    SpectrumIdentificationError,
    TuningError,
    UnsupportedSpectrumError,
)
from .parallel import default_jobs
from .sampling import (
    dataset_filename,
    ensure_dir,
    generate_dataset,
    load_dataset,
    sample_initial,
    save_dataset,
)
from .systems import get_system

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_SPECTRUM_ID = 4
EXIT_TUNE = 5
EXIT_DETECT = 6
EXIT_SPECTRUM = 7


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _log(msg, err=False):
    stream = sys.stderr if err else sys.stdout
    if err and stream.isatty() and not os.environ.get("NO_COLOR"):
        msg = f"\033[31m{msg}\033[0m"
    print(msg, file=stream)


def _simulate_at(cfg: RunConfig, sys_, alpha, P):
    inits = sample_initial(cfg.box, cfg.M, cfg.seed)
    try:
        return generate_dataset(sys_, alpha, inits, P, cfg.tau, cfg.integrator_step,
                                box=cfg.box, seed=cfg.seed)
    except OrbitDivergenceError as exc:
        raise CommandError(EXIT_DIVERGENCE, f"alpha={alpha:g}: {exc}") from None


def cmd_simulate(cfg: RunConfig, args) -> int:
    sys_ = get_system(cfg.system)
    out = ensure_dir(cfg.out)
    for alpha in cfg.alphas:
        ds = _simulate_at(cfg, sys_, float(alpha), cfg.P_max)
        path = out / dataset_filename(alpha)
        save_dataset(ds, path)
        _log(f"wrote {path} ({ds.M * (ds.P + 1)} rows)")
    return 0


def _axis(lo, hi, count):
    return np.linspace(lo, hi, count)


def _koopman_target(cfg, ds, out=None):
    b = build_basis(ds.n, cfg.d)
    sc = koopman.scan(ds, b, cfg.lambda_lo, cfg.lambda_hi, cfg.lambda_steps)
    if out is not None:
        sc.to_csv(out / "koopman_scan.csv")
    try:
        target = koopman.select_pair(sc, alpha0=ds.alpha[0] if len(ds.alpha) == 1 else None)
    except SpectrumIdentificationError as exc:
        raise CommandError(EXIT_SPECTRUM_ID, str(exc)) from None
    return sc, b, target


def cmd_koopman(cfg: RunConfig, args) -> int:
    ds = load_dataset(args.dataset)
    out = ensure_dir(cfg.out)
    sc, b, target = _koopman_target(cfg, ds, out)
    _log("rmse minima at lambda = " + ", ".join(f"{v:.4f}" for v in sc.minima_lambdas))
    if ds.n == 2:
        (lo1, hi1), (lo2, hi2) = (ds.box or cfg.box)[:2]
        xs = _axis(lo1, hi1, cfg.grid_points)
        ys = _axis(lo2, hi2, cfg.grid_points)
        for j, xi in enumerate(koopman.pair_coefficients(sc), 1):
            koopman.eval_eigenfunction(xi, b, xs, ys).to_csv(out / f"eigenfunction_{j}.csv")
    save_target(target, out / "target_koopman.txt")
    lam = np.diag(target.A)
    _log(f"selected A = diag({lam[0]:.4f}, {lam[1]:.4f}); wrote {out / 'target_koopman.txt'}")
    return 0


def _model_target(cfg, sys_):
    try:
        return linearize_diag(sys_, cfg.alpha0, cfg.tau)
    except UnsupportedSpectrumError as exc:
        raise CommandError(EXIT_SPECTRUM, f"alpha0={cfg.alpha0:g}: {exc}") from None


def _resolve_target(cfg, sys_, path):
    if path is not None:
        target = load_target(path)
        if abs(target.tau - cfg.tau) > 1e-12 * cfg.tau:
            raise ConfigurationError(f"tau: target file has tau={target.tau!r}")
        return target
    if cfg.target == KOOPMAN:
        ds = _simulate_at(cfg, sys_, cfg.alpha0, cfg.P_max)
        return _koopman_target(cfg, ds)[2]
    return _model_target(cfg, sys_)


def cmd_tune(cfg: RunConfig, args) -> int:
    ds = load_dataset(args.dataset)
    if abs(ds.tau - cfg.tau) > 1e-12 * cfg.tau:
        raise ConfigurationError(f"tau: dataset was sampled with tau={ds.tau!r}")
    sys_ = get_system(ds.system or cfg.system)
    target = _resolve_target(cfg, sys_, args.target_file)
    b = build_basis(ds.n, cfg.d)
    out = ensure_dir(cfg.out)
    seed = derive_seed(cfg.seed, "kfold")
    fixed = {"beta": cfg.beta, "mu": cfg.mu}
    grids = {"mu": cfg.mu_grid, "beta": cfg.beta_grid, "P": [p for p in cfg.P if p <= ds.P]}
    for which, grid in grids.items():
        if not grid:
            raise ConfigurationError(f"P: no horizon fits the dataset's P={ds.P}")
        table = tuning.sweep(ds, b, target, which, grid, fixed, cfg.K, seed, jobs=args.jobs)
        path = out / f"tune_{which}.csv"
        table.to_csv(path)
        if not any(r.ok for r in table.rows):
            raise CommandError(EXIT_TUNE, f"every {which} value failed; see {path}")
        _log(f"wrote {path}")
    return 0


def cmd_detect(cfg: RunConfig, args) -> int:
    sys_ = get_system(cfg.system)
    target = _resolve_target(cfg, sys_, args.target_file)
    b = build_basis(sys_.n, cfg.d)
    curve = detection.detect_curve(
        sys_, cfg.alphas, target, b, cfg.beta, cfg.mu_grid, cfg.P, cfg.M, cfg.box, cfg.seed,
        step=cfg.integrator_step, frozen_mu=cfg.frozen_mu, kappa=cfg.kappa,
        opts=FitOptions(), jobs=args.jobs)
    out = ensure_dir(cfg.out)
    path = out / "detection.csv"
    detection.export_curve(curve, path)
    for (i, j), cause in sorted(curve.causes.items()):
        _log(f"alpha={curve.alphas[i]:g} P={curve.P_list[j]}: failed ({cause})", err=True)
    if curve.failed.all():
        raise CommandError(EXIT_DETECT, f"every detection cell failed; see {path}")
    for a in curve.flagged_alphas():
        _log(f"flagged alpha={a:g} (L2 above {cfg.kappa:g}x baseline median)")
    _log(f"wrote {path}")
    return 0


def cmd_resonance(cfg: RunConfig, args) -> int:
    sys_ = get_system(cfg.system)
    J = jacobian_at(sys_, np.zeros(sys_.n), cfg.alpha0)
    _log(f"jacobian at origin, alpha0={cfg.alpha0:g}: {np.round(J, 10).tolist()}")
    if sys_.n == 2:
        tr, det = float(np.trace(J)), float(np.linalg.det(J))
        _log(f"characteristic polynomial: l^2 - ({tr:.10g}) l + ({det:.10g}); "
             f"eigenvalues = {tr / 2:.10g} +/- sqrt({tr * tr / 4 - det:.10g})")
    try:
        eig = real_spectrum(J)
    except UnsupportedSpectrumError as exc:
        raise CommandError(EXIT_SPECTRUM, f"{exc}: {np.linalg.eigvals(J)}") from None
    _log("eigenvalues: " + ", ".join(f"{v:.12g}" for v in eig))
    rep = resonance_check(eig, max(2, cfg.d), cfg.res_C, cfg.res_nu)
    if rep.ok:
        _log(f"no resonances up to order {rep.max_order} (C={rep.C:g}, nu={rep.nu:g})")
    for k, m, gap in rep.violations:
        _log(f"resonance: lambda_{k + 1} vs m={m}, gap={gap:.3g}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "koopman": cmd_koopman,
    "tune": cmd_tune,
    "detect": cmd_detect,
    "resonance": cmd_resonance,
}


def _parser():
    p = argparse.ArgumentParser(prog="bifdetect", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: available CPUs)")
        if name in ("koopman", "tune"):
            s.add_argument("dataset")
        if name == "tune":
            s.add_argument("--target-file", default=None)
        if name == "detect":
            s.add_argument("target_file", nargs="?", default=None)
    return p


_OWN_OPTIONS = {"--config", "--jobs", "--target-file", "--help", "-h"}


def _split_overrides(argv):
    """Pull ``--key value`` / ``--key=value`` config overrides out of ``argv``.

    Done before argparse so negative values such as ``--alpha_hi -3.6`` are
    never mistaken for options or positionals.
    """
    rest, out = [], {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        name = tok.split("=", 1)[0]
        if not tok.startswith("--") or name in _OWN_OPTIONS:
            rest.append(tok)
            if name in _OWN_OPTIONS and "=" not in tok and name not in ("--help", "-h"):
                rest.extend(argv[i + 1:i + 2])
                i += 1
            i += 1
            continue
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif i + 1 < len(argv):
            value = argv[i + 1]
            i += 1
        else:
            raise ConfigurationError(f"{key}: missing value")
        out[key.replace("-", "_")] = value
        i += 1
    return rest, out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        rest, overrides = _split_overrides(argv)
    except ConfigurationError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_CONFIG
    args = _parser().parse_args(rest)
    try:
        cfg = load_config(args.config, overrides)
        if args.jobs is None:
            args.jobs = default_jobs()
        elif args.jobs < 1:
            raise ConfigurationError("jobs: must be at least 1")
        return COMMANDS[args.command](cfg, args)
    except CommandError as exc:
        _log(f"error: {exc}", err=True)
        return exc.code
    except OrbitDivergenceError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_DIVERGENCE
    except UnsupportedSpectrumError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_SPECTRUM
    except SpectrumIdentificationError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_SPECTRUM_ID
    except TuningError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_TUNE
    except (ConfigurationError, InvalidInputError, DatasetError) as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except OSError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except BifDetectError as exc:
        _log(f"error: {exc}", err=True)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
