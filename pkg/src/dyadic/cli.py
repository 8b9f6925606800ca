"""Command line front end: parameter ingestion, pipeline orchestration, and
bit-stable export of reports, certificates, and trajectories.

Artifacts are JSON and long-format CSV (one row per (t, n) pair, 17
significant digits, gnuplot-ready).  Every artifact embeds the resolved
configuration it was produced from; JSON artifacts additionally carry a
single "metadata" block (timestamps, library versions) which is the only
part allowed to differ between reruns of the same configuration.  Files
are written atomically (temp file + rename).

Exit codes: 0 all checks passed, 1 a certificate or check failed,
2 invalid configuration, 3 parameter search or calibration failed,
4 a numerical routine left its validated regime.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import platform
import sys
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .construction import build_split_fields, interval_times
from .core import NumericError, Params
from .profiles import CalibrationError
from .solver import (SolveConfig, constant_forcing, constructed_forcing,
                     energy_inequality_check, galerkin_solve,
                     local_existence_interval, zero_forcing)
from .spectral import SearchError, find_q
from .verify import (PipelineError, _json_safe, certify_nonuniqueness,
                     uniqueness_experiment)

EXIT_PASS = 0
EXIT_CHECK_FAIL = 1
EXIT_VALIDATION = 2
EXIT_SEARCH = 3
EXIT_NUMERIC = 4


@dataclass
class RunConfig:
    """Resolved per-command parameter bag: flag values merged over the
    optional JSON config file, validated, and echoed into every artifact."""

    command: str
    values: dict
    out: str
    seed: int | None

    def to_dict(self) -> dict:
        return _json_safe({"command": self.command, **self.values,
                           "out": self.out, "seed": self.seed})


# ---------------------------------------------------------------------------
# atomic writers
# ---------------------------------------------------------------------------


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp.",
                               suffix="." + os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _write_json(path: str, obj: dict) -> None:
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def _write_csv(path: str, config: dict, t: np.ndarray,
               series: dict[str, np.ndarray]) -> None:
    """Long-format CSV: a config comment, a header row, then one row per
    (t, n).  Series arrays are shaped (len(t), N)."""
    names = list(series)
    n_shells = series[names[0]].shape[1]
    lines = ["# config: " + json.dumps(config, separators=(",", ":"))]
    lines.append("t,n," + ",".join(names))
    for i, tv in enumerate(t):
        ts = _fmt(tv)
        for j in range(n_shells):
            lines.append(ts + "," + str(j + 1) + ","
                         + ",".join(_fmt(series[nm][i, j]) for nm in names))
    _atomic_write(path, "\n".join(lines) + "\n")


def _metadata() -> dict:
    return {
        "created_utc": datetime.datetime.now(datetime.timezone.utc)
        .isoformat(timespec="seconds"),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "threads_cap": os.environ.get("DYADIC_THREADS"),
    }


def _artifact(config: RunConfig, payload: dict) -> dict:
    return {"metadata": _metadata(), "config": config.to_dict(), **payload}


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must contain a JSON object")
    return cfg


def _pick(flag_value, file_cfg: dict, keys, default=None):
    if flag_value is not None:
        return flag_value
    for k in keys:
        if k in file_cfg and file_cfg[k] is not None:
            return file_cfg[k]
    return default


def _parse_shell_list(raw) -> list[int]:
    if isinstance(raw, (list, tuple)):
        vals = [int(v) for v in raw]
    else:
        vals = [int(part) for part in str(raw).split(",") if part.strip()]
    if not vals:
        raise ValueError("at least one shell count required")
    if any(v < 1 for v in vals):
        raise ValueError("shell counts must be >= 1")
    return vals


def _resolve_params(args, file_cfg: dict, default_shells: int = 10) -> Params:
    lam = float(_pick(args.lam, file_cfg, ("lambda", "lam"), 2.0))
    beta = float(_pick(args.beta, file_cfg, ("beta",), 2.5))
    shells_raw = _pick(getattr(args, "shells", None), file_cfg,
                       ("shells", "n_shells"), default_shells)
    shells = _parse_shell_list(shells_raw)
    if len(shells) != 1:
        raise ValueError("this command takes a single shell count")
    return Params(lam=lam, beta=beta, n_shells=shells[0])


def _resolve_R(args, file_cfg: dict):
    raw = _pick(getattr(args, "R", None), file_cfg, ("R",), "auto")
    if isinstance(raw, str) and raw.strip().lower() == "auto":
        return None
    return float(raw)


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# field sampling for CSV export
# ---------------------------------------------------------------------------


def _field_grid(fields, per_interval: int = 17) -> np.ndarray:
    """Ascending time grid covering every dyadic interval of the
    construction with a uniform per-interval sample."""
    ss = np.linspace(0.0, 1.0, per_interval)
    chunks = []
    for k in range(fields.params.n_shells + 1, -1, -1):
        t, _ = interval_times(fields, k, ss)
        chunks.append(t)
    return np.unique(np.concatenate(chunks))


def _field_series(fields, t: np.ndarray) -> dict[str, np.ndarray]:
    N = fields.params.n_shells
    cols = {nm: np.empty((len(t), N))
            for nm in ("v", "g", "u_plus", "u_minus", "f")}
    for j, n in enumerate(range(1, N + 1)):
        v = fields.v(n, t)
        g = fields.g(n, t)
        cols["v"][:, j] = v
        cols["g"][:, j] = g
        cols["u_plus"][:, j] = v + g
        cols["u_minus"][:, j] = v - g
        cols["f"][:, j] = fields.f(n, t)
    return cols


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_spectrum(args) -> int:
    file_cfg = _load_config_file(args.config)
    p = _resolve_params(args, file_cfg, default_shells=10)
    R = _resolve_R(args, file_cfg)
    q = _pick(args.q, file_cfg, ("q",))
    run = RunConfig("spectrum", {
        "lambda": p.lam, "beta": p.beta,
        "R": "auto" if R is None else R,
        "q": None if q is None else float(q),
    }, _out_dir(args), args.seed)

    report = find_q(p, R=R, q=None if q is None else float(q))
    path = os.path.join(run.out, "spectral_report.json")
    _write_json(path, _artifact(run, {"report": report.to_dict()}))
    print(f"spectral report: q = {report.q:.6g}, log|rho| = "
          f"{report.log_abs_rho:.6g}, passed = {report.passed}")
    print(f"wrote {path}")
    return EXIT_PASS if report.passed else EXIT_CHECK_FAIL


def _tolerances(args, file_cfg: dict) -> dict:
    return {
        "tol_residual": float(_pick(args.tol_residual, file_cfg,
                                    ("tol_residual",), 1e-6)),
        "tol_gluing": float(_pick(args.tol_gluing, file_cfg,
                                  ("tol_gluing",), 1e-8)),
        "tol_energy": float(_pick(args.tol_energy, file_cfg,
                                  ("tol_energy",), 1e-6)),
    }


def cmd_certify(args) -> int:
    file_cfg = _load_config_file(args.config)
    p = _resolve_params(args, file_cfg, default_shells=10)
    tols = _tolerances(args, file_cfg)
    rtol = float(_pick(args.rtol, file_cfg, ("rtol",), 1e-12))
    eps0 = float(_pick(args.eps, file_cfg, ("eps", "eps0"), 0.05))
    run = RunConfig("certify", {
        "lambda": p.lam, "beta": p.beta, "shells": p.n_shells,
        "rtol": rtol, "eps0": eps0, **tols,
    }, _out_dir(args), args.seed)

    cert, fields = certify_nonuniqueness(p, rtol=rtol, eps0=eps0, **tols)

    path = os.path.join(run.out, "certificate.json")
    _write_json(path, _artifact(run, {"certificate": cert.to_dict()}))
    t = _field_grid(fields)
    series = _field_series(fields, t)
    cfg_echo = run.to_dict()
    for nm in ("u_plus", "u_minus", "v", "g", "f"):
        _write_csv(os.path.join(run.out, nm + ".csv"), cfg_echo, t,
                   {nm: series[nm]})

    r = max(cert.residual_plus.overall, cert.residual_minus.overall)
    print(f"certificate: residual {r:.3e}, gluing {cert.gluing['rel']:.3e}, "
          f"energy defect {max(cert.energy_plus['defect_rel'], cert.energy_minus['defect_rel']):.3e}, "
          f"distinctness {cert.distinctness['value']:.6g}")
    print(f"wrote {path} (+ 5 trajectory CSVs), passed = {cert.passed}")
    return EXIT_PASS if cert.passed else EXIT_CHECK_FAIL


def cmd_construct(args) -> int:
    file_cfg = _load_config_file(args.config)
    p = _resolve_params(args, file_cfg, default_shells=10)
    rtol = float(_pick(args.rtol, file_cfg, ("rtol",), 1e-12))
    eps0 = float(_pick(args.eps, file_cfg, ("eps", "eps0"), 0.05))
    run = RunConfig("construct", {
        "lambda": p.lam, "beta": p.beta, "shells": p.n_shells,
        "rtol": rtol, "eps0": eps0,
    }, _out_dir(args), args.seed)

    fields = build_split_fields(p, rtol=rtol, eps0=eps0)
    report = {
        "log_abs_rho": fields.log_abs_rho,
        "rho_hat": fields.rho_hat,
        "rho_sign": fields.rho_sign,
        "y": fields.y,
        "z": fields.z,
        "eps": fields.phase.eps,
        "gamma": fields.phase.gamma,
        "gluing": fields.gluing_defects(),
        "checks": fields.checks,
        "spectral": fields.report.to_dict() if fields.report else {},
        "calibration": (fields.calibration.to_dict()
                        if fields.calibration else {}),
    }
    path = os.path.join(run.out, "construction_report.json")
    _write_json(path, _artifact(run, {"construction": _json_safe(report)}))
    t = _field_grid(fields)
    _write_csv(os.path.join(run.out, "fields.csv"), run.to_dict(), t,
               _field_series(fields, t))
    print(f"construction: log|rho| = {fields.log_abs_rho:.6g}, "
          f"gluing rel = {report['gluing']['rel']:.3e}")
    print(f"wrote {path} and fields.csv")
    return EXIT_PASS


def _make_forcing(spec, p: Params, rtol: float):
    """Forcing factory for the solve command; returns (callable, name)."""
    if spec in (None, "zero"):
        return zero_forcing, "zero"
    if isinstance(spec, str) and spec.startswith("constant:"):
        c = float(spec.split(":", 1)[1])
        return constant_forcing(c), spec
    if spec == "constructed":
        fields = build_split_fields(p, rtol=rtol)
        return constructed_forcing(fields), "constructed"
    raise ValueError(f"unknown forcing '{spec}' (use zero, constant:<c>, "
                     f"or constructed)")


def cmd_solve(args) -> int:
    file_cfg = _load_config_file(args.config)
    p = _resolve_params(args, file_cfg, default_shells=10)
    rtol = float(_pick(args.rtol, file_cfg, ("rtol",), 1e-8))
    atol = float(_pick(args.atol, file_cfg, ("atol",), 1e-12))
    t_end = float(_pick(args.t_end, file_cfg, ("t_end",), p.horizon))
    forcing_spec = _pick(args.forcing, file_cfg, ("forcing",), "zero")
    initial = _pick(args.initial, file_cfg, ("initial",))
    if isinstance(initial, str):
        initial = [float(v) for v in initial.split(",") if v.strip()]
    run = RunConfig("solve", {
        "lambda": p.lam, "beta": p.beta, "n_shells": p.n_shells,
        "t_end": t_end, "rtol": rtol, "atol": atol,
        "initial": initial, "forcing": forcing_spec,
    }, _out_dir(args), args.seed)

    forcing, forcing_name = _make_forcing(forcing_spec, p,
                                          float(_pick(None, file_cfg,
                                                      ("construction_rtol",),
                                                      1e-12)))
    cfg = SolveConfig(t_end=t_end, n_shells=p.n_shells, rtol=rtol, atol=atol,
                      initial=None if initial is None else np.asarray(
                          initial, dtype=float),
                      forcing=forcing)
    traj = galerkin_solve(cfg, p)
    energy = energy_inequality_check(traj, initial=cfg.initial)
    delta = local_existence_interval(cfg, p)

    series = {"u": traj.u}
    if traj.f is not None:
        series["f"] = traj.f
    _write_csv(os.path.join(run.out, "solution.csv"), run.to_dict(),
               traj.t, series)
    path = os.path.join(run.out, "solve_report.json")
    _write_json(path, _artifact(run, {
        "forcing": forcing_name,
        "stats": _json_safe(traj.stats),
        "diverged": traj.diverged,
        "blowup_time": traj.blowup_time,
        "energy_inequality": _json_safe(energy),
        "local_existence_interval": delta,
    }))
    print(f"solve: {traj.stats['n_accepted']} steps "
          f"({traj.stats['n_rejected']} rejected), "
          f"energy defect {energy['max_defect_rel']:.3e}"
          + (", DIVERGED" if traj.diverged else ""))
    print(f"wrote solution.csv and {path}")
    if traj.diverged:
        return EXIT_CHECK_FAIL
    return EXIT_PASS if energy["max_defect_rel"] <= 1e-3 else EXIT_CHECK_FAIL


def cmd_uniqueness(args) -> int:
    file_cfg = _load_config_file(args.config)
    lam = float(_pick(args.lam, file_cfg, ("lambda", "lam"), 2.0))
    beta = float(_pick(args.beta, file_cfg, ("beta",), 2.0))
    shells_raw = _pick(args.shells, file_cfg, ("shells", "n_shells"), "8,12")
    n_list = _parse_shell_list(shells_raw)
    rtol = float(_pick(args.rtol, file_cfg, ("rtol",), 1e-10))
    tol = float(_pick(args.tol_distance, file_cfg, ("tol_distance",), 1e-5))
    perturbation = float(_pick(args.perturbation, file_cfg,
                               ("perturbation",), 1e-6))
    p = Params(lam=lam, beta=beta, n_shells=max(n_list))
    run = RunConfig("uniqueness", {
        "lambda": lam, "beta": beta, "shells": n_list, "rtol": rtol,
        "tol_distance": tol, "perturbation": perturbation,
    }, _out_dir(args), args.seed)

    report = uniqueness_experiment(p, n_list=n_list, rtol=rtol,
                                   perturbation=perturbation)
    worst = max(report.endpoint_distances.values())
    passed = worst <= tol and report.contracted
    path = os.path.join(run.out, "uniqueness_report.json")
    _write_json(path, _artifact(run, {
        "report": report.to_dict(),
        "worst_distance": worst,
        "tol_distance": tol,
        "passed": passed,
    }))
    print(f"uniqueness: worst endpoint distance {worst:.3e} "
          f"(tol {tol:g}), contracted = {report.contracted}")
    print(f"wrote {path}")
    return EXIT_PASS if passed else EXIT_CHECK_FAIL


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="shell ratio (> 1)")
    sub.add_argument("--beta", type=float, default=None,
                     help="coupling exponent")
    sub.add_argument("--shells", type=str, default=None,
                     help="shell count (comma list for uniqueness)")
    sub.add_argument("--R", type=str, default=None,
                     help="amplification threshold, or 'auto'")
    sub.add_argument("--q", type=float, default=None,
                     help="fixed plateau height (skips the search)")
    sub.add_argument("--eps", type=float, default=None,
                     help="initial profile ramp width")
    sub.add_argument("--rtol", type=float, default=None)
    sub.add_argument("--atol", type=float, default=None)
    sub.add_argument("--tol-residual", dest="tol_residual", type=float,
                     default=None)
    sub.add_argument("--tol-gluing", dest="tol_gluing", type=float,
                     default=None)
    sub.add_argument("--tol-energy", dest="tol_energy", type=float,
                     default=None)
    sub.add_argument("--out", type=str, default=None,
                     help="output directory (default: current)")
    sub.add_argument("--config", type=str, default=None,
                     help="JSON config file; flags override its entries")
    sub.add_argument("--seed", type=int, default=None,
                     help="seed echoed into artifacts (randomized tests)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadic",
        description="Dyadic cascade laboratory: spectral search, split-field "
                    "construction, certified non-uniqueness, and the rigid "
                    "regime.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("spectrum",
                         help="search (or evaluate) the plateau height q and "
                              "report the amplification spectrum")
    _add_common(sp)
    sp.set_defaults(func=cmd_spectrum)

    ce = subs.add_parser("certify",
                         help="build both solutions and write the "
                              "non-uniqueness certificate")
    _add_common(ce)
    ce.set_defaults(func=cmd_certify)

    co = subs.add_parser("construct",
                         help="run search + calibration + assembly and "
                              "export the split fields")
    _add_common(co)
    co.set_defaults(func=cmd_construct)

    so = subs.add_parser("solve",
                         help="integrate the truncated cascade")
    _add_common(so)
    so.add_argument("--t-end", dest="t_end", type=float, default=None)
    so.add_argument("--forcing", type=str, default=None,
                    help="zero | constant:<c> | constructed")
    so.add_argument("--initial", type=str, default=None,
                    help="comma-separated initial shell amplitudes")
    so.set_defaults(func=cmd_solve)

    un = subs.add_parser("uniqueness",
                         help="resolution/perturbation consistency sweep "
                              "for beta <= 2")
    _add_common(un)
    un.add_argument("--perturbation", type=float, default=None)
    un.add_argument("--tol-distance", dest="tol_distance", type=float,
                    default=None)
    un.set_defaults(func=cmd_uniqueness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SearchError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.stage in ("search", "calibration"):
            return EXIT_SEARCH
        return EXIT_NUMERIC
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
