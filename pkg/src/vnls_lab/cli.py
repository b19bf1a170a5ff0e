"""Command-line front end.

Every command prints its measurements with tolerances, writes
``summary.json`` (deterministic for a given configuration and seed) and
``run_meta.json`` (timestamps and timings) into ``--output-dir``, and exits
with 0 when all checks pass, 1 when a check fails and 2 on a usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import backlund as bt
from . import checks
from . import darboux as db
from . import dnls
from . import glm
from .errors import VnlsError
from .lax_core import FieldGrid, make_params

log = logging.getLogger("vnls_lab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# --- grid files -----------------------------------------------------------------


def export_grid(grid: FieldGrid, path, N: int, kappa: int, provenance: str = "") -> None:
    """CSV with ``#`` metadata lines, a column header, then one row per (t, x) sample.

    Floats are written with ``repr`` so that ``import_grid`` round-trips bit-exactly.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# N={N}\n# kappa={kappa}\n# provenance={provenance}\n")
        fh.write(
            f"# x0={grid.x0!r} dx={grid.dx!r} nx={grid.nx} t0={grid.t0!r} dt={grid.dt!r} nt={grid.nt}\n"
        )
        w = csv.writer(fh)
        header = ["x", "t"]
        for c in range(grid.ncomp):
            header += [f"re_u{c + 1}", f"im_u{c + 1}"]
        w.writerow(header)
        xs, ts = grid.x, grid.t
        for k in range(grid.nt):
            for i in range(grid.nx):
                row = [repr(float(xs[i])), repr(float(ts[k]))]
                for v in grid.values[k, i]:
                    row += [repr(float(v.real)), repr(float(v.imag))]
                w.writerow(row)


def import_grid(path):
    """Inverse of ``export_grid``; returns ``(grid, metadata)``."""
    meta: dict = {}
    rows = []
    with Path(path).open(newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                rows.append(line)
                continue
            body = line[1:].strip()
            if body.startswith("x0="):
                for item in body.split():
                    k, v = item.split("=", 1)
                    meta[k] = int(v) if k in ("nx", "nt") else float(v)
            else:
                k, v = body.split("=", 1)
                meta[k] = v
    reader = csv.reader(rows)
    header = next(reader)
    ncomp = (len(header) - 2) // 2
    data = np.array([[float(v) for v in r] for r in reader])
    vals = data[:, 2::2] + 1j * data[:, 3::2]
    nx, nt = meta["nx"], meta["nt"]
    grid = FieldGrid(meta["x0"], meta["dx"], nx, meta["t0"], meta["dt"], nt, vals.reshape(nt, nx, ncomp))
    meta["N"] = int(meta["N"])
    meta["kappa"] = int(meta["kappa"])
    return grid, meta


def write_modulus(path, xs, ts, values) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "modulus"])
        for k, t in enumerate(ts):
            for i, x in enumerate(xs):
                w.writerow([repr(float(x)), repr(float(t)), repr(float(np.linalg.norm(values[k, i])))])


# --- argument parsing helpers ---------------------------------------------------


def parse_floats(text: str, count=None) -> list:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise ConfigError(f"expected {count} numbers, got {len(vals)} in {text!r}")
    return vals


def parse_complex(text: str) -> complex:
    """``re,im`` or a Python complex literal such as ``0.3+1j``."""
    text = text.strip()
    try:
        if "," in text:
            re_, im_ = parse_floats(text, 2)
            return complex(re_, im_)
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"cannot read complex number {text!r}") from exc


def parse_pole(text: str):
    """``mu:re,im;C:c1,c2,...`` where each ``c`` is a complex literal."""
    parts = dict(p.split(":", 1) for p in text.split(";") if ":" in p)
    if "mu" not in parts or "C" not in parts:
        raise ConfigError(f"pole needs mu and C fields: {text!r}")
    mu = parse_complex(parts["mu"])
    try:
        C = [complex(c.strip().replace(" ", "")) for c in parts["C"].split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot read polarization in {text!r}") from exc
    return mu, C


def parse_grid(text: str):
    xmin, xmax, dx, tmin, tmax, dt = parse_floats(text, 6)
    if dx <= 0 or dt <= 0 or xmax <= xmin or tmax < tmin:
        raise ConfigError(f"invalid grid {text!r}")
    nx = int(round((xmax - xmin) / dx)) + 1
    nt = int(round((tmax - tmin) / dt)) + 1
    return xmin, dx, nx, tmin, dt, nt


def parse_branch(text: str):
    table = {"auto": None, "+": 1, "+1": 1, "-": -1, "-1": -1, "−": -1}
    if text not in table:
        raise ConfigError(f"branch must be auto, + or -, got {text!r}")
    return table[text]


def _kappa(value: str) -> int:
    k = int(value)
    if k not in (1, -1):
        raise argparse.ArgumentTypeError("kappa must be +1 or -1")
    return k


# --- commands -------------------------------------------------------------------


def _result(name: str, criterion=None) -> checks.CheckResult:
    return checks.CheckResult(criterion or 0, name)


def cmd_soliton(args, out: Path) -> list:
    N = args.n_comp + 1
    poles = [parse_pole(p) for p in (args.poles or ["mu:0,1;C:" + ",".join(["1"] * N)])]
    spec = db.make_spec(N, args.kappa, poles)
    if len(spec.poles) == 1:
        method = "single"
    elif all(p.rank == 1 for p in spec.poles):
        method = "nsoliton"
    else:
        method = "chain"
    f = db.soliton_closure(spec, method)
    x0, dx, nx, t0, dt, nt = parse_grid(args.grid)
    xs = x0 + dx * np.arange(nx)
    ts = t0 + dt * np.arange(nt)
    T, X = np.meshgrid(ts, xs, indexing="ij")
    values = np.asarray(f(X, T))
    write_modulus(out / "modulus.csv", xs, ts, values)
    if nx >= 5 and nt >= 3:
        export_grid(FieldGrid(x0, dx, nx, t0, dt, nt, values), out / "field.csv", N, args.kappa, f"soliton/{method}")
    res = _result(f"soliton ({method}, {len(spec.poles)} pole(s))", 3 if len(spec.poles) > 1 else 1)
    res.notes.append(f"peak modulus {float(np.max(np.linalg.norm(values, axis=-1))):.12g}")
    if args.verify:
        order, errs = checks.pde_refinement(f, args.kappa)
        res.add("PDE residual order", order, 3.5, "min")
        log.info("residuals %s", errs)
    return [res]


def cmd_lattice(args, out: Path) -> list:
    defect = None if not args.defect_site else args.defect_site - 1
    rng = np.random.default_rng(args.seed)
    state = dnls.random_state(rng, args.sites, args.n_comp + 1, args.amplitude, defect_site=defect)
    c0 = dnls.charges(state)
    drift = dnls.charge_drift(state, args.dt, args.T, corrected=args.corrected)
    res = _result("lattice charge conservation", 8)
    for k in range(3):
        res.add(f"I{k + 1} relative drift", drift[k], args.tol)
    res.notes.append("initial charges " + ", ".join(f"{v.real:.10g}{v.imag:+.3g}j" for v in c0.as_array()))
    return [res]


def cmd_bt_check(args, out: Path) -> list:
    N = args.n_comp + 1
    mu = parse_complex(args.mu)
    C = parse_pole(f"mu:0,1;C:{args.C}")[1] if args.C else ([1] * (N - 1) + ([1] if args.kappa == -1 else [1e5]))
    branch = parse_branch(args.branch)
    if branch is None:
        spec = db.make_spec(N, args.kappa, [(mu, C)])
        f = db.soliton_closure(spec, "single")
        z = checks._zero(N - 1)
        g = FieldGrid.centered(f, checks.XLIM, 0.05, checks.T_CENTER, 1e-3)
        branch = bt.best_branch(bt.BtPair(FieldGrid.centered(z, checks.XLIM, 0.05, checks.T_CENTER, 1e-3), g, mu, args.kappa))
        log.info("auto branch %+d", branch)
    ox, ex, ot, et = checks.bt_orders(N, args.kappa, mu, C, branch)
    res = _result(f"Backlund closure, branch {branch:+d}", 4)
    res.add("x order", ox, 3.5, "min")
    res.add("t order", ot, 1.8, "min")
    res.notes.append("x residuals " + ", ".join(f"{e:.3e}" for e in ex))
    res.notes.append("t residuals " + ", ".join(f"{e:.3e}" for e in et))
    return [res]


def cmd_glm_check(args, out: Path) -> list:
    N = args.n_comp + 1
    p = make_params(N, -1)
    xs = np.linspace(-10, 10, 201)
    if args.terms == 1:
        mu = parse_complex(args.mu)
        C = [1] * N
        spec = glm.kernel_from_pole(p, mu, C)
        ref = db.soliton_closure(db.make_spec(N, -1, [(mu, C)]), "single")
        c = glm.calibrate_constant(spec, ref, xs[::10]) if args.calibrate else -2.0
        u = glm.glm_field(spec, xs, 0.0, c)
        res = _result("GLM one-term cross-oracle", 6)
        res.add("max | |u_glm| - |u_darboux| |", np.max(np.abs(np.linalg.norm(u, axis=-1) - np.linalg.norm(ref(xs, 0.0), axis=-1))), 1e-8)
        sol = glm.assemble_kernels(spec, 0.5, 0.0)
        res.add("GLM residual", max(glm.glm_residual(sol, z) for z in (0.5, 1.0, 2.0)), 1e-10)
        res.notes.append(f"c = {complex(c).real:.12f}{complex(c).imag:+.1e}j")
        return [res]
    if args.terms == 2:
        mus = [0.5 + 1j, -0.5 + 0.8j]
        parts = [glm.kernel_from_pole(p, m, [1] * N) for m in mus]
        spec = glm.kernel_from_exponents(
            glm.matched_bare(p),
            *(np.concatenate([getattr(k, name) for k in parts], axis=1) for name in ("b", "bhat", "lam", "lamhat")),
        )
        order, _ = checks.pde_refinement(glm.glm_closure(spec), -1, steps=(0.2, 0.1, 0.05))
        res = _result("GLM two-term reconstruction", 6)
        res.add("PDE residual order", order, 3.5, "min")
        sol = glm.assemble_kernels(spec, 0.5, 0.0)
        res.add("GLM residual", max(glm.glm_residual(sol, z) for z in (0.5, 1.0, 2.0)), 1e-10)
        return [res]
    raise ConfigError("--terms must be 1 or 2")


def cmd_zcc_check(args, out: Path) -> list:
    defect = None if not args.defect_site else args.defect_site - 1
    rng = np.random.default_rng(args.seed)
    state = dnls.random_state(rng, args.sites, args.n_comp + 1, args.amplitude, defect_site=defect)
    res = _result("discrete zero curvature", 9)
    for lam in parse_floats(args.lam):
        for mu in parse_floats(args.mu):
            for name, order in checks.zcc_orders(state, lam, mu, corrected=args.corrected).items():
                res.add(f"lam={lam:g} mu={mu:g} {name}", order, 1.8, "min")
    return [res]


def cmd_accept(args, out: Path) -> list:
    selected = None if not args.criteria else [int(c) for c in args.criteria.split(",")]
    if selected and any(c not in checks.ALL_CHECKS for c in selected):
        raise ConfigError(f"criteria must be in 1..{len(checks.ALL_CHECKS)}")
    return checks.run_all(selected)


COMMANDS = {
    "soliton": cmd_soliton,
    "lattice": cmd_lattice,
    "bt-check": cmd_bt_check,
    "glm-check": cmd_glm_check,
    "zcc-check": cmd_zcc_check,
    "accept": cmd_accept,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vnls-lab", description="Vector NLS soliton and lattice laboratory.")
    ap.add_argument("--output-dir", default="vnls_out", help="directory for CSV and JSON artifacts")
    ap.add_argument("--config", help="JSON file whose keys supply default option values")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("soliton", help="dress the zero field and sample the result")
    s.add_argument("--n-comp", type=int, default=1, help="field components (matrix size minus one)")
    s.add_argument("--kappa", type=_kappa, default=-1)
    s.add_argument("--poles", action="append", help='pole as "mu:re,im;C:c1,c2,..."; repeat for more poles')
    s.add_argument("--grid", default="-20,20,0.05,-0.01,0.01,0.01", help="xmin,xmax,dx,tmin,tmax,dt")
    s.add_argument("--verify", action="store_true", help="check PDE residual convergence")

    s = sub.add_parser("lattice", help="evolve a random lattice state and report charge drift")
    s.add_argument("--sites", type=int, default=32)
    s.add_argument("--defect-site", type=int, default=0, help="1-based site label; 0 for none")
    s.add_argument("--n-comp", type=int, default=1)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--T", type=float, default=10.0)
    s.add_argument("--amplitude", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--corrected", action="store_true", help="add -alpha x_{n+1} to the x_{n-1} equation")

    s = sub.add_parser("bt-check", help="Backlund residual convergence for a zero-seed Darboux pair")
    s.add_argument("--mu", default="0.3,1")
    s.add_argument("--branch", default="auto")
    s.add_argument("--n-comp", type=int, default=1)
    s.add_argument("--kappa", type=_kappa, default=-1)
    s.add_argument("--C", help="polarization entries, comma separated")

    s = sub.add_parser("glm-check", help="GLM reconstruction against Darboux")
    s.add_argument("--terms", type=int, default=1)
    s.add_argument("--mu", default="0.3,1")
    s.add_argument("--n-comp", type=int, default=1)
    s.add_argument("--calibrate", action="store_true")

    s = sub.add_parser("zcc-check", help="discrete zero-curvature convergence per site class")
    s.add_argument("--sites", type=int, default=32)
    s.add_argument("--defect-site", type=int, default=16, help="1-based site label; 0 for none")
    s.add_argument("--n-comp", type=int, default=2)
    s.add_argument("--amplitude", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=2)
    s.add_argument("--lam", default="2,5")
    s.add_argument("--mu", default="2,5")
    s.add_argument("--corrected", action="store_true")

    s = sub.add_parser("accept", help="run acceptance criteria")
    s.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    pre, _ = ap.parse_known_args(argv)
    if not pre.config:
        return ap.parse_args(argv)
    try:
        cfg = json.loads(Path(pre.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {pre.config}: {exc}") from exc
    args = ap.parse_args(argv)
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r} for command {args.command}")
        if dest not in explicit:
            setattr(args, dest, value)
    return args


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("VNLS_LOG", "WARNING").upper(), format="%(levelname)s %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.output_dir)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        results = COMMANDS[args.command](args, out)
        for r in results:
            r.seconds = r.seconds or time.perf_counter() - t0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VnlsError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL

    for r in results:
        print(r.report())
    passed = all(r.passed for r in results)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("output_dir", "config")}
    summary = {"command": args.command, "config": config, "passed": passed, "checks": [r.as_dict() for r in results]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    meta = {
        "started": started,
        "seconds": time.perf_counter() - t0,
        "check_seconds": {str(r.criterion): r.seconds for r in results},
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
