"""Config-driven command line runner.

Every task reads a JSON config validated against ``schema/config.schema.json``,
writes its results plus ``resolved_config.json`` and ``manifest.json`` into
``--out-dir``, and exits with

* 0 on success,
* 1 when an invariant gate fails,
* 2 on a config or precondition error,
* 3 on a numerical-precision abort.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from numpy.polynomial import Polynomial

from . import __version__
from . import contour as ct
from . import gle, heatstats, microdyn, qexact
from .errors import (
    DivergenceError,
    NeclError,
    NumericalStateError,
    PrecisionError,
    PreconditionError,
)
from .microdyn import Experiment, SystemSpec
from .reservoir import ReservoirSpec, SwitchingProtocol
from .spectral import ModeSet, SpectralDensity, discretize

TASKS = ("simulate", "mgf", "greens", "influence", "quantum", "verify-ft", "verify-fdr", "classical-limit")

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_PRECISION = 0, 1, 2, 3


class ConfigError(Exception):
    """Schema violation; the message carries the offending field path."""


# ---------------------------------------------------------------------------
# config


def load_schema() -> dict:
    return json.loads(resources.files("necl").joinpath("schema/config.schema.json").read_text())


def _with_defaults(cls):
    props = cls.VALIDATORS["properties"]

    def fill(validator, properties, instance, schema):
        if isinstance(instance, dict):
            for name, sub in properties.items():
                if "default" in sub and name not in instance:
                    instance[name] = copy.deepcopy(sub["default"])
        yield from props(validator, properties, instance, schema)

    return jsonschema.validators.extend(cls, {"properties": fill})


_Filling = _with_defaults(jsonschema.Draft202012Validator)


def _path(err) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def resolve_config(raw: dict) -> dict:
    """Validate ``raw`` and return a copy with every default filled in."""
    cfg = copy.deepcopy(raw)
    schema = load_schema()
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_path(e)}: {e.message}")
    _Filling(schema).validate(cfg)
    return cfg


def read_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg = resolve_config(raw)
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    return hashlib.sha256(json.dumps(clean, sort_keys=True).encode()).hexdigest()


def _per_mode(value, n: int) -> np.ndarray:
    a = np.asarray(value, float)
    return np.full(n, float(a)) if a.ndim == 0 else a


def build_switching(cfg: dict, tau: float) -> SwitchingProtocol:
    kind = cfg["kind"]
    stop = tau if cfg["stop"] is None else cfg["stop"]
    if kind == "off":
        return SwitchingProtocol.off()
    if kind == "constant":
        return SwitchingProtocol.constant(cfg["amplitude"], cfg["start"], stop)
    if kind == "ramp":
        return SwitchingProtocol.ramp(cfg["amplitude"], cfg["start"], stop, cfg["ramp_up"], cfg["ramp_down"])
    if "times" not in cfg or "values" not in cfg:
        raise ConfigError("config error at /reservoirs/*/switching: tabulated switching needs times and values")
    return SwitchingProtocol.tabulated(cfg["times"], cfg["values"])


def build_reservoir(cfg: dict, tau: float, base: str = ".") -> ReservoirSpec:
    if "modes" in cfg:
        mc = cfg["modes"]
        omega = np.asarray(mc["omega"], float)
        n = omega.size
        modes = ModeSet(_per_mode(mc.get("m", 1.0), n), omega, np.asarray(mc["c"], float))
    else:
        sc = cfg["spectral"]
        kind = sc["kind"]
        if kind == "single-mode-delta":
            spec = SpectralDensity.single_mode(sc["mass"], sc["omega0"], sc["coupling"])
        elif kind == "tabulated":
            if "table_csv" in sc:
                spec = SpectralDensity.from_csv(Path(base) / sc["table_csv"])
            elif "table" in sc:
                spec = SpectralDensity.from_table(sc["table"])
            else:
                raise ConfigError("config error at /reservoirs/*/spectral: tabulated density needs table or table_csv")
        else:
            spec = SpectralDensity.ohmic(sc["eta"], sc["omega_c"])
        modes = discretize(spec, sc["count"], sc["omega_max"], sc["scheme"])
    n = len(modes)
    modes = modes.with_quench(r=_per_mode(cfg["r"], n), L=_per_mode(cfg["L"], n))
    return ReservoirSpec(cfg["beta"], modes, build_switching(cfg["switching"], tau), cfg["name"])


def build_system(cfg: dict) -> SystemSpec:
    return SystemSpec(
        mass=cfg["mass"],
        potential=cfg["potential"],
        omega=cfg["omega"],
        quartic=cfg["quartic"],
        coefficients=tuple(cfg["coefficients"]),
        couplings=tuple(tuple(c) for c in cfg["couplings"]),
        initial=cfg["initial"],
        x0=cfg["x0"],
        p0=cfg["p0"],
        beta=cfg["beta"],
    )


def build_experiment(cfg: dict) -> Experiment:
    base = cfg.get("_base", ".")
    res = tuple(build_reservoir(r, cfg["tau"], base) for r in cfg["reservoirs"])
    return Experiment(build_system(cfg["system"]), res, cfg["tau"], cfg["dt"], seed=cfg["seed"])


def lambda_grid(cfg: dict) -> np.ndarray:
    width = 1 + len(cfg["reservoirs"])
    g = cfg["lambda_grid"]
    if g is None:
        return np.zeros((1, width))
    g = np.asarray(g, float)
    if g.ndim != 2 or g.shape[1] != width:
        raise ConfigError(f"config error at /lambda_grid: rows must have {width} entries (lambda_S and one per reservoir)")
    return g


def resolve_threads(flag: int | None, cfg: dict | None) -> int:
    if flag is not None:
        return max(1, flag)
    if cfg is not None and cfg.get("threads") is not None:
        return cfg["threads"]
    env = os.environ.get("NECL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"NECL_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


class Outputs:
    """Collects written files for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def csv(self, name: str, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def json(self, name: str, data):
        self.path(name).write_text(json.dumps(qexact._jsonable(data), indent=2, sort_keys=True))


def ensemble(exp: Experiment, n: int, threads: int, chunk: int, method: str = "auto") -> microdyn.EnsembleResult:
    """Run ``n`` trajectories in fixed-size chunks and merge them in index order.

    Chunk boundaries depend only on ``chunk``, so the result does not depend
    on the number of threads.
    """
    if n < 1:
        raise PreconditionError("trajectory count must be positive")
    starts = list(range(0, n, chunk))

    def one(s):
        return microdyn.run_ensemble(exp, min(chunk, n - s), start=s, batch=chunk, method=method)

    if threads == 1 or len(starts) == 1:
        parts = [one(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, starts))
    return microdyn.EnsembleResult.concatenate(parts)


def _trajectory_rows(res: microdyn.EnsembleResult):
    audit = res.audit_residual
    for i in range(res.n):
        yield (
            int(res.trajectories[i]),
            res.dE_S[i],
            *res.dE_res[i],
            *res.dE_sq[i],
            *res.dE_dp[i],
            *res.work[i],
            res.dE_coupling[i],
            res.drift[i],
            audit[i],
        )


def _trajectory_header(R: int):
    cols = ["trajectory", "dE_S"]
    for key in ("dE", "dE_sq", "dE_dp", "W"):
        cols += [f"{key}_{nu + 1}" for nu in range(R)]
    return cols + ["dE_coupling", "drift", "audit"]


# ---------------------------------------------------------------------------
# tasks; each returns (summary scalars, gate passed)


def task_simulate(cfg, out: Outputs, threads: int, dump_paths: int):
    exp = build_experiment(cfg)
    n = cfg["trajectories"]
    res = ensemble(exp, n, threads, cfg["chunk"], method="batch")
    out.csv("trajectories.csv", _trajectory_header(len(exp.reservoirs)), _trajectory_rows(res))
    for i in range(min(dump_paths, n)):
        rec = microdyn.simulate_trajectory(exp, i, decimate=1)
        rec.write_csv(out.path(f"paths/trajectory_{i:06d}.csv"))
    audit = np.abs(res.audit_residual)
    bound = cfg["gates"]["audit_factor"] * res.drift + 1e-12
    summary = {
        "n": res.n,
        "mean_dE_S": float(np.mean(res.dE_S)),
        "mean_Q": res.Q.mean(0).tolist(),
        "mean_work": res.work.mean(0).tolist(),
        "max_abs_audit": float(audit.max()),
        "max_drift": float(np.max(res.drift)),
    }
    return summary, bool(np.all(audit <= bound))


def task_mgf(cfg, out: Outputs, threads: int, dump_paths: int):
    exp = build_experiment(cfg)
    n = cfg["trajectories"]
    if n < 2:
        raise PreconditionError("an MGF estimate needs at least two trajectories")
    res = ensemble(exp, n, threads, cfg["chunk"])
    est = heatstats.estimate_mgf(res, lambda_grid(cfg), flavor=cfg["flavor"])
    est.write_csv(out.path("mgf.csv"))
    est.write_json(out.path("mgf.json"))
    mean, se = heatstats.sample_means(res, cfg["flavor"])
    out.csv("means.csv", ["quantity", "mean", "stderr"], zip(["dE_S"] + [f"X_{k + 1}" for k in range(len(mean) - 1)], mean, se))
    summary = {"n": res.n, "M": est.values.tolist(), "stderr": est.stderr.tolist(), "low_ess": int(est.low_ess.sum())}
    return summary, True


def task_verify_ft(cfg, out: Outputs, threads: int, dump_paths: int):
    exp = build_experiment(cfg)
    n = cfg["trajectories"]
    if n < 2:
        raise PreconditionError("the fluctuation theorem check needs at least two trajectories")
    if exp.system.initial != microdyn.THERMAL:
        raise PreconditionError("the fluctuation theorem needs a thermal system")
    fw = ensemble(exp, n, threads, cfg["chunk"])
    rv = ensemble(microdyn.reverse_experiment(exp, seed=exp.seed + 1), n, threads, cfg["chunk"])
    tab = heatstats.verify_ft(
        fw, rv, lambda_grid(cfg), flavor=cfg["flavor"], betas=[r.beta for r in exp.reservoirs], beta_S=exp.system.beta
    )
    R = len(exp.reservoirs)
    header = ["lambda_S"] + [f"lambda_{k + 1}" for k in range(R)] + ["lhs", "lhs_err", "rhs", "rhs_err", "residual", "z"]
    out.csv("ft.csv", header, (list(g) + [a, b, c, d, e, f] for g, a, b, c, d, e, f in zip(tab.grid, tab.lhs, tab.lhs_err, tab.rhs, tab.rhs_err, tab.residual, tab.z)))
    frac = tab.pass_fraction(cfg["gates"]["ft_sigma"])
    summary = {"n": n, "pass_fraction": frac, "max_abs_z": float(np.max(np.abs(tab.z)))}
    return summary, frac >= cfg["gates"]["ft_pass_fraction"]


def _gf_params(g: dict, cfg: dict) -> ct.GfParams:
    return ct.GfParams(g["omega"], g["beta"], g["lam"], cfg["hbar"], r=g["r"], tau=cfg["tau"])


def _scan_coordinates(geo, branch: str, n: int) -> np.ndarray:
    a, b = geo.interval(branch)
    return np.linspace(a, b, n)


def task_greens(cfg, out: Outputs, threads: int, dump_paths: int):
    g = cfg["greens"]
    p = _gf_params(g, cfg)
    geo = ct._Geometry.quenched(p) if p.r else ct._Geometry.of(p)
    summary = {}
    for name in g["components"]:
        i, j = name.split(",")
        s = _scan_coordinates(geo, i, g["points"])
        if j in (ct.MINUS, ct.PLUS):
            s2 = min(g["t_prime"], cfg["tau"])
        else:
            s2 = float(np.mean(geo.interval(j)))
        if p.r:
            vals = np.array([ct.squeezed_correction(ct.ContourPoint(i, a), ct.ContourPoint(j, s2), p) for a in s])
        else:
            vals = np.asarray(ct.component(i, j, s, s2, p), complex)
        out.csv(f"greens_{i}_{j}.csv", ["t", "t_prime", "re", "im"], ((a, s2, v.real, v.imag) for a, v in zip(s, vals)))
        summary[name] = float(np.max(np.abs(vals)))
    return {"max_abs": summary}, True


def task_influence(cfg, out: Outputs, threads: int, dump_paths: int):
    ic = cfg["influence"]
    t = np.linspace(0.0, cfg["tau"], ic["points"])
    xm = Polynomial(ic["x_minus"])(t)
    xp = Polynomial(ic["x_plus"])(t)
    base = cfg.get("_base", ".")
    per = []
    for r in cfg["reservoirs"]:
        res = build_reservoir(r, cfg["tau"], base)
        per.append(ct.influence_action(xm, xp, res, ic["lam"], cfg["hbar"], t))
    total = complex(sum(per))
    out.json("influence.json", {"per_reservoir": per, "total": total})
    return {"re": total.real, "im": total.imag}, True


def _complex_list(pairs):
    return None if pairs is None else tuple(complex(a, b) for a, b in pairs)


def build_quantum(cfg: dict) -> qexact.QuantumModel:
    q = cfg["quantum"]
    base = cfg.get("_base", ".")
    res = tuple(build_reservoir(r, cfg["tau"], base) for r in cfg["reservoirs"])
    return qexact.QuantumModel(
        build_system(cfg["system"]),
        res,
        cfg["tau"],
        hbar=cfg["hbar"],
        system_cutoff=q["system_cutoff"],
        mode_cutoff=q["mode_cutoff"],
        alphas=_complex_list(q["alphas"]),
        squeezes=_complex_list(q["squeezes"]),
        budget=q["budget"],
    )


def task_quantum(cfg, out: Outputs, threads: int, dump_paths: int):
    model = build_quantum(cfg)
    grid = lambda_grid(cfg)
    tol = cfg["gates"]["quantum_tolerance"]
    dm = qexact.DenseModel(model)
    values = [qexact.tpem_mgf(dm, g[0], g[1:]) for g in grid]
    R = len(model.reservoirs)
    head = ["lambda_S"] + [f"lambda_{k + 1}" for k in range(R)]
    out.csv("quantum_mgf.csv", head + ["re", "im"], (list(g) + [v.real, v.imag] for g, v in zip(grid, values)))
    th = qexact.average_thermodynamics(dm)
    out.json("quantum_thermo.json", th.to_dict())
    if cfg["quantum"]["dump_operators"]:
        rho0, rhot = dm.evolve()
        qexact.dump_operator(out.path("rho_initial.bin"), rho0)
        qexact.dump_operator(out.path("rho_final.bin"), rhot)
    ok = abs(th.split_residual) < tol and abs(th.first_law_residual) < tol
    summary = {"M": values, "sigma": th.sigma, "mutual_information": th.mutual_information, "split_residual": th.split_residual}
    if model.system.initial == microdyn.THERMAL:
        ft = qexact.quantum_ft_check(model, [(g[0], tuple(g[1:])) for g in grid])
        out.csv(
            "quantum_ft.csv",
            head + ["forward_re", "forward_im", "reverse_re", "reverse_im", "residual", "control_residual"],
            (
                [r.lam_S, *r.lam_B, r.forward.real, r.forward.imag, r.reverse.real, r.reverse.imag, r.residual, r.control_residual]
                for r in ft.rows
            ),
        )
        summary["ft_max_residual"] = ft.max_residual
        ok &= ft.max_residual < tol
    if cfg["quantum"]["ladder"]:
        g0 = grid[0]

        def scalars(m):
            d = qexact.DenseModel(m)
            t = qexact.average_thermodynamics(d)
            return {"M": qexact.tpem_mgf(d, g0[0], g0[1:]), "Q": t.Q, "sigma": t.sigma}

        qexact.ladder_check(scalars, model)
        summary["ladder"] = "stable"
    return summary, bool(ok)


def task_verify_fdr(cfg, out: Outputs, threads: int, dump_paths: int):
    f = cfg["fdr"]
    p = ct.GfParams(f["omega"], f["beta"], f["lam"], cfg["hbar"], tau=cfg["tau"])
    n = f["points"]
    tau = cfg["tau"]
    ts = tau * (np.arange(n) + 0.5) / n
    pairs = list(zip(ts, ts[::-1]))
    vals = [ct.fdr_residual(a, b, p) for a, b in pairs]
    out.csv("fdr_residual.csv", ["t", "t_prime", "re", "im", "abs"], ((a, b, v.real, v.imag, abs(v)) for (a, b), v in zip(pairs, vals)))
    worst = max(abs(v) for v in vals)
    return {"max_abs_residual": worst}, worst < cfg["gates"]["fdr_tolerance"]


def task_classical_limit(cfg, out: Outputs, threads: int, dump_paths: int):
    c = cfg["classical_limit"]
    rows, orders, ok = [], {}, True
    for comp in ct.EXPECTED_REMAINDER_ORDER:
        rep = ct.classical_limit_check(comp, c["t"], c["t_prime"], c["lam"], c["beta"], omega=c["omega"], hbars=tuple(c["hbars"]))
        for h, e, l, r in zip(rep.hbars, rep.exact, rep.leading, rep.remainder):
            rows.append((comp, h, e.real, e.imag, l.real, l.imag, r))
        orders[comp] = rep.fitted_order if np.isfinite(rep.fitted_order) else None
        if np.isfinite(rep.fitted_order):
            ok &= abs(rep.fitted_order - rep.expected_order) <= cfg["gates"]["order_tolerance"]
        else:
            ok &= max(rep.remainder) == 0.0
    out.csv("classical_limit.csv", ["component", "hbar", "exact_re", "exact_im", "leading_re", "leading_im", "remainder"], rows)
    return {"fitted_order": orders}, bool(ok)


TASK_FUNCS = {
    "simulate": task_simulate,
    "mgf": task_mgf,
    "greens": task_greens,
    "influence": task_influence,
    "quantum": task_quantum,
    "verify-ft": task_verify_ft,
    "verify-fdr": task_verify_fdr,
    "classical-limit": task_classical_limit,
}


# ---------------------------------------------------------------------------
# plot-ready data


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _write_dat(out: Outputs, name: str, header, rows):
    with open(out.path(name), "w", newline="") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            fh.write(" ".join(_fmt(v) for v in r) + "\n")


def emit_plots(out_dir: Path, points: int = 200) -> list[str]:
    """Turn result files in ``out_dir`` into whitespace-separated column files.

    * ``mgf_slice_lambda_<k>.dat``: grid value, M and its standard error along
      each counting field, holding the others at the first grid row.
    * ``kernel_C2_<reservoir>.dat``: the noise kernel ``C2(t, 0)`` on
      ``points`` times in ``[0, tau]`` (needs ``resolved_config.json``).
    * ``gf_scan_<i>_<j>.dat``: ``t - t'``, Re and Im of each Green's-function scan.
    """
    out = Outputs(out_dir / "plots")
    found = False
    mgf = out_dir / "mgf.csv"
    if mgf.exists():
        found = True
        header, rows = _read_csv(mgf)
        data = np.array([[float(v) for v in r[:-1]] for r in rows])
        width = sum(1 for h in header if h.startswith("lambda"))
        iM, iS = header.index("M"), header.index("stderr")
        ref = data[0, :width]
        for k in range(width):
            others = [j for j in range(width) if j != k]
            sel = np.all(data[:, others] == ref[others], axis=1)
            part = data[sel]
            part = part[np.argsort(part[:, k], kind="stable")]
            _write_dat(out, f"mgf_slice_{header[k]}.dat", [header[k], "M", "stderr"], part[:, [k, iM, iS]])
    resolved = out_dir / "resolved_config.json"
    if resolved.exists():
        found = True
        cfg = json.loads(resolved.read_text())
        t = np.linspace(0.0, cfg["tau"], points)
        for nu, r in enumerate(cfg["reservoirs"]):
            res = build_reservoir(r, cfg["tau"], cfg.get("_base", "."))
            name = r["name"] or f"reservoir{nu + 1}"
            c2 = gle.noise_kernel(res.modes, t, 0.0, res.beta)
            _write_dat(out, f"kernel_C2_{name}.dat", ["t", "C2"], zip(t, c2))
            if np.any(res.modes.r != 0):
                sq = gle.noise_kernel(res.modes, t, 0.0, res.beta, squeezed=True)
                _write_dat(out, f"kernel_C2sq_{name}.dat", ["t", "C2sq"], zip(t, sq))
    for gf in sorted(out_dir.glob("greens_*.csv")):
        found = True
        _, rows = _read_csv(gf)
        vals = np.array(rows, float)
        _write_dat(out, gf.stem.replace("greens_", "gf_scan_") + ".dat", ["t_minus_t_prime", "re", "im"], zip(vals[:, 0] - vals[:, 1], vals[:, 2], vals[:, 3]))
    if not found:
        raise ConfigError(f"no result files in {out_dir}")
    return out.files


# ---------------------------------------------------------------------------
# entry point


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def run(task: str, cfg: dict, out_dir: Path, threads: int, dump_paths: int = 0) -> tuple[int, dict]:
    """Execute ``task`` and write results plus the manifest. Returns (exit code, manifest)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    out = Outputs(out_dir)
    started = _now()
    out.json("resolved_config.json", {k: v for k, v in cfg.items()} | {"task": task})
    summary, ok = TASK_FUNCS[task](cfg, out, threads, dump_paths)
    manifest = {
        "task": task,
        "config_hash": config_hash(cfg | {"task": task}),
        "version": __version__,
        "started": started,
        "finished": _now(),
        "threads": threads,
        "outputs": out.files,
        "summary": qexact._jsonable(summary),
        "gate_passed": bool(ok),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return (EXIT_OK if ok else EXIT_GATE), manifest


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="necl", description="Non-equilibrium Caldeira-Leggett experiments.")
    ap.add_argument("--version", action="version", version=f"necl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in TASKS:
        s = sub.add_parser(name, help=f"run the {name} task")
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--out-dir", default="necl-out", help="directory for results (default: necl-out)")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--threads", type=int, help="worker threads (default: config, NECL_THREADS, all cores)")
        s.add_argument("--dump-paths", type=int, default=0, metavar="K", help="also write full paths of the first K trajectories")
    pl = sub.add_parser("plots", help="write plot-ready column files from a result directory")
    pl.add_argument("--out-dir", default="necl-out")
    pl.add_argument("--points", type=int, default=200)
    acc = sub.add_parser("acceptance", help="run the acceptance checks")
    acc.add_argument("--only", type=int, nargs="*", help="criterion numbers (default: all)")
    acc.add_argument("--out-dir", default=None, help="optionally write acceptance.json here")
    sub.add_parser("schema", help="print the config schema")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "schema":
            print(json.dumps(load_schema(), indent=2))
            return EXIT_OK
        if args.command == "plots":
            for f in emit_plots(Path(args.out_dir), args.points):
                print(f)
            return EXIT_OK
        if args.command == "acceptance":
            from . import acceptance

            results = acceptance.run(args.only)
            for r in results:
                print(r.line())
            if args.out_dir:
                Path(args.out_dir).mkdir(parents=True, exist_ok=True)
                data = [qexact._jsonable(r.__dict__) for r in results]
                (Path(args.out_dir) / "acceptance.json").write_text(json.dumps(data, indent=2))
            return EXIT_OK if all(r.passed for r in results) else EXIT_GATE
        cfg = read_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        threads = resolve_threads(args.threads, cfg)
        code, manifest = run(args.command, cfg, Path(args.out_dir), threads, args.dump_paths)
        print(json.dumps(manifest["summary"], sort_keys=True))
        if code == EXIT_GATE:
            print(f"necl: invariant gate failed for {args.command}", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"necl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrecisionError, NumericalStateError, DivergenceError) as exc:
        print(f"necl: precision abort: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except NeclError as exc:
        print(f"necl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
