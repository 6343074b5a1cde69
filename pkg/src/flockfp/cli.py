"""Command-line entry point: ``flockfp {phase,simulate,linearize,rates}``."""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import SCHEMA, RunConfig, format_value, load_config, parse_config
from .errors import ConfigError, FlockFPError, HypothesisViolated
from .model import ModelParams
from .quadrature import QuadSpec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# --------------------------------------------------------------------------- helpers


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _quad_spec(cfg: RunConfig) -> QuadSpec:
    try:
        return QuadSpec(rel_tol=cfg["quad.rel_tol"], n_theta=cfg["quad.n_theta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _model(cfg: RunConfig, spec: QuadSpec) -> ModelParams:
    from .phase import find_D_star

    d, alpha = cfg["model.d"], cfg["model.alpha"]
    try:
        if cfg.is_set("model.D"):
            return ModelParams(d, alpha, cfg["model.D"])
        if alpha <= 0:
            raise ConfigError("model.D_rel needs alpha > 0; set model.D instead")
        ModelParams(d, alpha, 1.0)
        return ModelParams(d, alpha, cfg["model.D_rel"] * find_D_star(d, alpha, spec))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _threads() -> int:
    raw = os.environ.get("FLOCKFP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FLOCKFP_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _effective(cfg: RunConfig, derived: dict) -> RunConfig:
    """All keys with defaults and derived values made explicit."""
    eff = RunConfig()
    for key in SCHEMA:
        val = derived.get(key, cfg[key])
        if val is not None:
            eff.values[key] = val
    return eff


def _write_csv(path: str | None, eff: RunConfig, header, rows, extra_comments=()):
    buf = io.StringIO()
    buf.write(f"# flockfp {__version__}\n")
    buf.write(f"# config_sha256 = {eff.digest()}\n")
    buf.write(f"# quad.rel_tol = {format_value(eff['quad.rel_tol'])}\n")
    buf.write(f"# quad.n_theta = {eff['quad.n_theta']}\n")
    for line in eff.serialize().splitlines():
        buf.write(f"# config: {line}\n")
    for line in extra_comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_trajectory(path: str):
    """Read a simulate CSV: returns (config RunConfig, header, float array)."""
    cfg_lines, data_lines = [], []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("# config: "):
                    cfg_lines.append(line[len("# config: "):])
                elif not line.startswith("#"):
                    data_lines.append(line)
    except OSError as exc:
        raise ConfigError(f"cannot read trajectory {path!r}: {exc}") from None
    if not data_lines:
        raise ConfigError(f"{path!r} has no data")
    reader = csv.reader(data_lines)
    header = next(reader)
    try:
        rows = [[float(x) if x != "" else math.nan for x in row] for row in reader]
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise ConfigError(f"{path!r} is not a numeric trajectory: {exc}") from None
    return parse_config("".join(cfg_lines)), header, data


# --------------------------------------------------------------------------- phase


PHASE_HEADER = ["D", "D_rel", "regime", "r_D", "V_second_rD", "V_fourth_0", "kappa", "eta", "beta",
                "a", "b", "Lambda", "mu1", "mu2", "delta"]


def _phase_row(args):
    from .phase import phase_record

    params, eps, spec, coer, Ds = args
    rec = phase_record(params, eps, spec, with_coercivity=coer)
    co = rec.coercivity
    pl = rec.pl
    second = pl.curvature if rec.regime != "critical" else None
    fourth = pl.curvature if rec.regime == "critical" else None
    pol = [co.kappa, co.eta, co.beta, co.a, co.b, co.Lambda] if co else [None] * 6
    return [params.D, params.D / Ds, rec.regime, rec.r_D, second, fourth, *pol,
            pl.mu1, pl.mu2, pl.delta]


def cmd_phase(cfg: RunConfig, out: str | None) -> int:
    from .phase import find_D_star

    spec = _quad_spec(cfg)
    d, alpha = cfg["model.d"], cfg["model.alpha"]
    try:
        ModelParams(d, alpha, 1.0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    Ds = find_D_star(d, alpha, spec)
    rels = cfg["phase.D_rel_values"]
    if cfg.is_set("model.D"):
        # an explicit noise level overrides the sweep
        rels = (_model(cfg, spec).D / Ds,)
    if rels is None:
        n = cfg["phase.n_D"]
        if n < 1:
            raise ConfigError("phase.n_D must be >= 1")
        rels = tuple(np.linspace(cfg["phase.D_rel_min"], cfg["phase.D_rel_max"], n).tolist())
    if any(r <= 0 for r in rels):
        raise ConfigError("relative noise values must be positive")
    coer = cfg["phase.coercivity"] == "yes"
    jobs = [(ModelParams(d, alpha, rel * Ds), cfg["phase.eps"], spec, coer, Ds) for rel in rels]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_phase_row, jobs))
    else:
        rows = [_phase_row(j) for j in jobs]
    eff = _effective(cfg, {"phase.D_rel_values": tuple(float(r) for r in rels)})
    _write_csv(out, eff, PHASE_HEADER, rows, [f"D_star = {Ds!r}"])
    return EXIT_OK


# --------------------------------------------------------------------------- simulate


def simulate_header(d: int):
    return (["t", "F", "F_gap", "H_rel_star", "H_rel_inf", "I"]
            + [f"uf_{k + 1}" for k in range(d)]
            + ["dist_S", "Q1"] + [f"M{k}" for k in range(9)]
            + ["res_eq6", "res_eq7", "res_eq8", "res_debruijn"])


def record_row(rec):
    return ([rec.t, rec.F, rec.F_gap, rec.H_rel_star, rec.H_rel_inf, rec.I]
            + [float(x) for x in rec.u_f] + [rec.dist_S, rec.Q1] + [float(m) for m in rec.M]
            + [rec.res_eq6, rec.res_eq7, rec.res_eq8, rec.res_debruijn])


def prepare_simulation(cfg: RunConfig):
    """Resolve model, solver config and initial data; returns (params, scfg, f0, report, derived)."""
    from .phase import equilibrium_speed
    from .solver import SolverConfig, initial_data

    spec = _quad_spec(cfg)
    params = _model(cfg, spec)
    if params.d not in (1, 2):
        raise ConfigError("simulate supports model.d in {1, 2}")
    t_end = cfg["solver.t_end"]
    if t_end is None:
        t_end = cfg["solver.t_end_scaled"] / params.D
    try:
        scfg = SolverConfig(L=cfg["solver.L"], n=cfg["solver.n"], dt=cfg["solver.dt"],
                            t_end=t_end, coupling=cfg["solver.coupling"],
                            output_stride=cfg["solver.output_stride"],
                            cfl_max=cfg["solver.cfl_max"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    speed = equilibrium_speed(params, spec)
    scfg = scfg.resolve(params, speed if speed > 0 else 1.0)
    grid = scfg.grid(params.d)
    u0 = cfg["init.u0"]
    if u0 is not None and len(u0) != params.d:
        raise ConfigError("init.u0 must have model.d components")
    center = cfg["init.center"]
    if center is not None and len(center) != params.d:
        raise ConfigError("init.center must have model.d components")
    if u0 is None:
        u0 = tuple([speed] + [0.0] * (params.d - 1))
    if center is None:
        c0 = np.array(u0) * 1.2 if any(u0) else np.eye(params.d)[0] * 1.2
        center = tuple(float(x) for x in c0)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", HypothesisViolated)
            f0, report = initial_data(cfg["init.kind"], params, grid, seed=cfg["seed"], u0=u0,
                                      eps=cfg["init.eps"], center=center,
                                      width=cfg["init.width"], weight=cfg["init.weight"],
                                      spec=spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    derived = {"model.D": params.D, "solver.L": scfg.L, "solver.n": scfg.n, "solver.dt": scfg.dt,
               "solver.t_end": scfg.t_end, "init.u0": tuple(float(x) for x in u0),
               "init.center": tuple(float(x) for x in center)}
    return params, scfg, f0, report, derived, spec


def cmd_simulate(cfg: RunConfig, out: str | None) -> int:
    from .solver import run

    params, scfg, f0, report, derived, spec = prepare_simulation(cfg)
    result = run(f0, scfg, params, spec=spec)
    rows = [record_row(r) for r in result.records]
    eff = _effective(cfg, derived)
    comments = [
        f"init.F = {report.free_energy!r}",
        f"init.F_minus_F_G0 = {report.free_energy_gap_G0!r}",
        f"init.max_weighted_L2 = {report.max_weighted_l2!r}",
        f"init.admissible = {report.admissible}",
    ]
    if result.u_inf is not None:
        comments.append("u_inf = " + ",".join(repr(float(x)) for x in result.u_inf))
    _write_csv(out, eff, simulate_header(params.d), rows, comments)
    return EXIT_OK


# --------------------------------------------------------------------------- linearize


def linearize_report(cfg: RunConfig):
    """Constants and violation counts of the linearized inequalities."""
    from . import linearized as lin
    from .grid import Grid
    from .phase import require_r_of_D
    from .solver import SolverConfig

    spec = _quad_spec(cfg)
    params = _model(cfg, spec)
    if params.d not in (1, 2):
        raise ConfigError("linearize supports model.d in {1, 2}")
    r = require_r_of_D(params, spec)
    scfg = SolverConfig(n=cfg["linearize.n"]).resolve(params, r)
    grid = scfg.grid(params.d)
    consts = lin.linearized_constants(params, grid, eps=cfg["phase.eps"], spec=spec)
    u = np.zeros(params.d)
    u[0] = r
    anchor = lin.Anchor.at(grid, params, u, spec)
    rng = np.random.default_rng(cfg["seed"])
    n = cfg["linearize.n_samples"]
    if n < 1:
        raise ConfigError("linearize.n_samples must be >= 1")
    counts = dict.fromkeys(["q2_vs_q1", "q1_vs_l2", "grad_lower", "grad_upper", "L_symmetry",
                            "remainder_B", "remainder_K", "ustar_prime_bound",
                            "moment_weighted"], 0)
    sym_worst = 0.0
    rtol = 1e-10
    for _ in range(n):
        p = lin.aligned_perturbation(anchor, rng)
        p2 = lin.aligned_perturbation(anchor, rng)
        Q1, Q2 = lin.q1(p), lin.q2(p)
        nrm, grd = lin.l2_norm_sq(p), lin.grad_norm_sq(p)
        counts["q2_vs_q1"] += Q2 < consts.beta**2 * Q1 * (1 - rtol)
        counts["q1_vs_l2"] += Q1 < consts.eta**2 * nrm * (1 - rtol)
        counts["grad_lower"] += consts.a * math.sqrt(Q2) > math.sqrt(grd) * (1 + rtol)
        counts["grad_upper"] += math.sqrt(grd) > consts.b * math.sqrt(Q2) * (1 + rtol)
        # L symmetry against the weak-form discretization estimate
        lhs = lin.inner_arrays(anchor, lin.apply_L(p), p2.g)
        rhs = lin.inner_arrays(anchor, lin.apply_L(p2), p.g)
        weak = lin.weak_L_form(p, p2)
        est = abs(lhs - weak) + abs(rhs - weak) + 1e-14 * abs(weak)
        sym_worst = max(sym_worst, abs(lhs - rhs) / est)
        counts["L_symmetry"] += abs(lhs - rhs) > 10 * est
        # remainder bounds: unconstrained small perturbation, re-anchored at u_*
        q = lin.random_perturbation(anchor, rng)
        f = q.scaled(0.05 / max(1e-300, float(np.max(np.abs(q.g))))).density()
        small = lin.projected_perturbation(f, params, r, spec)
        usp = lin.u_star_prime(f, r, params)
        R = lin.remainder_R(small, usp)
        q1s, q2s = lin.q1(small), lin.q2(small)
        bound_B = consts.B_D * max(float(np.linalg.norm(small.v_g)), float(np.linalg.norm(usp))) * q2s
        counts["remainder_B"] += abs(R) > bound_B * (1 + rtol)
        counts["remainder_K"] += R > consts.K_D * q2s * math.sqrt(max(q1s, 0.0)) * (1 + rtol)
        usp_cap = 2 * params.alpha / (r * consts.eta) * math.sqrt(consts.W6 * max(q1s, 0.0))
        counts["ustar_prime_bound"] += float(np.linalg.norm(usp)) > usp_cap * (1 + rtol) + 1e-14
        counts["moment_weighted"] += lin.moment_weighted_bound_check(p, consts.C_D) > 0
    return params, consts, counts, sym_worst, grid


def cmd_linearize(cfg: RunConfig, out: str | None) -> int:
    params, c, counts, sym_worst, grid = linearize_report(cfg)
    rows = [(k, getattr(c, k)) for k in ("D", "r", "kappa", "eta", "beta", "a", "b", "Lambda", "W2",
                                         "W6", "C_D", "gamma", "B_D", "K_D", "A_D", "mu", "delta")]
    rows.append(("two_beta_sq", 2 * c.beta**2))
    rows += [(f"violations_{k}", v) for k, v in counts.items()]
    rows.append(("L_symmetry_worst_ratio", sym_worst))
    rows.append(("samples", cfg["linearize.n_samples"]))
    eff = _effective(cfg, {"model.D": params.D, "linearize.n": grid.n})
    _write_csv(out, eff, ["quantity", "value"], rows)
    return EXIT_OK


# --------------------------------------------------------------------------- rates


def cmd_rates(cfg: RunConfig, out: str | None) -> int:
    from .diagnostics import fit_rate
    from .phase import coercivity_constants, regime

    path = cfg["rates.input"]
    if path is None:
        raise ConfigError("rates.input (trajectory CSV) is required")
    tcfg, header, data = read_trajectory(path)
    col = {name: data[:, i] for i, name in enumerate(header)}
    if "t" not in col:
        raise ConfigError("trajectory has no 't' column")
    t = col["t"]
    spec = _quad_spec(tcfg)
    params = _model(tcfg, spec) if "model.d" in tcfg.values else None
    kind = regime(params, spec) if params is not None else "unknown"
    uf_cols = [k for k in header if k.startswith("uf_")]
    series = {}
    for name in ("Q1", "H_rel_inf", "H_rel_star", "F_gap"):
        if name in col:
            series[name] = col[name]
    if uf_cols:
        uf = np.stack([col[k] for k in uf_cols], axis=-1)
        series["uf_dist_inf_sq"] = np.sum((uf - uf[-1]) ** 2, axis=-1)
        series["uf_norm"] = np.sqrt(np.sum(uf**2, axis=-1))
    rows = []
    opts = dict(window=cfg["rates.window"], min_points=cfg["rates.min_points"],
                floor_rel=cfg["rates.floor_rel"])
    fits = [("exponential", name) for name in series if name != "uf_norm"]
    if kind in ("critical", "isotropic"):
        fits += [("algebraic", name) for name in ("F_gap", "H_rel_star", "uf_norm") if name in series]
    for fit_kind, name in fits:
        y = series[name]
        ok = np.isfinite(y) & (t > 0 if fit_kind == "algebraic" else np.ones_like(t, bool))
        if name == "uf_dist_inf_sq":
            ok &= np.arange(t.size) < t.size - 1  # the last sample is zero by construction
        try:
            fit = fit_rate(t[ok], y[ok], kind=fit_kind, **opts)
            rows.append([name, fit_kind, kind, fit.rate, fit.r_squared, fit.n_points,
                         fit.t_start, fit.t_end])
        except FlockFPError as exc:
            rows.append([name, fit_kind, kind, None, None, 0, None, None])
            print(f"warning: {name} ({fit_kind}): {exc}", file=sys.stderr)
    comments = [f"regime = {kind}"]
    if kind == "polarized":
        beta = coercivity_constants(params, spec).beta
        comments.append(f"two_beta_sq = {2 * beta**2!r}")
        for row in rows:
            if row[1] == "exponential" and row[3] is not None and row[0] in ("Q1", "H_rel_inf"):
                comments.append(f"{row[0]}_rate_over_two_beta_sq = {row[3] / (2 * beta**2)!r}")
    eff = _effective(cfg, {})
    _write_csv(out, eff, ["series", "fit", "regime", "rate", "r_squared", "n_points", "t_start",
                          "t_end"], rows, comments)
    return EXIT_OK


# --------------------------------------------------------------------------- entry


COMMANDS = {"phase": cmd_phase, "simulate": cmd_simulate, "linearize": cmd_linearize,
            "rates": cmd_rates}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flockfp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"flockfp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", help="output CSV path (stdout if omitted)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration entry (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlockFPError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
