"""Acceptance gate: one PASS/FAIL line per criterion (shown in the terminal summary)."""
import math
import time

import numpy as np
import pytest

import flockfp.linearized as lin
from flockfp.diagnostics import (Reference, cauchy_spread, csiszar_kullback_margin, fit_rate,
                                 free_energy, free_energy_lower_bound, identity_residuals,
                                 local_decay_bundle, relative_entropy_to_gibbs)
from flockfp.gibbs import H_of_r, K_of_r, V_analytic, V_and_derivatives
from flockfp.grid import GridDensity, discrete_gibbs
from flockfp.model import ModelParams
from flockfp.phase import (coercivity_constants, critical_integrals, find_D_star, require_r_of_D,
                           V_star)
from flockfp.solver import SolverConfig, Stepper, initial_data, run

pytestmark = pytest.mark.slow
ALPHA = 4.0


def polarized(d, rel=0.8):
    p = ModelParams(d, ALPHA, rel * find_D_star(d, ALPHA))
    return p, require_r_of_D(p)


def _clear_caches():
    for fn in (find_D_star, critical_integrals):
        if hasattr(fn, "cache_clear"):
            fn.cache_clear()


# --------------------------------------------------------------------------- 1


def test_c01_phase_transition(oracle, verdict):
    _clear_caches()
    t0 = time.perf_counter()
    out = []
    for d in (1, 2):
        Ds = find_D_star(d, ALPHA)
        num, den = critical_integrals(d, ALPHA, Ds)
        out.append((d, Ds, abs(num / den), abs(Ds / oracle[f"D_star_d{d}"] - 1)))
    elapsed = time.perf_counter() - t0
    ok = all(res <= 1e-10 and dev <= 1e-8 for _, _, res, dev in out) and elapsed < 10
    detail = "; ".join(f"d={d} D*={Ds:.12f} resid={res:.1e} vs_oracle={dev:.1e}"
                       for d, Ds, res, dev in out)
    verdict(1, ok, f"{detail}; {elapsed:.2f}s (<10s)")


# --------------------------------------------------------------------------- 2


def test_c02_polarized_branch(verdict):
    t0 = time.perf_counter()
    Ds = find_D_star(1, ALPHA)
    rels = np.linspace(0.5, 0.95, 12)[1:-1]  # 10 values strictly inside the interval
    worst_H = worst_V1 = 0.0
    min_V2 = math.inf
    rs = []
    for rel in rels:
        p = ModelParams(1, ALPHA, rel * Ds)
        r = require_r_of_D(p)
        rs.append(r)
        worst_H = max(worst_H, abs(H_of_r(p, r)) / K_of_r(p, r))
        worst_V1 = max(worst_V1, V_analytic(p, r, 1))
        min_V2 = min(min_V2, V_analytic(p, r, 2))
    elapsed = time.perf_counter() - t0
    decreasing = all(a > b for a, b in zip(rs, rs[1:]))
    ok = worst_H <= 1e-10 and worst_V1 <= 1e-9 and min_V2 > 0 and decreasing and elapsed < 30
    verdict(2, ok, f"max|H|/K={worst_H:.1e} max V'={worst_V1:.1e} min V''={min_V2:.3f} "
                   f"r decreasing={decreasing}; {elapsed:.1f}s (<30s)")


# --------------------------------------------------------------------------- 3


def test_c03_identity_suite(verdict):
    worst = 0.0
    ck_min = lb_min = math.inf
    n_pairs = 0
    rng = np.random.default_rng(2024)
    for d in (1, 2):
        p, r = polarized(d)
        grid = SolverConfig().resolve(p, r).grid(d)
        Vs = V_star(p)
        for k in range(50):
            f, _ = initial_data("gibbs_tilt", p, grid, seed=int(rng.integers(1 << 30)),
                                u0=rng.normal(size=d) * 0.6, eps=0.5, warn=False)
            e = rng.normal(size=d)
            # alternate arbitrary u and u on the sphere so every identity is exercised
            u = r * e / np.linalg.norm(e) if k % 2 else e
            res = [x for x in identity_residuals(f, p, u, V_star=Vs) if not math.isnan(x)]
            worst = max(worst, max(abs(x) for x in res))
            ck_min = min(ck_min, csiszar_kullback_margin(f, p))
            lb_min = min(lb_min, free_energy(f, p) - free_energy_lower_bound(f, p))
            n_pairs += 1
    ok = worst <= 1e-8 and ck_min >= 0 and lb_min >= 0
    verdict(3, ok, f"{n_pairs} pairs (d=1,2): max residual={worst:.1e} (<=1e-8) "
                   f"min CK margin={ck_min:.2e} min lower-bound margin={lb_min:.3f}")


# --------------------------------------------------------------------------- 4


def test_c04_stationarity(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for d, tol in ((1, 1e-10), (2, 1e-8)):
        p, r = polarized(d)
        cfg = SolverConfig().resolve(p, r)
        grid = cfg.grid(d)
        e = np.zeros(d)
        e[0] = 1.0
        if d == 2:
            e = np.array([0.6, 0.8])
        u = r * e
        f = GridDensity(grid, discrete_gibbs(grid, p, u))
        st = Stepper(grid, p, cfg.dt)
        for _ in range(10_000):
            f = st.step(f)
        H = relative_entropy_to_gibbs(f, p, u)
        du = float(np.linalg.norm(f.mean_velocity() - u))
        ok &= H <= tol and du <= tol
        parts.append(f"d={d} H={H:.1e} |u_f-u|={du:.1e} (tol {tol:.0e})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    verdict(4, ok, "; ".join(parts) + f"; {elapsed:.1f}s (<120s)")


# --------------------------------------------------------------------------- 5


@pytest.mark.parametrize("d", [1, 2])
def test_c05_symmetry_breaking(d, verdict):
    p, r = polarized(d)
    cfg = SolverConfig(t_end=50 / p.D, output_stride=50 if d == 1 else 100).resolve(p, r)
    grid = cfg.grid(d)
    u0 = np.array([r]) if d == 1 else r * np.array([0.6, 0.8])
    f0, rep = initial_data("gibbs_tilt", p, grid, seed=0, u0=u0, eps=0.3)
    res = run(f0, cfg, p, fill_u_inf=False)
    dist = res.records[-1].dist_S
    F = res.column("F")
    rise = float(np.max(np.diff(F)))
    F_tol = cfg.dissipation_tol(grid.h, float(np.max(np.abs(F))))
    uf = np.array([rec.u_f for rec in res.records])
    spread = cauchy_spread(res.times, uf, tail=0.2)
    ok = rep.admissible and dist <= 1e-3 and rise <= F_tol and spread <= 1e-4
    verdict(5, ok, f"d={d}: admissible={rep.admissible} dist_S={dist:.1e} (<=1e-3) "
                   f"max F increase={rise:.1e} (tol {F_tol:.0e}) "
                   f"Cauchy spread={spread:.1e} (<=1e-4)")


# --------------------------------------------------------------------------- 6


def test_c06_exponential_rate(verdict):
    t_start = time.perf_counter()
    p, r = polarized(1)
    cfg = SolverConfig(t_end=50 / p.D, output_stride=50).resolve(p, r)
    f0, rep = initial_data("gibbs_tilt", p, cfg.grid(1), seed=0, u0=[r], eps=0.3)
    res = run(f0, cfg, p)
    t = res.times
    Q1, H_inf = res.column("Q1"), res.column("H_rel_inf")
    beta = coercivity_constants(p).beta
    target = 0.9 * 2 * beta**2
    fq = fit_rate(t, Q1, floor_rel=1e-10)
    # the last sample of H[f|G_{u_inf}] is zero by construction
    fh = fit_rate(t[:-1], H_inf[:-1], floor_rel=1e-10)
    consts = lin.linearized_constants(p, cfg.grid(1))
    # the envelope applies once K_D Q1^(1/2) is comfortably below 1
    i0 = int(np.argmax(consts.K_D * np.sqrt(np.maximum(Q1, 0.0)) <= 0.5))
    du2 = np.array([(abs(u[0]) - r) ** 2 for u in res.column("u_f")])
    env = local_decay_bundle(t, Q1, res.column("H_rel_star"), du2, consts, t0=t[i0])["envelope"]
    elapsed = time.perf_counter() - t_start
    ok = fq.rate >= target and fh.rate >= target and env.holds_everywhere and elapsed < 300
    verdict(6, ok, f"rate Q1={fq.rate:.4f} H_inf={fh.rate:.4f} vs 0.9*2b^2={target:.4f}; "
                   f"envelope from t0={t[i0]:.2f} holds={env.holds_everywhere} "
                   f"(min margin {env.min_margin:.1e}); {elapsed:.0f}s (<300s)")


# --------------------------------------------------------------------------- 7


def _margins(q, co):
    Q1, Q2 = lin.q1(q), lin.q2(q)
    nrm, grd = lin.l2_norm_sq(q), lin.grad_norm_sq(q)
    return np.array([Q2 - co.beta**2 * Q1, Q1 - co.eta**2 * nrm,
                     math.sqrt(grd) - co.a * math.sqrt(Q2), co.b * math.sqrt(Q2) - math.sqrt(grd)])


def test_c07_coercivity_suite(verdict):
    parts, ok = [], True
    for d in (1, 2):
        p, r = polarized(d)
        co = coercivity_constants(p)
        u = np.zeros(d)
        u[0] = r
        base = SolverConfig().resolve(p, r).grid(d)
        a = lin.Anchor.at(base, p, u)
        rng = np.random.default_rng(7 + d)
        viol = 0
        for _ in range(500):
            m = _margins(lin.aligned_perturbation(a, rng), co)
            viol += int(np.sum(m < 0))
        # the same perturbation family evaluated on a grid and two refinements
        series = []
        for k in range(3):
            g = base.refine(2**k) if k else base
            ak = lin.Anchor.at(g, p, u)
            rk = np.random.default_rng(5)
            series.append(np.array([_margins(lin.aligned_perturbation(ak, rk), co)
                                    for _ in range(10)]))
        e1 = np.abs(series[0] - series[1])
        e2 = np.abs(series[1] - series[2])
        scale = np.abs(series[2]) + 1e-300
        converged = e1 <= 1e-12 * scale  # margins without derivatives are exact on every grid
        ratio = np.where(converged, np.inf, e1 / np.maximum(e2, 1e-300))
        second_order = bool(np.all(ratio >= 3.0))
        finite = ratio[np.isfinite(ratio)]
        med = float(np.median(finite)) if finite.size else math.inf
        ok &= viol == 0 and second_order
        parts.append(f"d={d}: violations={viol}/2000 refinement ratio median={med:.2f} "
                     f"min={float(np.min(ratio)):.2f} (>=3)")
    verdict(7, ok, "; ".join(parts))


# --------------------------------------------------------------------------- 8


def test_c08_linearization_consistency(verdict):
    eps = 1e-3
    parts, ok = [], True
    for d, n in ((1, None), (2, 256)):
        p, r = polarized(d)
        u = np.zeros(d)
        u[0] = r
        a = lin.Anchor.at(SolverConfig(n=n).resolve(p, r).grid(d), p, u)
        rng = np.random.default_rng(3)
        e1 = e2 = sym = 0.0
        for _ in range(25):
            qs = [lin.random_perturbation(a, rng), lin.aligned_perturbation(a, rng)]
            qs = [q.scaled(1 / math.sqrt(lin.l2_norm_sq(q))) for q in qs]
            for q in qs:
                e1 = max(e1, abs(lin.q1_from_free_energy(q, eps) / lin.q1(q) - 1))
                e2 = max(e2, abs(lin.q2_from_fisher(q, eps) / lin.q2(q) - 1))
            x, y = qs
            lhs = lin.inner_arrays(a, lin.apply_L(x), y.g)
            rhs = lin.inner_arrays(a, lin.apply_L(y), x.g)
            weak = lin.weak_L_form(x, y)
            est = abs(lhs - weak) + abs(rhs - weak)
            sym = max(sym, abs(lhs - rhs) / max(est, 1e-300))
        ok &= e1 <= 5 * eps and e2 <= 5 * eps and sym <= 10
        parts.append(f"d={d} n={a.grid.n}: Q1 err={e1 / eps:.2f}eps Q2 err={e2 / eps:.2f}eps "
                     f"(<=5eps) L-symmetry/estimate={sym:.2f} (<=10)")
    verdict(8, ok, "; ".join(parts))


# --------------------------------------------------------------------------- 9


def test_c09_dissipation_identity(verdict):
    p, r = polarized(1)
    grid = SolverConfig(n=400).resolve(p, r).grid(1)
    f0, rep = initial_data("gibbs_tilt", p, grid, seed=0, u0=[r], eps=0.3)
    res = []
    for dt in (0.02, 0.01, 0.005):
        st = Stepper(grid, p, dt)
        f = f0
        for _ in range(int(round(1.0 / dt))):
            f = st.step(f)
        f1 = st.step(f)
        a = lin.projected_perturbation(f, p, r)
        b = lin.projected_perturbation(f1, p, r)
        R = lin.remainder_R(b, lin.u_star_prime(f1, r, p))
        res.append(abs((lin.q1(b) - lin.q1(a)) / (2 * dt) + lin.q2(b) - R))
    ratios = [x / y for x, y in zip(res, res[1:])]
    ok = rep.admissible and all(1.7 <= q <= 2.6 for q in ratios)
    verdict(9, ok, f"residuals {', '.join(f'{x:.2e}' for x in res)} at dt=0.02/0.01/0.005; "
                   f"halving ratios {', '.join(f'{q:.2f}' for q in ratios)} (first order ~2)")


# --------------------------------------------------------------------------- 10


def test_c10_threshold_and_above(verdict):
    Ds = find_D_star(1, ALPHA)
    # isotropic regime: exponential decay of H[f|G_0]
    p = ModelParams(1, ALPHA, 1.2 * Ds)
    cfg = SolverConfig(t_end=50 / p.D, output_stride=50).resolve(p, 1.0)
    f0, _ = initial_data("gibbs_tilt", p, cfg.grid(1), seed=0, u0=[0.6], eps=0.3)
    res = run(f0, cfg, p, fill_u_inf=False)
    iso = fit_rate(res.times, res.column("H_rel_star"), floor_rel=1e-10)
    # critical regime: algebraic decay of the free-energy gap
    p = ModelParams(1, ALPHA, Ds)
    cfg = SolverConfig(t_end=50 / Ds, output_stride=50).resolve(p, 1.0)
    f0, _ = initial_data("gibbs_tilt", p, cfg.grid(1), seed=0, u0=[0.6], eps=0.3)
    res = run(f0, cfg, p, fill_u_inf=False)
    t, gap = res.times, res.column("F_gap")
    u4 = np.abs(res.column("u_f")[:, 0]) ** 4
    win = t >= 1.0
    scaled = t[win] ** 1.5 * gap[win]
    peak = int(np.argmax(scaled))
    after = scaled[peak:]
    eventually_decreasing = peak < scaled.size - 1 and bool(np.all(np.diff(after) <= 0))
    # bounded: no growth of the scaled gap over the second half of the window
    half = t[win] >= 0.5 * t[-1]
    bounded = bool(np.all(np.isfinite(scaled))) and scaled[half].max() <= scaled[~half].max()
    C = 1.1 * 24.0 / V_and_derivatives(p, 0.0, 4)
    tail = t >= 0.5 * t[-1]
    ratio = float(np.max(u4[tail] / gap[tail]))
    ok = iso.rate > 0 and bounded and eventually_decreasing and ratio <= C
    verdict(10, ok, f"D=1.2D*: H[f|G_0] rate={iso.rate:.4f} (>0); D=D*: max t^1.5 gap="
                    f"{scaled.max():.4f} at t={t[win][peak]:.1f}, decreasing after peak="
                    f"{eventually_decreasing}; tail max |u|^4/gap={ratio:.2f} <= C={C:.2f}")
