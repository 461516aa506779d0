"""The `lab` command line runner.

Usage: lab <command> --config <file> [--jobs N] [--out DIR]

Commands: verify-geometry, verify-kernel, holder-scan, harnack, covering.
Configs are JSON with a fixed per-command key schema; unknown keys and a
missing seed are config errors.  Every run writes report.json (config hash,
versions, per-check records, overall verdict) plus plot-ready CSVs with
floats at 17 significant digits into the output directory (--out, the
KINLAB_OUT environment variable, or the current directory).

Exit codes: 0 all checks passed, 2 at least one check failed, 3 config or
usage error.  Reports are deterministic for a given config and seed except
for the wall_clock_s field.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy

from . import __version__
from . import geometry as geo
from . import kernel as ker
from . import covering as cov
from . import solvers as sv
from . import degiorgi as dg
from .gridfn import Axis, GridFunction

__all__ = ["main"]


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

_SCHEMAS = {
    "verify-geometry": {"seed": None, "samples": 2000, "d": 1, "tol": 1e-6,
                        "optimality_tol": 1e-4},
    "verify-kernel": {"seed": None, "d": 1, "box": 8.0, "base_n": 48,
                      "adjoint_threshold": 0.02,
                      "adjoint_quad": [80, 144, 96], "young_pairs": 10},
    "holder-scan": {"seed": None, "instances": 8, "n": 160, "box": 1.1,
                    "coefficient": "checkerboard", "lam": 0.5, "Lam": 1.0,
                    "tiles": 8, "k_max": 6},
    "harnack": {"seed": None, "instances": 8, "nx": 64, "nv": 48, "nt": 64,
                "omega": 0.25, "t_final": 0.25, "coefficient": "identity",
                "lam": 1.0, "Lam": 1.0, "tiles": 8, "profile": "gaussian",
                "floor": 0.2},
    "covering": {"seed": None, "families": 200, "m": [1, 2, 4],
                 "maximal_fields": 5, "n": 48, "geometry": "kinetic",
                 "ink_spots": 0, "m_ink": 1, "r0": 1.0},
}


def load_config(path, command):
    if command not in _SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    schema = _SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "seed" not in raw:
        raise ConfigError("config must set an integer seed")
    if not isinstance(raw["seed"], int):
        raise ConfigError("seed must be an integer")
    cfg = dict(schema)
    cfg.update(raw)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def write_csv(path, names, rows):
    """CSV with 17 significant digits for floats."""
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(f"{c:.17g}" if isinstance(c, float) else str(c)
                              for c in row) + "\n")


# ---------------------------------------------------------------------------
# verify-geometry
# ---------------------------------------------------------------------------

def _random_points(rng, n, d, scale=2.0):
    t = rng.uniform(-scale, scale, n)
    x = rng.uniform(-scale, scale, (n, d))
    v = rng.uniform(-scale, scale, (n, d))
    return t, x, v


def cmd_verify_geometry(cfg, jobs, outdir):
    rng = np.random.default_rng(cfg["seed"])
    N, d, tol = cfg["samples"], cfg["d"], cfg["tol"]
    records, warnings = [], []
    if N == 0:
        warnings.append("samples=0: all geometry suites are vacuous")
        records.append({"check": "vacuous", "passed": True})
        return records, warnings, []
    if d > 3:
        raise ConfigError("d must be at most 3")

    # group axioms on random triples
    ok = True
    worst = 0.0
    for _ in range(min(N, 500)):
        zs = [geo.PhasePoint(t, x, v) for t, x, v in
              zip(*(a if a.ndim == 1 else a for a in _random_points(rng, 3, d)))]
        z1, z2, z3 = zs
        lhs = geo.compose(geo.compose(z1, z2), z3)
        rhs = geo.compose(z1, geo.compose(z2, z3))
        err = max(abs(lhs.t - rhs.t), np.abs(lhs.x - rhs.x).max(),
                  np.abs(lhs.v - rhs.v).max())
        zi = geo.compose(z1, geo.inverse(z1))
        err = max(err, abs(zi.t), np.abs(zi.x).max(), np.abs(zi.v).max())
        worst = max(worst, err)
        ok &= err < 1e-10
    records.append({"check": "group_axioms", "passed": bool(ok),
                    "worst_error": worst})

    # distance sandwiched by the sup norm of the group difference
    t1, x1, v1 = _random_points(rng, N, d)
    t2, x2, v2 = _random_points(rng, N, d)
    dist, gap = geo.kinetic_distance_batch(t1, x1, v1, t2, x2, v2, tol=tol)
    norms = np.array([geo.sup_norm(geo.compose(geo.inverse(
        geo.PhasePoint(t2[i], x2[i], v2[i])), geo.PhasePoint(t1[i], x1[i], v1[i])))
        for i in range(N)])
    lower_ok = bool(np.all(dist >= 0.5 * norms - tol))
    upper_ok = bool(np.all(dist <= norms + tol))
    records.append({"check": "distance_bounds", "passed": lower_ok and upper_ok,
                    "max_lower_violation": float(np.max(0.5 * norms - dist)),
                    "max_upper_violation": float(np.max(dist - norms))})
    rows = sorted(zip(range(N), dist.tolist(), norms.tolist()))
    csvs = [("distance_samples.csv", ["index", "distance", "sup_norm"], rows)]

    # optimality instances: pure velocity gap hits the 1/2 bound, pure time
    # gap hits the upper bound; both must reproduce the exact value
    z_a = geo.PhasePoint(0.0, np.zeros(d), 0.5 * np.eye(d)[0])
    z_b = geo.PhasePoint(0.0, np.zeros(d), -0.5 * np.eye(d)[0])
    d_half = geo.kinetic_distance(z_a, z_b, tol=min(tol, 1e-6))
    z_c = geo.PhasePoint(1.0, np.zeros(d), np.zeros(d))
    z_o = geo.PhasePoint(0.0, np.zeros(d), np.zeros(d))
    d_one = geo.kinetic_distance(z_c, z_o, tol=min(tol, 1e-6))
    opt_tol = cfg["optimality_tol"]
    opt_ok = abs(d_half - 0.5) <= opt_tol and abs(d_one - 1.0) <= opt_tol
    records.append({"check": "optimality_instances", "passed": bool(opt_ok),
                    "d_half": d_half, "d_one": d_one, "tolerance": opt_tol})

    # triangle inequality on random triples
    M = max(N // 10, 1)
    t3, x3, v3 = _random_points(rng, M, d)
    d12, _ = geo.kinetic_distance_batch(t1[:M], x1[:M], v1[:M], t2[:M], x2[:M],
                                        v2[:M], tol=tol)
    d13, _ = geo.kinetic_distance_batch(t1[:M], x1[:M], v1[:M], t3, x3, v3,
                                        tol=tol)
    d32, _ = geo.kinetic_distance_batch(t3, x3, v3, t2[:M], x2[:M], v2[:M],
                                        tol=tol)
    tri = d12 - (d13 + d32)
    records.append({"check": "triangle_inequality",
                    "passed": bool(np.all(tri <= 3 * tol)),
                    "max_violation": float(tri.max())})

    # cylinder membership invariance under the kinetic dilation
    ok = True
    for _ in range(200):
        z0 = geo.PhasePoint(*[a[0] if a.ndim == 1 else a[0] for a in
                              _random_points(rng, 1, d)])
        r = rng.uniform(0.2, 2.0)
        Q = geo.KineticCylinder(z0, r)
        z = geo.PhasePoint(z0.t - rng.uniform(0, r * r) * 0.99,
                           z0.x + rng.uniform(-1, 1, d) * r ** 3 * 0.5,
                           z0.v + rng.uniform(-1, 1, d) * r * 0.5)
        if not geo.cylinder_contains(Q, z):
            continue
        R = rng.uniform(0.5, 2.0)
        Qs = geo.KineticCylinder(geo.scale(z0, R), Q.radius * R)
        ok &= geo.cylinder_contains(Qs, geo.scale(z, R))
    records.append({"check": "membership_dilation", "passed": bool(ok)})
    return records, warnings, csvs


# ---------------------------------------------------------------------------
# verify-kernel
# ---------------------------------------------------------------------------

def cmd_verify_kernel(cfg, jobs, outdir):
    d, L, n0 = cfg["d"], cfg["box"], cfg["base_n"]
    if d not in (1, 2):
        raise ConfigError("kernel checks support d in {1, 2}")
    rng = np.random.default_rng(cfg["seed"])
    records, csvs = [], []

    # unit mass of the time-1 kernel by quadrature plus the Gaussian tail
    n = n0 * 4 if d == 1 else n0 * 2
    ax = np.linspace(-L, L, n * 2 + 1)
    h = ax[1] - ax[0]
    X, V = np.meshgrid(ax, ax, indexing="ij")
    m1 = float(ker.gamma1(X[..., None], V[..., None], d=1).sum()) * h * h
    # the time-1 kernel factorizes exactly over (x_i, v_i) coordinate pairs,
    # so the in-box mass in dimension d is the d-th power of the planar one
    mass = m1 ** d
    tail = ker.gamma_tail_mass(L, d=d)
    err = abs(mass + tail - 1.0)
    tol = 1e-8 if d == 1 else 1e-4
    records.append({"check": "kernel_mass", "passed": bool(err < tol),
                    "mass": mass, "tail": tail, "error": err})

    # residual convergence order on nested meshes, away from the t=0
    # singularity so the asymptotic second-order regime is reached
    hs = [0.04, 0.02, 0.01]
    reps = []
    for hh in hs:
        axes_r = [Axis("t", 1.0, 1.5, round(0.5 / hh)),
                  Axis("x", -3.0, 3.0, round(6.0 / hh)),
                  Axis("v", -3.0, 3.0, round(6.0 / hh))]
        T, Xr, Vr = np.meshgrid(*[a.centers() for a in axes_r], indexing="ij")
        gvals = ker.gamma(T, Xr[..., None], Vr[..., None], d=1)
        reps.append(ker.kolmogorov_residual(GridFunction(axes_r, gvals)))
    order = ker.residual_convergence_order(reps, hs)
    records.append({"check": "residual_order", "passed": bool(order >= 1.8),
                    "order": float(order),
                    "residuals": [r.max_residual for r in reps]})
    csvs.append(("residuals.csv", ["h", "max_residual"],
                 list(zip(hs, [r.max_residual for r in reps]))))

    if d == 1:
        bump = ker.Bump(t0=0.6, rt=0.45, x0=(0.0,), rx=0.8, v0=(0.0,), rv=0.8)
        rep = ker.adjoint_identity_check(bump, n_quad=tuple(cfg["adjoint_quad"]))
        records.append({"check": "adjoint_identity",
                        "passed": bool(rep.rel_error < cfg["adjoint_threshold"]),
                        "relative_error": rep.rel_error})

    # Young inequality and weak vs strong norms on random grid pairs
    axes = [Axis("t", 0, 1, 6), Axis("x", -2, 2, 20), Axis("v", -2, 2, 20)]
    shape = tuple(a.n for a in axes)
    young_ok = weak_ok = True
    for _ in range(cfg["young_pairs"]):
        f = GridFunction(axes, rng.normal(size=shape) ** 2)
        g = GridFunction(axes, rng.normal(size=shape) ** 2)
        p, q = rng.uniform(1.1, 3.0, 2)
        r_inv = 1 / p + 1 / q - 1
        if r_inv <= 0:
            continue
        young_ok &= ker.young_check(f, g, p, q).passed
        wp = rng.uniform(1.1, 4.0)
        weak_ok &= ker.weak_lp_norm(f, wp).value <= f.norm_lp(wp) * (1 + 1e-12)
    records.append({"check": "young_inequality", "passed": bool(young_ok)})
    records.append({"check": "weak_le_strong", "passed": bool(weak_ok)})
    return records, [], csvs


# ---------------------------------------------------------------------------
# holder-scan
# ---------------------------------------------------------------------------

def _holder_instance(i, cfg):
    rng = np.random.default_rng(cfg["seed"] + 1000 * i)
    n, b = cfg["n"], cfg["box"]
    axes = [Axis("x", -b, b, n), Axis("x", -b, b, n)]
    spec = {"kind": cfg["coefficient"], "lam": cfg["lam"], "Lam": cfg["Lam"],
            "tiles": cfg["tiles"]}
    coef = sv.make_coefficients(spec, seed=cfg["seed"] + i)
    a0, a1, a2 = rng.uniform(-1, 1, 3)
    P = sv.Problem(kind="elliptic", axes=axes, coefficients=coef,
                   boundary=lambda p: a0 + a1 * p[..., 0] + a2 * p[..., 1],
                   source=0.0)
    sol = sv.solve_elliptic(P)
    prof = dg.oscillation_profile(sol.u, (0.0, 0.0), k_max=cfg["k_max"],
                                  geometry="elliptic", r0=1.0)
    mono = all(a >= b2 - 1e-12 for a, b2 in
               zip(prof.oscillations, prof.oscillations[1:]))
    return i, prof, mono


def cmd_holder_scan(cfg, jobs, outdir):
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = sorted(pool.map(lambda i: _holder_instance(i, cfg),
                                  range(cfg["instances"])))
    records, rows = [], []
    for i, prof, mono in results:
        finite = np.isfinite(prof.alpha)
        ok = mono and (not finite or prof.alpha > 0)
        records.append({"check": f"instance_{i}", "passed": bool(ok),
                        "alpha": prof.alpha if finite else "sentinel",
                        "constant": prof.constant, "monotone": bool(mono),
                        "fit_residual": prof.fit_residual})
        rows.append((i, prof.alpha if finite else float("inf"),
                     prof.constant, prof.fit_residual, int(mono)))
    alphas = [r[1] for r in rows if np.isfinite(r[1])]
    edges = np.linspace(0.0, 1.2, 13)
    hist, _ = np.histogram(alphas, bins=edges)
    csvs = [("alphas.csv", ["index", "alpha", "constant", "fit_residual",
                            "monotone"], rows),
            ("alpha_histogram.csv", ["bin_lo", "bin_hi", "count"],
             [(float(edges[k]), float(edges[k + 1]), int(hist[k]))
              for k in range(len(hist))])]
    return records, [], csvs


# ---------------------------------------------------------------------------
# harnack
# ---------------------------------------------------------------------------

def _harnack_instance(i, cfg):
    axes = [Axis("x", -0.5, 0.5, cfg["nx"]), Axis("v", -1.0, 1.0, cfg["nv"])]
    X, V = np.meshgrid(axes[0].centers(), axes[1].centers(), indexing="ij")
    if cfg["profile"] == "constant":
        hist = [np.ones_like(X) for _ in range(cfg["nt"] + 1)]
        times = list(np.linspace(0.0, cfg["t_final"], cfg["nt"] + 1))
        sol = sv.Solution(GridFunction(axes, hist[-1]),
                          {"history": hist, "times": times})
    elif cfg["profile"] == "gaussian":
        rng = np.random.default_rng(cfg["seed"] + 1000 * i)
        xc = rng.uniform(-0.2, 0.2)
        vc = rng.uniform(-0.3, 0.3)
        f0 = cfg["floor"] + np.exp(-8 * (X - xc) ** 2 - 4 * (V - vc) ** 2)
        spec = {"kind": cfg["coefficient"], "lam": cfg["lam"],
                "Lam": cfg["Lam"], "tiles": cfg["tiles"]}
        coef = sv.make_coefficients(spec, seed=cfg["seed"] + i)
        P = sv.Problem(kind="kinetic-fp", axes=axes, coefficients=coef,
                       initial=GridFunction(axes, f0), source=0.0,
                       t_final=cfg["t_final"], nt=cfg["nt"], periodic=True)
        sol = sv.solve_kinetic_fp(P)
    else:
        raise ConfigError(f"unknown profile {cfg['profile']!r}")
    rep = dg.harnack_quotient(sol, omega=cfg["omega"])
    return i, rep


def cmd_harnack(cfg, jobs, outdir):
    records, rows = [], []
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_harnack_instance, i, cfg)
                   for i in range(cfg["instances"])]
    for i, fut in enumerate(futures):
        try:
            _, rep = fut.result()
        except ValueError as exc:
            records.append({"check": f"instance_{i}", "passed": False,
                            "error": str(exc)})
            continue
        ok = np.isfinite(rep.quotient) and rep.quotient >= 1.0 - 1e-9
        if cfg["profile"] == "constant":
            ok &= abs(rep.quotient - 1.0) < 1e-12
        records.append({"check": f"instance_{i}", "passed": bool(ok),
                        "quotient": rep.quotient, "sup_past": rep.sup_past,
                        "inf_future": rep.inf_future})
        rows.append((i, rep.quotient, rep.sup_past, rep.inf_future))
    csvs = [("quotients.csv", ["index", "quotient", "sup_past", "inf_future"],
             rows)]
    return records, [], csvs


# ---------------------------------------------------------------------------
# covering
# ---------------------------------------------------------------------------

def cmd_covering(cfg, jobs, outdir):
    rng = np.random.default_rng(cfg["seed"])
    records, csvs = [], []
    warnings = []
    geometry = cfg["geometry"]
    if geometry not in ("parabolic", "kinetic"):
        raise ConfigError("geometry must be 'parabolic' or 'kinetic'")

    # interval stacking sweep
    fails = 0
    rows = []
    for i in range(cfg["families"]):
        m = int(rng.choice(cfg["m"]))
        k = int(rng.integers(1, 12))
        fam = cov.IntervalFamily(list(zip(rng.uniform(-5, 5, k),
                                          rng.uniform(0.05, 1.0, k))))
        rep = cov.interval_stack_ratio(fam, m)
        fails += not rep.passed
        rows.append((i, m, rep.ratio, rep.bound, int(rep.passed)))
    if cfg["families"] == 0:
        warnings.append("families=0: interval stacking suite is vacuous")
    records.append({"check": "interval_stacking", "passed": fails == 0,
                    "failures": fails, "families": cfg["families"]})
    csvs.append(("interval_stacking.csv",
                 ["index", "m", "ratio", "bound", "passed"], rows))

    # maximal-function weak (1,1) bound on random nonnegative fields
    n = cfg["n"]
    bound = cov.leak_constant(1, geometry)
    worst = 0.0
    ok = True
    for i in range(cfg["maximal_fields"]):
        axes = ([Axis("t", -1, 0, n), Axis("x", -1, 1, n), Axis("v", -1, 1, n)]
                if geometry == "kinetic"
                else [Axis("t", -1, 0, n), Axis("x", -1, 1, n)])
        vals = rng.random(tuple(a.n for a in axes)) ** 4
        gf = GridFunction(axes, vals)
        Mg = cov.maximal_function(gf)
        kappas = np.quantile(Mg.values, [0.5, 0.8, 0.95])
        c = cov.maximal_inequality_constant(gf, Mg, kappas)
        worst = max(worst, c)
        ok &= c <= bound
    records.append({"check": "maximal_weak11", "passed": bool(ok),
                    "worst_constant": worst, "bound": bound})

    # ink spots instances
    if cfg["ink_spots"] > 0:
        bad = 0
        for i in range(cfg["ink_spots"]):
            inst_rng = np.random.default_rng(cfg["seed"] + 7000 + i)
            E, F = cov.synthesize_ink_spots_instance(
                geometry, cfg["m_ink"], cfg["r0"], inst_rng,
                cells_per_unit=48 if geometry == "kinetic" else 96,
                stride=2 if geometry == "kinetic" else 1)
            rep = cov.ink_spots_check(E, F, geometry, cfg["m_ink"], cfg["r0"],
                                      stride=2 if geometry == "kinetic" else 1,
                                      stack_check_cap=100, rng=inst_rng)
            bad += not rep.passed
        records.append({"check": "ink_spots", "passed": bad == 0,
                        "failures": bad, "instances": cfg["ink_spots"]})
    return records, warnings, csvs


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "verify-geometry": cmd_verify_geometry,
    "verify-kernel": cmd_verify_kernel,
    "holder-scan": cmd_holder_scan,
    "harnack": cmd_harnack,
    "covering": cmd_covering,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lab", description="kinetic regularity experiment runner")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 3
    outdir = args.out or os.environ.get("KINLAB_OUT", ".")
    os.makedirs(outdir, exist_ok=True)
    t0 = time.time()
    try:
        cfg = load_config(args.config, args.command)
        records, warnings, csvs = _COMMANDS[args.command](cfg, args.jobs, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    passed = all(r.get("passed", False) for r in records)
    report = {
        "command": args.command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "versions": {"kinlab": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "records": records,
        "warnings": warnings,
        "passed": passed,
        "wall_clock_s": round(time.time() - t0, 3),
    }
    for name, cols, rows in csvs:
        write_csv(os.path.join(outdir, name), cols, rows)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r in records:
        tag = "PASS" if r.get("passed", False) else "FAIL"
        print(f"[{tag}] {r.get('check', '?')}")
    print(f"overall: {'PASS' if passed else 'FAIL'} "
          f"({report['wall_clock_s']} s)")
    return 0 if passed else 2


if __name__ == "__main__":
    sys.exit(main())
