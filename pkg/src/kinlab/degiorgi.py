"""Measurement side of the De Giorgi machinery: truncations, local energy
(Caccioppoli) ratios, class certification, the iteration lemma, oscillation
profiles with Holder-exponent fits, Harnack quotients, expansion of
positivity, intermediate-value statistics, and Poincare-Wirtinger constants.

Conventions: ess sup/inf are grid max/min; discrete gradients are forward
differences attributed to the lower cell; all measured constants carry the
discretization slack of the raster geometry they were measured on.  Time-
dependent inputs are solver Solutions whose info dict holds the stored time
slices; times are shifted so the final slice sits at time 0 and cylinders
use the standard backward-in-time anchoring.
"""

import math
from dataclasses import dataclass

import numpy as np

from .gridfn import GridFunction
from .geometry import PhasePoint

__all__ = [
    "truncate", "caccioppoli_report", "iterate_lemma", "oscillation_profile",
    "holder_consistency", "harnack_quotient", "expansion_experiment",
    "intermediate_value_stats", "poincare_wirtinger_estimate", "dg_membership",
    "kdg_minus_gradient_check",
    "EnergyReport", "IterationResult", "OscillationProfile", "HarnackReport",
]


# ---------------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------------

def truncate(u, kappa, sign="plus"):
    """(u - kappa)_+ or (u - kappa)_- as a new GridFunction."""
    if sign == "plus":
        vals = np.maximum(u.values - kappa, 0.0)
    elif sign == "minus":
        vals = np.maximum(kappa - u.values, 0.0)
    else:
        raise ValueError("sign must be 'plus' or 'minus'")
    return u.copy_with(vals)


def _forward_grad_sq(vals, axes, axis_ids):
    """Sum over listed axes of squared forward differences, lower-cell cells.

    Returns an array of the full shape with the last slice along each
    differentiated axis set to zero (no forward neighbor).
    """
    out = np.zeros_like(vals)
    for k in axis_ids:
        g = np.zeros_like(vals)
        sl_lo = [slice(None)] * vals.ndim
        sl_lo[k] = slice(0, vals.shape[k] - 1)
        sl_hi = [slice(None)] * vals.ndim
        sl_hi[k] = slice(1, vals.shape[k])
        g[tuple(sl_lo)] = (vals[tuple(sl_hi)] - vals[tuple(sl_lo)]) / axes[k].h
        out += g * g
    return out


# ---------------------------------------------------------------------------
# Caccioppoli reports
# ---------------------------------------------------------------------------

@dataclass
class EnergyRecord:
    center: tuple
    r: float
    R: float
    kappa: float
    sign: str
    lhs: float
    rhs_energy: float
    rhs_source: float
    ratio: float


@dataclass
class EnergyReport:
    records: list
    worst_ratio: float
    bound: float
    slack: float
    passed: bool
    skipped: int


def _ball_mask(grids, center, radius):
    s = sum((g - c) ** 2 for g, c in zip(grids, center))
    return s < radius * radius


def caccioppoli_report(sol, P, samples, slack=0.2, sign="plus"):
    """Realized local-energy ratios on sampled (center, r, R, kappa).

    Elliptic: ratio = grad-energy over B_r divided by
    [(R-r)^-2 int_{B_R} w^2 + int_{B_R} |S| w], compared against the bound
    max(2/lam, 16 Lam/lam) inflated by the discretization slack.

    Parabolic samples are (t0, x0, r, R, kappa): ratio compares the endpoint
    plus gradient energy, net of the initial-time term and the source term,
    against 16 Lam / (R-r)^2 times the space-time mass of w^2.

    Kinetic samples are (t0, x0, v0, rx, Rx, rv, Rv, kappa): the bound is
    8 Lam/(Rv-rv)^2 + 4 Rv/(Rx-rx) + Lam^2/lam on boxes in (x, v).
    """
    lam, Lam = P.coefficients.lam, P.coefficients.Lam
    records = []
    skipped = 0
    if P.kind == "elliptic":
        bound = max(2.0 / lam, 16.0 * Lam / lam)
        axes = sol.u.axes
        grids = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
        pts = np.stack(grids, axis=-1)
        S = P.source(pts) if callable(P.source) else np.full(grids[0].shape, float(P.source))
        vol = sol.u.cell_volume
        for (x0, r, R, kappa) in samples:
            if any(c - R < a.lo or c + R > a.hi for c, a in zip(np.atleast_1d(x0), axes)):
                skipped += 1
                continue
            w = truncate(sol.u, kappa, sign).values
            gsq = _forward_grad_sq(w, axes, range(len(axes)))
            mr = _ball_mask(grids, np.atleast_1d(x0), r)
            mR = _ball_mask(grids, np.atleast_1d(x0), R)
            lhs = float(gsq[mr].sum()) * vol
            e = float((w[mR] ** 2).sum()) * vol / (R - r) ** 2
            s = float((np.abs(S[mR]) * w[mR]).sum()) * vol
            ratio = lhs / (e + s) if e + s > 0 else 0.0
            records.append(EnergyRecord(tuple(np.atleast_1d(x0)), r, R, kappa,
                                        sign, lhs, e, s, ratio))
    elif P.kind == "parabolic":
        bound = 16.0 * Lam
        hist, times = sol.info["history"], sol.info["times"]
        axes = sol.u.axes
        grids = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
        tau = np.asarray(times) - times[-1]
        vol = sol.u.cell_volume
        dtau = tau[1] - tau[0]
        for (t0, x0, r, R, kappa) in samples:
            ok_t = (tau > t0 - r * r) & (tau <= t0)
            if ok_t.sum() < 2 or any(c - R < a.lo or c + R > a.hi
                                     for c, a in zip(np.atleast_1d(x0), axes)):
                skipped += 1
                continue
            ids = np.where(ok_t)[0]
            mr = _ball_mask(grids, np.atleast_1d(x0), r)
            mR = _ball_mask(grids, np.atleast_1d(x0), R)
            w = [np.maximum((hist[i] - kappa) if sign == "plus" else (kappa - hist[i]), 0.0)
                 for i in ids]
            end = float((w[-1][mr] ** 2).sum()) * vol
            start = float((w[0][mr] ** 2).sum()) * vol
            grad = sum(float(_forward_grad_sq(wi, axes, range(len(axes)))[mr].sum())
                       for wi in w) * vol * dtau * lam
            mass = sum(float((wi[mR] ** 2).sum()) for wi in w) * vol * dtau / (R - r) ** 2
            src = sum(float((np.abs(_src_slice(P, times[i], grids)) * wi)[mR].sum())
                      for i, wi in zip(ids, w)) * vol * dtau
            lhs = max(end + grad - start - src, 0.0)
            ratio = lhs / mass if mass > 0 else 0.0
            records.append(EnergyRecord((t0,) + tuple(np.atleast_1d(x0)), r, R,
                                        kappa, sign, lhs, mass, src, ratio))
    elif P.kind == "kinetic-fp":
        hist, times = sol.info["history"], sol.info["times"]
        x_axis, v_axis = sol.u.axes
        X, V = np.meshgrid(x_axis.centers(), v_axis.centers(), indexing="ij")
        tau = np.asarray(times) - times[-1]
        vol = x_axis.h * v_axis.h
        dtau = tau[1] - tau[0]
        sample_bounds = []
        for (t0, x0, v0, rx, Rx, rv, Rv, kappa) in samples:
            ok_t = (tau > t0 - rv * rv) & (tau <= t0)
            if ok_t.sum() < 2 or abs(x0) + Rx > x_axis.hi or abs(v0) + Rv > v_axis.hi:
                skipped += 1
                continue
            sample_bounds.append(8.0 * Lam / (Rv - rv) ** 2
                                 + 4.0 * Rv / (Rx - rx) + Lam ** 2 / lam)
            ids = np.where(ok_t)[0]
            m_int = (np.abs(X - x0) < rx) & (np.abs(V - v0) < rv)
            m_ext = (np.abs(X - x0) < Rx) & (np.abs(V - v0) < Rv)
            w = [np.maximum((hist[i] - kappa) if sign == "plus" else (kappa - hist[i]), 0.0)
                 for i in ids]
            end = float((w[-1][m_int] ** 2).sum()) * vol
            start = float((w[0][m_int] ** 2).sum()) * vol
            grad = sum(float(_forward_grad_sq(wi, sol.u.axes, [1])[m_int].sum())
                       for wi in w) * vol * dtau * lam / 4.0
            mass = sum(float((wi[m_ext] ** 2).sum()) for wi in w) * vol * dtau
            grids2 = (X, V)
            src = 2.0 * sum(float((np.abs(_src_slice(P, times[i], grids2)) * wi)[m_ext].sum())
                            for i, wi in zip(ids, w)) * vol * dtau
            lhs = max(end + grad - start - src, 0.0)
            ratio = lhs / mass if mass > 0 else 0.0
            records.append(EnergyRecord((t0, x0, v0), rx, Rx, kappa, sign,
                                        lhs, mass, src, ratio))
    else:
        raise ValueError(f"unsupported kind {P.kind!r}")
    worst = max((rec.ratio for rec in records), default=0.0)
    if P.kind == "kinetic-fp":
        # the bound depends on the box widths, so certify per sample
        passed = all(rec.ratio <= b * (1.0 + slack)
                     for rec, b in zip(records, sample_bounds))
        bound = max(sample_bounds) if sample_bounds else 0.0
        return EnergyReport(records, worst, bound, slack, passed, skipped)
    passed = worst <= bound * (1.0 + slack)
    return EnergyReport(records, worst, bound, slack, passed, skipped)


def _src_slice(P, t, grids):
    if callable(P.source):
        pts = np.stack(grids, axis=-1)
        try:
            return np.asarray(P.source(t, pts), dtype=float)
        except TypeError:
            return np.asarray(P.source(pts), dtype=float)
    return np.full(grids[0].shape, float(P.source))


# ---------------------------------------------------------------------------
# Iteration lemma
# ---------------------------------------------------------------------------

@dataclass
class IterationResult:
    sequence: list
    threshold: float
    exponents: list
    exponent_bounds: list
    verdict: str


def iterate_lemma(A0, C, beta, k_max=60, target=1e-12):
    """Simulate A_{k+1} = C^{k+1} A_k^beta at equality, in log space.

    Returns the sequence, the convergence threshold C^{-beta/(beta-1)^2},
    the exponents p_k of the closed form A_k <= C^{p_k} A_0^{beta^k} built
    from p_{k+1} = p_k beta + (k+1), and their bound beta^{k+1}/(beta-1)^2.
    """
    if not (C > 1 and beta > 1 and A0 >= 0):
        raise ValueError("need C > 1, beta > 1, A0 >= 0")
    threshold = C ** (-beta / (beta - 1) ** 2)
    logC = math.log(C)
    seq = [A0]
    logA = math.log(A0) if A0 > 0 else -math.inf
    p = [0.0]
    verdict = "undecided"
    for k in range(k_max):
        logA = (k + 1) * logC + beta * logA
        seq.append(math.exp(logA) if logA < 700 else math.inf)
        p.append(p[-1] * beta + (k + 1))
        if seq[-1] < target:
            verdict = "converged"
            break
        if not np.isfinite(seq[-1]):
            verdict = "diverged"
            break
    if verdict == "undecided":
        verdict = "diverged" if seq[-1] > seq[0] else "undecided"
    bounds = [beta ** (k + 1) / (beta - 1) ** 2 for k in range(len(p))]
    return IterationResult(seq, threshold, p, bounds, verdict)


# ---------------------------------------------------------------------------
# Oscillation profiles and Holder fits
# ---------------------------------------------------------------------------

@dataclass
class OscillationProfile:
    center: tuple
    radii: list
    oscillations: list
    alpha: float
    constant: float
    fit_residual: float
    dropped: list


def _region_cells(u, center, r, geometry, pad=0.0):
    """Cylinder membership mask; pad inflates each bound by pad cell widths.

    The half-cell pad (cells intersecting the region rather than centered in
    it) cancels the first-order bias that grid oscillation carries at small
    radii, which would otherwise contaminate the fitted decay exponent.
    """
    grids = u.meshgrid()
    hs = [a.h for a in u.axes]
    if geometry == "elliptic":
        return _ball_mask(grids, np.atleast_1d(center), r + pad * max(hs))
    if geometry == "parabolic":
        t0 = center[0]
        x0 = np.atleast_1d(center[1])
        m = (grids[0] - t0 > -r * r - pad * hs[0]) & (grids[0] - t0 <= 0.0)
        return m & _ball_mask(grids[1:], x0, r + pad * max(hs[1:]))
    if geometry == "kinetic":
        t0, x0, v0 = center[0], center[1], center[2]
        dt = grids[0] - t0
        m = (dt > -r * r - pad * hs[0]) & (dt <= 0.0)
        m &= np.abs(grids[1] - x0 - dt * v0) < r ** 3 + pad * hs[1]
        m &= np.abs(grids[2] - v0) < r + pad * hs[2]
        return m
    raise ValueError(f"unknown geometry {geometry!r}")


def oscillation_profile(u, center, k_max=6, geometry="elliptic", r0=None):
    """Grid oscillation of u over nested dyadic cylinders around a center.

    Fits log(osc) against log(r) over the resolved decaying range.  The fit
    drops the two largest radii (boundary pollution) and every radius whose
    region holds fewer than 8 cells; fewer than 4 surviving points, or an
    identically constant u, yield the +inf sentinel exponent.
    """
    if r0 is None:
        spans = [min(abs(c - a.lo), abs(c - a.hi))
                 for c, a in zip(np.atleast_1d(center).ravel(), u.axes)]
        r0 = max(min(spans), 1e-9)
    hs = [a.h for a in u.axes]
    radii, oscs, dropped = [], [], []
    for k in range(k_max + 1):
        r = r0 * 2.0 ** (-k)
        if geometry == "elliptic":
            resolved = r >= 2.0 * max(hs)
        elif geometry == "parabolic":
            resolved = r * r >= 2.0 * hs[0] and r >= 2.0 * max(hs[1:])
        else:
            resolved = (r * r >= 2.0 * hs[0] and r ** 3 >= 2.0 * hs[1]
                        and r >= 2.0 * hs[2])
        m = _region_cells(u, center, r, geometry, pad=0.5)
        if not resolved or m.sum() < 8:
            dropped.append(r)
            continue
        vals = u.values[m]
        radii.append(r)
        oscs.append(float(vals.max() - vals.min()))
    fit_r = radii[2:]
    fit_o = oscs[2:]
    pos = [(r, o) for r, o in zip(fit_r, fit_o) if o > 0]
    if len(pos) < 4:
        return OscillationProfile(tuple(np.atleast_1d(center).ravel()), radii,
                                  oscs, math.inf, 0.0, 0.0, dropped)
    lr = np.log([p[0] for p in pos])
    lo = np.log([p[1] for p in pos])
    alpha, c = np.polyfit(lr, lo, 1)
    resid = float(np.sqrt(np.mean((np.polyval([alpha, c], lr) - lo) ** 2)))
    return OscillationProfile(tuple(np.atleast_1d(center).ravel()), radii,
                              oscs, float(alpha), float(math.exp(c)), resid,
                              dropped)


def holder_consistency(u, profile, n_pairs=200, geometry="elliptic", rng=None,
                       distance=None):
    """Check |u(z1) - u(z2)| <= C d(z1, z2)^alpha on random grid-point pairs.

    C is the profile constant inflated by its fit residual; pairs closer
    than two cells are skipped (the bound is meaningless under resolution).
    """
    if not np.isfinite(profile.alpha):
        return {"passed": True, "checked": 0, "failures": [],
                "constant_used": math.inf}
    rng = np.random.default_rng(0) if rng is None else rng
    C_used = profile.constant * math.exp(3.0 * profile.fit_residual) * 1.5
    grids = u.meshgrid()
    shape = u.values.shape
    hmax = max(a.h for a in u.axes)
    failures = []
    checked = 0
    flat = [g.ravel() for g in grids]
    vals = u.values.ravel()
    n = vals.size
    for _ in range(n_pairs):
        i, j = rng.integers(n), rng.integers(n)
        z1 = [f[i] for f in flat]
        z2 = [f[j] for f in flat]
        if distance is not None:
            dist = distance(z1, z2)
        elif geometry == "elliptic":
            dist = float(np.linalg.norm(np.subtract(z1, z2)))
        else:
            from .geometry import kinetic_distance
            dist = kinetic_distance(PhasePoint(z1[0], [z1[1]], [z1[2]]),
                                    PhasePoint(z2[0], [z2[1]], [z2[2]]))
        if dist < 2.0 * hmax:
            continue
        checked += 1
        gap = abs(vals[i] - vals[j])
        if gap > C_used * dist ** profile.alpha + 1e-12:
            failures.append({"z1": z1, "z2": z2, "gap": gap,
                             "bound": C_used * dist ** profile.alpha})
    return {"passed": not failures, "checked": checked,
            "failures": failures, "constant_used": C_used}


# ---------------------------------------------------------------------------
# Harnack quotients, expansion, intermediate values
# ---------------------------------------------------------------------------

@dataclass
class HarnackReport:
    sup_past: float
    inf_future: float
    quotient: float
    source_norm: float
    geometry: dict
    p: float


def _kin_cyl_mask(tau, X, V, center, r):
    t0, x0, v0 = center
    out = []
    for i, t in enumerate(tau):
        dt = t - t0
        if not (-r * r < dt <= 0.0):
            out.append(None)
            continue
        out.append((np.abs(X - x0 - dt * v0) < r ** 3) & (np.abs(V - v0) < r))
    return out


def harnack_quotient(sol, omega=0.25, p=None, source_norm=0.0):
    """sup over the past cylinder vs inf over the future cylinder.

    The stored solution is read in shifted time (final slice at 0); the
    past cylinder is Q_omega(-1 + omega^2, 0, 0) and the future one is
    Q_omega, both scaled by the trajectory's time span.  With p set, the
    sup is replaced by the L^p quasi-norm over the past cylinder.
    """
    hist, times = sol.info["history"], sol.info["times"]
    span = times[-1] - times[0]
    tau = (np.asarray(times) - times[-1]) / span
    x_axis, v_axis = sol.u.axes
    X, V = np.meshgrid(x_axis.centers(), v_axis.centers(), indexing="ij")
    if min(h.min() for h in hist) <= 0:
        raise ValueError("harnack quotient needs a positive solution")
    # cylinders live in the scaled time variable; x, v stay in grid units
    past = _kin_cyl_mask(tau, X, V, (-1.0 + omega ** 2, 0.0, 0.0), omega)
    future = _kin_cyl_mask(tau, X, V, (0.0, 0.0, 0.0), omega)
    sup_past, inf_future = -math.inf, math.inf
    acc, cells = 0.0, 0
    for f, mp, mf in zip(hist, past, future):
        if mp is not None and mp.any():
            sup_past = max(sup_past, float(f[mp].max()))
            if p is not None:
                acc += float((f[mp] ** p).sum())
                cells += int(mp.sum())
        if mf is not None and mf.any():
            inf_future = min(inf_future, float(f[mf].min()))
    if not np.isfinite(sup_past) or not np.isfinite(inf_future):
        raise ValueError("cylinders not resolved by the stored trajectory")
    if p is not None and cells:
        sup_past = (acc / cells) ** (1.0 / p)
    quotient = sup_past / (inf_future + source_norm) if inf_future + source_norm > 0 \
        else math.inf
    return HarnackReport(sup_past, inf_future, quotient, source_norm,
                         {"omega": omega, "past": "Q_omega(-1+omega^2,0,0)",
                          "future": "Q_omega", "time_span": span}, p or math.inf)


def expansion_experiment(solutions, eta0=0.5, source_eps=1e-2):
    """Minimum over Q_1 for solutions seeded with mass near the initial time.

    Hypothesis per instance: |{f >= 1} cap Q_pos| >= 1/2 |Q_pos| with
    Q_pos = Q_eta0(-1, 0, 0) in scaled time, and the source below eps.
    Returns the per-instance minima and the ensemble minimum over the
    instances satisfying the hypothesis.
    """
    table = []
    for sol in solutions:
        hist, times = sol.info["history"], sol.info["times"]
        span = times[-1] - times[0]
        # scale the stored trajectory onto (-1 - eta0^2, 0] so the positivity
        # cylinder anchored at -1 sits fully inside the data
        tau = (np.asarray(times) - times[-1]) / span * (1.0 + eta0 ** 2)
        x_axis, v_axis = sol.u.axes
        X, V = np.meshgrid(x_axis.centers(), v_axis.centers(), indexing="ij")
        pos = _kin_cyl_mask(tau, X, V, (-1.0, 0.0, 0.0), eta0)
        hit = tot = 0
        for f, m in zip(hist, pos):
            if m is None:
                continue
            hit += int((f[m] >= 1.0).sum())
            tot += int(m.sum())
        hypothesis = tot > 0 and hit >= 0.5 * tot
        q1 = _kin_cyl_mask(tau, X, V, (0.0, 0.0, 0.0), 1.0)
        mins = [float(f[m].min()) for f, m in zip(hist, q1)
                if m is not None and m.any()]
        table.append({"hypothesis": hypothesis,
                      "pos_fraction": hit / tot if tot else 0.0,
                      "min_Q1": min(mins) if mins else math.nan})
    admitted = [row["min_Q1"] for row in table if row["hypothesis"]]
    ell_hat = min(admitted) if admitted else math.nan
    return {"table": table, "ell_hat": ell_hat, "admitted": len(admitted),
            "excluded": len(table) - len(admitted), "eta0": eta0,
            "source_eps": source_eps}


def intermediate_value_stats(u, geometry="elliptic", theta=0.25, eta=0.5,
                             C_PW=None):
    """Raster measures of the level and intermediate-value sets.

    Elliptic: measures over B_1 of {u <= 1/2}, {u >= 1}, {1/2 < u < 1},
    the gradient L2 norm, and the realized constant in
    |{u<=1/2}| |{u>=1}| <= C ||grad u||_2 |{1/2<u<1}|^{1/2}, compared to
    2 C_PW |B_1| when a Poincare constant estimate is supplied.

    Kinetic: u is a Solution; measures of {f >= 1} cap Q_-,
    {f <= theta} cap Q_+, {theta < f < 1} cap Q_ext with
    Q_- = Q_eta(-1-eta^2, 0, 0), Q_+ = Q_1, Q_ext the full box, plus the
    L2 norm of the v-gradient.
    """
    if geometry == "elliptic":
        grids = u.meshgrid()
        m1 = _ball_mask(grids, np.zeros(len(u.axes)), 1.0)
        vol = u.cell_volume
        vals = u.values
        low = float(((vals <= 0.5) & m1).sum()) * vol
        high = float(((vals >= 1.0) & m1).sum()) * vol
        mid = float(((vals > 0.5) & (vals < 1.0) & m1).sum()) * vol
        gsq = _forward_grad_sq(vals, u.axes, range(len(u.axes)))
        gnorm = math.sqrt(float(gsq[m1].sum()) * vol)
        denom = gnorm * math.sqrt(mid)
        measured_C = low * high / denom if denom > 0 else 0.0
        out = {"low": low, "high": high, "mid": mid, "grad_norm": gnorm,
               "measured_C": measured_C}
        if C_PW is not None:
            ball = 2.0 if len(u.axes) == 1 else math.pi
            out["C_IVL"] = 2.0 * C_PW * ball
            out["within_C_IVL"] = measured_C <= out["C_IVL"]
        return out
    if geometry == "kinetic":
        sol = u
        hist, times = sol.info["history"], sol.info["times"]
        span = times[-1] - times[0]
        # trajectory scaled onto (-1 - 2 eta^2, 0] so the early cylinder
        # Q_eta(-1 - eta^2, 0, 0) lies inside the data
        tau = (np.asarray(times) - times[-1]) / span * (1.0 + 2.0 * eta ** 2)
        x_axis, v_axis = sol.u.axes
        X, V = np.meshgrid(x_axis.centers(), v_axis.centers(), indexing="ij")
        vol = x_axis.h * v_axis.h * span * (tau[1] - tau[0]) if len(tau) > 1 else 0.0
        qm = _kin_cyl_mask(tau, X, V, (-1.0 - eta ** 2, 0.0, 0.0), eta)
        qp = _kin_cyl_mask(tau, X, V, (0.0, 0.0, 0.0), 1.0)
        low = high = mid = 0.0
        qm_cells = qp_cells = 0
        gsq_acc = 0.0
        for f, mm, mp in zip(hist, qm, qp):
            if mm is not None:
                high += int((f[mm] >= 1.0).sum())
                qm_cells += int(mm.sum())
            if mp is not None:
                low += int((f[mp] <= theta).sum())
                qp_cells += int(mp.sum())
            mid += int(((f > theta) & (f < 1.0)).sum())
            dv = np.diff(f, axis=1) / v_axis.h
            gsq_acc += float((dv * dv).sum())
        total = len(hist) * X.size
        return {"high_frac_Qminus": high / qm_cells if qm_cells else math.nan,
                "low_frac_Qplus": low / qp_cells if qp_cells else math.nan,
                "mid_frac_ext": mid / total,
                "grad_v_norm": math.sqrt(gsq_acc * vol) if vol else math.nan,
                "theta": theta, "eta": eta}
    raise ValueError(f"unknown geometry {geometry!r}")


# ---------------------------------------------------------------------------
# Poincare-Wirtinger and DG membership
# ---------------------------------------------------------------------------

def poincare_wirtinger_estimate(family, q=2):
    """Empirical lower bound for the Poincare-Wirtinger constant on B_1.

    For each u in the family: int_{B_1} |u - mean|^q over int_{B_1}
    |grad u|^q, gradient by forward differences; zero-gradient members are
    skipped.  Returns the max ratio and the per-member table.
    """
    if not (1 <= q <= 2):
        raise ValueError("q must lie in [1, 2]")
    ratios = []
    skipped = 0
    for u in family:
        grids = u.meshgrid()
        m = _ball_mask(grids, np.zeros(len(u.axes)), 1.0)
        vol = u.cell_volume
        vals = u.values
        mean = float(vals[m].mean())
        num = float((np.abs(vals[m] - mean) ** q).sum()) * vol
        gq = _forward_grad_sq(vals, u.axes, range(len(u.axes))) ** (q / 2.0)
        den = float(gq[m].sum()) * vol
        if den <= 0:
            skipped += 1
            continue
        ratios.append(num / den)
    return {"constant": max(ratios) if ratios else 0.0, "ratios": ratios,
            "skipped": skipped, "q": q}


def dg_membership(sol, P, samples, p_c=None, slack=0.0, sign="plus"):
    """Minimal constant certifying the gain-of-integrability inequality.

    Kinetic samples (z0, r, R, kappa) with z0 = (t0, x0, v0): compares
    ||(f-kappa)_+||^2_{p_c, Q_r} against (R-r)^-4 int_{Q_R} (f-kappa)_+^2
    plus (R-r)^-2 int_{Q_R} |S|^2 1_{f >= kappa}; the default exponent is
    p_c = 2 + 1/(2d), inside the admissible range (2, 2 + 1/d).

    Parabolic samples (t0, x0, r, R, kappa): the time-sup of the slice mass
    plus the gradient energy over Q_r against ((R-r)^-2 + r^-2) times the
    mass over Q_R plus the source term; default p_c = 2 + 4/d.
    """
    records = []
    if P.kind == "kinetic-fp":
        d = 1
        if p_c is None:
            p_c = 2.0 + 1.0 / (2 * d)
        if not (2.0 < p_c < 2.0 + 1.0 / d):
            raise ValueError("kinetic p_c must lie in (2, 2 + 1/d)")
        hist, times = sol.info["history"], sol.info["times"]
        x_axis, v_axis = sol.u.axes
        X, V = np.meshgrid(x_axis.centers(), v_axis.centers(), indexing="ij")
        tau = np.asarray(times) - times[-1]
        vol = x_axis.h * v_axis.h
        dtau = tau[1] - tau[0]
        for (z0, r, R, kappa) in samples:
            mr = _kin_cyl_mask(tau, X, V, z0, r)
            mR = _kin_cyl_mask(tau, X, V, z0, R)
            lhs_acc = rhs_acc = src_acc = 0.0
            for i, f in enumerate(hist):
                w = np.maximum(f - kappa, 0.0) if sign == "plus" else np.maximum(kappa - f, 0.0)
                if mr[i] is not None:
                    lhs_acc += float((w[mr[i]] ** p_c).sum()) * vol * dtau
                if mR[i] is not None:
                    rhs_acc += float((w[mR[i]] ** 2).sum()) * vol * dtau
                    Sv = np.abs(_src_slice(P, times[i], (X, V)))
                    ind = f >= kappa if sign == "plus" else f <= kappa
                    src_acc += float(((Sv ** 2) * ind)[mR[i]].sum()) * vol * dtau
            lhs = lhs_acc ** (2.0 / p_c)
            rhs = rhs_acc / (R - r) ** 4 + src_acc / (R - r) ** 2
            const = lhs / rhs if rhs > 0 else 0.0
            records.append({"z0": z0, "r": r, "R": R, "kappa": kappa,
                            "lhs": lhs, "rhs": rhs, "constant": const})
    elif P.kind == "parabolic":
        d = len(sol.u.axes)
        if p_c is None:
            p_c = 2.0 + 4.0 / d
        hist, times = sol.info["history"], sol.info["times"]
        axes = sol.u.axes
        grids = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
        tau = np.asarray(times) - times[-1]
        vol = sol.u.cell_volume
        dtau = tau[1] - tau[0]
        for (t0, x0, r, R, kappa) in samples:
            in_r = (tau > t0 - r * r) & (tau <= t0)
            in_R = (tau > t0 - R * R) & (tau <= t0)
            mr = _ball_mask(grids, np.atleast_1d(x0), r)
            mR = _ball_mask(grids, np.atleast_1d(x0), R)
            sup_slice = 0.0
            grad = rhs_mass = src = 0.0
            for i, f in enumerate(hist):
                w = np.maximum(f - kappa, 0.0) if sign == "plus" else np.maximum(kappa - f, 0.0)
                if in_r[i]:
                    sup_slice = max(sup_slice, float((w[mr] ** 2).sum()) * vol)
                    grad += float(_forward_grad_sq(w, axes, range(d))[mr].sum()) * vol * dtau
                if in_R[i]:
                    rhs_mass += float((w[mR] ** 2).sum()) * vol * dtau
                    Sv = np.abs(_src_slice(P, times[i], grids))
                    src += float((Sv * w)[mR].sum()) * vol * dtau
            lhs = sup_slice + grad
            rhs = ((R - r) ** -2 + r ** -2) * rhs_mass + src
            const = lhs / rhs if rhs > 0 else 0.0
            records.append({"z0": (t0, x0), "r": r, "R": R, "kappa": kappa,
                            "lhs": lhs, "rhs": rhs, "constant": const})
    else:
        raise ValueError(f"no membership check for kind {P.kind!r}")
    worst = max((rec["constant"] for rec in records), default=0.0)
    return {"records": records, "certifying_constant": worst * (1.0 + slack),
            "p_c": p_c}


def kdg_minus_gradient_check(sol, P, samples, sign="minus"):
    """Minimal constant in the backward gradient estimate on nested boxes.

    Samples: (T, tau_minus, tau_plus, rx, Rx, rv, Rv, kappa); compares
    ||grad_v (f-kappa)_-||_{L2(Q_int)} against e^-1 ||(f-kappa)_-||_{L2(Q_ext)}
    with e = min((tau_+ - tau_-)^1/2, Rv^-1/2 (Rx - rx)^1/2, Rv - rv),
    source term added with the active-set indicator.
    """
    hist, times = sol.info["history"], sol.info["times"]
    x_axis, v_axis = sol.u.axes
    X, V = np.meshgrid(x_axis.centers(), v_axis.centers(), indexing="ij")
    tau = np.asarray(times) - times[-1]
    vol = x_axis.h * v_axis.h
    dtau = tau[1] - tau[0]
    records = []
    for (T, tm, tp, rx, Rx, rv, Rv, kappa) in samples:
        e = min(math.sqrt(tp - tm), math.sqrt((Rx - rx) / Rv), Rv - rv)
        in_int = (tau > T - tm) & (tau <= T)
        in_ext = (tau > T - tp) & (tau <= T)
        m_int = (np.abs(X) < rx) & (np.abs(V) < rv)
        m_ext = (np.abs(X) < Rx) & (np.abs(V) < Rv)
        grad = mass = src = 0.0
        for i, f in enumerate(hist):
            w = np.maximum(kappa - f, 0.0) if sign == "minus" else np.maximum(f - kappa, 0.0)
            if in_int[i]:
                grad += float(_forward_grad_sq(w, sol.u.axes, [1])[m_int].sum()) * vol * dtau
            if in_ext[i]:
                mass += float((w[m_ext] ** 2).sum()) * vol * dtau
                Sv = np.abs(_src_slice(P, times[i], (X, V)))
                ind = f <= kappa if sign == "minus" else f >= kappa
                src += float(((Sv ** 2) * ind)[m_ext].sum()) * vol * dtau
        lhs = math.sqrt(grad)
        rhs = math.sqrt(mass) / e + math.sqrt(src)
        const = lhs / rhs if rhs > 0 else 0.0
        records.append({"T": T, "e": e, "lhs": lhs, "rhs": rhs,
                        "constant": const})
    worst = max((r["constant"] for r in records), default=0.0)
    return {"records": records, "certifying_constant": worst}
