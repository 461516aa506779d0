"""Covering algorithms and raster verification of the measure-theoretic lemmas.

Vitali selection and pairwise disjointness use exact geometric predicates;
everything involving measures of unions of slanted cylinders is rasterized
on uniform lattices with a reported boundary-cell slack.  The continuum
"for every cylinder" quantifiers are replaced by documented finite families
(dyadic radii, lattice-centered anchors); reports record the family used.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gridfn import Axis, GridFunction
from .geometry import (EuclideanBall, KineticCylinder, ParabolicCylinder,
                       PhasePoint, StackedCylinder, dilate_5Q)

__all__ = [
    "CylinderFamily", "IntervalFamily", "RasterMask", "regions_intersect",
    "vitali_select", "maximal_function", "maximal_inequality_constant",
    "interval_stack_ratio", "stacked_union_ratio", "ink_spots_check",
    "synthesize_ink_spots_instance", "lebesgue_differentiation_probe",
    "membership_mask", "crawling_constant", "leak_constant",
]


# ---------------------------------------------------------------------------
# Families and exact predicates
# ---------------------------------------------------------------------------

_KINDS = {EuclideanBall: "elliptic", ParabolicCylinder: "parabolic",
          KineticCylinder: "kinetic"}


@dataclass
class CylinderFamily:
    members: list

    def __post_init__(self):
        if self.members:
            kinds = {type(q) for q in self.members}
            if len(kinds) > 1:
                raise ValueError("family must be homogeneous")
            if type(self.members[0]) not in _KINDS:
                raise TypeError("unsupported region type")

    @property
    def kind(self):
        return _KINDS[type(self.members[0])] if self.members else None

    def radii(self):
        return np.array([q.radius for q in self.members])


@dataclass
class IntervalFamily:
    """Pairs (a_k, h_k) describing intervals (a_k - h_k, a_k]."""
    pairs: list

    def __post_init__(self):
        for a, h in self.pairs:
            if not (h > 0):
                raise ValueError("h_k must be positive")


def _time_overlap(a1, b1, a2, b2):
    # (a1, b1] and (a2, b2] share a point iff min(b) > max(a)
    return min(b1, b2) > max(a1, a2)


def regions_intersect(q1, q2):
    """Exact nonempty-intersection predicate for same-kind regions."""
    if type(q1) is not type(q2):
        raise TypeError("mixed region kinds")
    if isinstance(q1, EuclideanBall):
        return bool(np.linalg.norm(q1.center - q2.center) < q1.radius + q2.radius)
    if isinstance(q1, ParabolicCylinder):
        return (_time_overlap(q1.t0 - q1.radius ** 2, q1.t0,
                              q2.t0 - q2.radius ** 2, q2.t0)
                and bool(np.linalg.norm(q1.x0 - q2.x0) < q1.radius + q2.radius))
    if isinstance(q1, KineticCylinder):
        z1, r1 = q1.center, q1.radius
        z2, r2 = q2.center, q2.radius
        if not _time_overlap(z1.t - r1 * r1, z1.t, z2.t - r2 * r2, z2.t):
            return False
        if not np.linalg.norm(z1.v - z2.v) < r1 + r2:
            return False
        # x-slabs travel along the anchors' velocities; minimize the
        # separation |p + t q| of the slab centers over the common times
        ta, tb = max(z1.t - r1 * r1, z2.t - r2 * r2), min(z1.t, z2.t)
        p = (z1.x - z1.t * z1.v) - (z2.x - z2.t * z2.v)
        qv = z1.v - z2.v
        q2n = float(qv @ qv)
        tstar = tb if q2n == 0.0 else float(np.clip(-(p @ qv) / q2n, ta, tb))
        sep = float(np.linalg.norm(p + tstar * qv))
        return sep < r1 ** 3 + r2 ** 3
    raise TypeError("unsupported region type")


def vitali_select(family):
    """Dyadic-class greedy selection of pairwise disjoint cylinders.

    Classes F_n = {R/2^n < r <= R/2^{n-1}} are swept from large to small;
    inside a class the maximal disjoint sub-family is grown greedily in
    input order.  Every input region intersects some selected region of at
    least half its radius, hence lies inside its 5Q enlargement.
    """
    members = family.members if isinstance(family, CylinderFamily) else list(family)
    if not members:
        return []
    radii = np.array([q.radius for q in members])
    R = radii.max()
    order = {}
    for i, r in enumerate(radii):
        n = 0 if r > R / 2 else int(math.floor(math.log2(R / r))) + 1
        # place radius exactly R/2^n on the class boundary into class n
        while r <= R / 2 ** n:
            n += 1
        order.setdefault(n - 1, []).append(i)
    selected = []
    for n in sorted(order):
        for i in order[n]:
            if all(not regions_intersect(members[i], members[j]) for j in selected):
                selected.append(i)
    return selected


# ---------------------------------------------------------------------------
# Raster masks
# ---------------------------------------------------------------------------

def membership_mask(region, grids):
    """Vectorized membership of a region on coordinate arrays.

    grids: list of broadcastable coordinate arrays ordered (t, x..., v...)
    for cylinders, (x...) for balls.
    """
    if isinstance(region, EuclideanBall):
        d = region.d
        s = sum((grids[k] - region.center[k]) ** 2 for k in range(d))
        return s < region.radius ** 2
    if isinstance(region, ParabolicCylinder):
        d = region.d
        t = grids[0]
        R = region.radius
        s = sum((grids[1 + k] - region.x0[k]) ** 2 for k in range(d))
        return (t - region.t0 > -R * R) & (t - region.t0 <= 0.0) & (s < R * R)
    if isinstance(region, KineticCylinder):
        z0, R = region.center, region.radius
        d = z0.d
        t = grids[0]
        dt = t - z0.t
        sx = sum((grids[1 + k] - z0.x[k] - dt * z0.v[k]) ** 2 for k in range(d))
        sv = sum((grids[1 + d + k] - z0.v[k]) ** 2 for k in range(d))
        return (dt > -R * R) & (dt <= 0.0) & (sx < R ** 6) & (sv < R * R)
    if isinstance(region, StackedCylinder):
        base, m = region.base, region.m
        if isinstance(base, ParabolicCylinder):
            d = base.d
            t = grids[0]
            r = base.radius
            s = sum((grids[1 + k] - base.x0[k]) ** 2 for k in range(d))
            return (t - base.t0 > 0.0) & (t - base.t0 < m * r * r) & (s < r * r)
        z0, r = base.center, base.radius
        d = z0.d
        dt = grids[0] - z0.t
        sx = sum((grids[1 + k] - z0.x[k] - dt * z0.v[k]) ** 2 for k in range(d))
        sv = sum((grids[1 + d + k] - z0.v[k]) ** 2 for k in range(d))
        return ((dt > 0.0) & (dt < m * r * r)
                & (sx < ((m + 2) * r ** 3) ** 2) & (sv < r * r))
    raise TypeError("unsupported region type")


class RasterMask:
    """Boolean lattice over a box; measure() = true-cell count x cell volume."""

    def __init__(self, axes, mask=None):
        self.axes = tuple(axes)
        shape = tuple(a.n for a in self.axes)
        self.mask = np.zeros(shape, dtype=bool) if mask is None else np.asarray(mask, bool)
        if self.mask.shape != shape:
            raise ValueError("mask shape mismatch")

    @classmethod
    def for_box(cls, bounds, roles, cells_per_unit=128, n_min=24, n_max=384):
        axes = []
        for (lo, hi), role in zip(bounds, roles):
            n = int(np.clip(round((hi - lo) * cells_per_unit), n_min, n_max))
            axes.append(Axis(role, lo, hi, n))
        return cls(axes)

    @property
    def cell_volume(self):
        vol = 1.0
        for a in self.axes:
            vol *= a.h
        return vol

    def grids(self):
        return np.meshgrid(*[a.centers() for a in self.axes], indexing="ij")

    def measure(self):
        return float(self.mask.sum()) * self.cell_volume

    def rasterize(self, region):
        return membership_mask(region, self.grids())

    def add(self, region):
        self.mask |= self.rasterize(region)

    def boundary_slack(self):
        """Volume of the one-cell boundary layer of the current mask."""
        if not self.mask.any():
            return 0.0
        dil = ndimage.binary_dilation(self.mask)
        ero = ndimage.binary_erosion(self.mask)
        return float((dil & ~ero).sum()) * self.cell_volume


# ---------------------------------------------------------------------------
# Cylinder window sums on lattices
# ---------------------------------------------------------------------------

def _window_offsets(shift, half, h):
    """Integer cell-offset range for the open window (shift-half, shift+half)."""
    lo = math.floor(shift / h - half / h) + 1
    hi = math.ceil(shift / h + half / h) - 1
    return lo, hi


def _cyl_sums_kinetic(vals, axes, r):
    """Sums of zero-extended vals over Q_r anchored at every cell center.

    Returns (sums, counts) with counts the full-cylinder cell count (the
    cylinder is not clipped at the box; outside cells contribute 0).
    """
    Nt, Nx, Nv = vals.shape
    dt, dx, dv = axes[0].h, axes[1].h, axes[2].h
    vc = axes[2].centers()
    kmax = math.ceil(r * r / dt) - 1
    mv = math.ceil(r / dv) - 1
    # window sums along v (clipped at the box; anchors near the v-edge see a
    # truncated numerator, counts still use the full width)
    Cv = np.concatenate([np.zeros((Nt, Nx, 1)), np.cumsum(vals, axis=2)], axis=2)
    j = np.arange(Nv)
    jlo = np.clip(j - mv, 0, Nv)
    jhi = np.clip(j + mv + 1, 0, Nv)
    Dv = Cv[:, :, jhi] - Cv[:, :, jlo]
    Cx = np.concatenate([np.zeros((Nt, 1, Nv)), np.cumsum(Dv, axis=1)], axis=1)
    # integer x-window bounds per (time offset k, anchor velocity j)
    kk = np.arange(kmax + 1)[:, None]
    shift = -kk * dt * vc[None, :]
    LO = np.floor(shift / dx - r ** 3 / dx).astype(int) + 1
    HI = np.ceil(shift / dx + r ** 3 / dx).astype(int) - 1
    counts = (HI - LO + 1).sum(axis=0) * (2 * mv + 1)
    sums = np.zeros((Nt, Nx, Nv))
    c = np.arange(Nx)[:, None]
    jb = np.arange(Nv)[None, :]
    for k in range(kmax + 1):
        ilo = np.clip(c + LO[k][None, :], 0, Nx)
        ihi = np.clip(c + HI[k][None, :] + 1, 0, Nx)
        sums[k:] += Cx[:Nt - k, ihi, jb] - Cx[:Nt - k, ilo, jb]
    return sums, np.broadcast_to(counts.astype(float), (Nt, Nx, Nv))


def _cyl_sums_parabolic(vals, axes, r):
    """Parabolic analogue of _cyl_sums_kinetic on a (t, x) lattice."""
    Nt, Nx = vals.shape
    dt, dx = axes[0].h, axes[1].h
    kmax = math.ceil(r * r / dt) - 1
    lo, hi = _window_offsets(0.0, r, dx)
    Cx = np.concatenate([np.zeros((Nt, 1)), np.cumsum(vals, axis=1)], axis=1)
    c = np.arange(Nx)
    ilo = np.clip(c + lo, 0, Nx)
    ihi = np.clip(c + hi + 1, 0, Nx)
    row = Cx[:, ihi] - Cx[:, ilo]
    Ct = np.concatenate([np.zeros((1, Nx)), np.cumsum(row, axis=0)], axis=0)
    i = np.arange(Nt)
    tlo = np.clip(i - kmax, 0, Nt)
    thi = i + 1
    sums = Ct[thi] - Ct[tlo]
    counts = float((hi - lo + 1) * (kmax + 1))
    return sums, np.full((Nt, Nx), counts)


def _cyl_sums(vals, axes, r, geometry):
    if geometry == "kinetic":
        return _cyl_sums_kinetic(vals, axes, r)
    if geometry == "parabolic":
        return _cyl_sums_parabolic(vals, axes, r)
    raise ValueError(f"unknown geometry {geometry!r}")


def maximal_function(g, radii=None):
    """Discrete maximal function over anchored dyadic cylinders.

    Family: for every grid point z and every dyadic radius, the cylinder
    Q_r(z) anchored at z (z is its top center, hence contained in it).  The
    cell-averages use the full cylinder volume with g extended by zero, so
    the result under-estimates the continuum maximal function and inherits
    its weak (1,1) inequality.
    """
    roles = g.roles()
    geometry = "kinetic" if "v" in roles else "parabolic"
    if radii is None:
        rmax = math.sqrt(g.axes[0].hi - g.axes[0].lo)
        radii = [rmax / 2 ** k for k in range(4)]
    vals = np.abs(g.values)
    best = np.zeros_like(vals)
    for r in radii:
        s, cnt = _cyl_sums(vals, g.axes, r, geometry)
        np.maximum(best, s / cnt, out=best)
    return g.copy_with(best)


def maximal_inequality_constant(g, Mg, kappas):
    """max over kappa of |{Mg > kappa}| kappa / ||g||_1."""
    l1 = g.norm_lp(1)
    vol = g.cell_volume
    worst = 0.0
    for kappa in kappas:
        meas = float((Mg.values > kappa).sum()) * vol
        worst = max(worst, meas * kappa / l1) if l1 > 0 else worst
    return worst


# ---------------------------------------------------------------------------
# Interval stacking and stacked cylinder unions
# ---------------------------------------------------------------------------

def _union_measure(intervals):
    """Exact measure of a finite union of intervals given as (lo, hi)."""
    ivs = sorted((lo, hi) for lo, hi in intervals if hi > lo)
    total = 0.0
    cur_lo, cur_hi = None, None
    for lo, hi in ivs:
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


@dataclass
class StackRatioReport:
    measure_stacked: float
    measure_base: float
    ratio: float
    bound: float
    slack: float
    passed: bool


def interval_stack_ratio(family, m):
    """Compare |U (a_k, a_k + m h_k)| against |U (a_k - h_k, a_k]| exactly."""
    pairs = family.pairs if isinstance(family, IntervalFamily) else list(family)
    stacked = _union_measure([(a, a + m * h) for a, h in pairs])
    base = _union_measure([(a - h, a) for a, h in pairs])
    ratio = math.inf if base == 0.0 else stacked / base
    bound = m / (m + 1.0)
    return StackRatioReport(stacked, base, ratio, bound, 0.0, ratio >= bound)


def _family_bounds(members, m):
    """Bounding box covering every base cylinder and its m-stack."""
    kin = isinstance(members[0], KineticCylinder)
    lo = None
    hi = None
    for q in members:
        r = q.radius
        if kin:
            z0 = q.center
            span_v = np.abs(z0.v) * max(r * r, m * r * r)
            xw = (m + 2) * r ** 3 + span_v
            l = np.concatenate([[z0.t - r * r], z0.x - xw, z0.v - r])
            h = np.concatenate([[z0.t + m * r * r], z0.x + xw, z0.v + r])
        else:
            l = np.concatenate([[q.t0 - r * r], q.x0 - r])
            h = np.concatenate([[q.t0 + m * r * r], q.x0 + r])
        lo = l if lo is None else np.minimum(lo, l)
        hi = h if hi is None else np.maximum(hi, h)
    return lo, hi


def stacked_union_ratio(family, m, cells_per_unit=128):
    """Raster comparison |U stacked| >= m/(m+1) |U base| with reported slack."""
    members = family.members if isinstance(family, CylinderFamily) else list(family)
    if not members:
        raise ValueError("empty family")
    kin = isinstance(members[0], KineticCylinder)
    d = members[0].d
    roles = ["t"] + ["x"] * d + ["v"] * d if kin else ["t"] + ["x"] * d
    lo, hi = _family_bounds(members, m)
    pad = 0.02 * (hi - lo)
    bounds = list(zip(lo - pad, hi + pad))
    base = RasterMask.for_box(bounds, roles, cells_per_unit)
    stacked = RasterMask(base.axes)
    for q in members:
        base.add(q)
        stacked.add(StackedCylinder(q, m))
    mb, ms = base.measure(), stacked.measure()
    slack = base.boundary_slack() + stacked.boundary_slack()
    ratio = math.inf if mb == 0.0 else ms / mb
    bound = m / (m + 1.0)
    passed = ms + slack >= bound * max(mb - slack, 0.0)
    return StackRatioReport(ms, mb, ratio, bound, slack, passed)


# ---------------------------------------------------------------------------
# Ink spots
# ---------------------------------------------------------------------------

def crawling_constant(d, geometry, mu=0.5):
    """The measure-decay constant of the crawling ink spots lemma."""
    if geometry == "elliptic":
        return 5.0 ** (-d)
    return 5.0 ** (-1 - d) * mu / 2.0   # = 5^{-1-d} 2^{-2} at mu = 1/2


def leak_constant(d, geometry):
    """Constant C in the leakage allowance C m r0^2 of the stacked covering."""
    ball = 2.0 if d == 1 else math.pi if d == 2 else 4.0 * math.pi / 3.0
    if geometry == "parabolic":
        return ball
    return (1.0 + d * 2.0 ** d) * ball ** 2


def _stack_subbox(base, m, axes):
    """Axis index slices of the bounding box of an m-stack."""
    r = base.radius
    if isinstance(base, ParabolicCylinder):
        lo = [base.t0, float(base.x0[0]) - r]
        hi = [base.t0 + m * r * r, float(base.x0[0]) + r]
    else:
        z0 = base.center
        v0 = float(z0.v[0])
        xw = (m + 2) * r ** 3
        lo = [z0.t, float(z0.x[0]) + min(0.0, m * r * r * v0) - xw, v0 - r]
        hi = [z0.t + m * r * r, float(z0.x[0]) + max(0.0, m * r * r * v0) + xw, v0 + r]
    slices = []
    for a, l, h in zip(axes, lo, hi):
        i0 = max(int(math.floor((l - a.lo) / a.h)) - 1, 0)
        i1 = min(int(math.ceil((h - a.lo) / a.h)) + 1, a.n)
        slices.append(slice(i0, i1))
    return tuple(slices)


def _stack_cells(mask_obj, base, m):
    """(subbox slices, boolean stack membership on the subbox)."""
    sl = _stack_subbox(base, m, mask_obj.axes)
    coords = [a.centers()[s] for a, s in zip(mask_obj.axes, sl)]
    grids = np.meshgrid(*coords, indexing="ij")
    return sl, membership_mask(StackedCylinder(base, m), grids)


def _family_cylinder(geometry, anchor, r):
    if geometry == "parabolic":
        return ParabolicCylinder(anchor[0], [anchor[1]], r)
    return KineticCylinder(PhasePoint(anchor[0], [anchor[1]], [anchor[2]]), r)


@dataclass
class InkSpotsReport:
    measure_E: float
    measure_F_in_Q1: float
    c: float
    C: float
    m: int
    r0: float
    rhs: float
    passed: bool
    hypothesis_ok: bool
    violations: list
    family: dict


def _q1_region_mask(mask_obj, geometry, d):
    grids = mask_obj.grids()
    t = grids[0]
    inside = (t > -1.0) & (t <= 0.0)
    sx = sum(grids[1 + k] ** 2 for k in range(d))
    inside &= sx < 1.0
    if geometry == "kinetic":
        sv = sum(grids[1 + d + k] ** 2 for k in range(d))
        inside &= sv < 1.0
    return inside


def _anchor_admissible(mask_obj, geometry, d, r):
    """Anchors whose cylinder Q_r is contained in Q1 (d = 1 lattices)."""
    grids = mask_obj.grids()
    t = grids[0]
    ok = (t <= 0.0) & (t - r * r > -1.0)
    if geometry == "parabolic":
        ok &= np.abs(grids[1]) + r < 1.0
    else:
        x, v = grids[1], grids[2]
        ok &= np.abs(x) + r * r * np.abs(v) + r ** 3 < 1.0
        ok &= np.abs(v) + r < 1.0
    return ok


def _dyadic_radii(mask_obj, geometry, k_cap=6):
    """Dyadic radii kept raster-resolved (>= 2 cells per cylinder half-axis)."""
    dt = mask_obj.axes[0].h
    dx = mask_obj.axes[1].h
    radii = []
    for k in range(k_cap + 1):
        r = 2.0 ** (-k)
        fine = r ** 3 if geometry == "kinetic" else r
        if r * r < 2 * dt or fine < 2 * dx:
            break
        radii.append(r)
    return radii


def _lattice_mask(shape, stride):
    if stride <= 1:
        return True
    grids = np.ix_(*[np.arange(n) % stride == 0 for n in shape])
    out = np.zeros(shape, dtype=bool)
    out[grids] = True
    return out


def ink_spots_check(E, F, geometry, m, r0, mu=0.5, k_cap=6, stack_check_cap=200,
                    stride=1, rng=None):
    """Verify the stacked ink-spots inequality on rasterized sets.

    E, F: RasterMask objects on the same (extended) box containing Q1.
    Hypothesis, over the documented family (dyadic radii, anchors at every
    admissible lattice point): every family cylinder Q inside Q1 with
    |Q cap E| > mu |Q| must have radius < r0 and its m-stack inside F (the
    stack containment is spot-checked on up to stack_check_cap cylinders).
    Conclusion: |E| <= (m+1)/m (1-c) (|F cap Q1| + C m r0^2).
    """
    d = 1
    if E.axes != F.axes:
        raise ValueError("E and F must share a lattice")
    vol = E.cell_volume
    q1 = _q1_region_mask(E, geometry, d)
    if np.any(E.mask & ~F.mask) or np.any(E.mask & ~q1):
        raise ValueError("precondition E subset of F cap Q1 violated")
    measure_E = E.measure()
    measure_F_q1 = float((F.mask & q1).sum()) * vol

    radii = _dyadic_radii(E, geometry, k_cap)
    lattice = _lattice_mask(E.mask.shape, stride)
    violations = []
    flagged = []
    for r in radii:
        adm = _anchor_admissible(E, geometry, d, r) & lattice
        if not adm.any():
            continue
        sums, counts = _cyl_sums(E.mask.astype(float), E.axes, r, geometry)
        hot = (sums > mu * counts) & adm
        if not hot.any():
            continue
        if r >= r0:
            idx = np.argwhere(hot)[0]
            violations.append({"radius": r, "anchor_index": idx.tolist(),
                               "reason": "half-filled cylinder with r >= r0"})
            continue
        for idx in np.argwhere(hot):
            flagged.append((r, tuple(idx)))

    rng = np.random.default_rng(0) if rng is None else rng
    check = flagged
    if len(flagged) > stack_check_cap:
        sel = rng.choice(len(flagged), size=stack_check_cap, replace=False)
        check = [flagged[i] for i in sorted(sel)]
    for r, idx in check:
        anchor = [E.axes[k].centers()[idx[k]] for k in range(len(idx))]
        base = _family_cylinder(geometry, anchor, r)
        sl, stack_cells = _stack_cells(F, base, m)
        missing = stack_cells & ~F.mask[sl]
        if missing.any():
            violations.append({"radius": r, "anchor_index": list(idx),
                               "reason": "stacked cylinder not inside F",
                               "missing_cells": int(missing.sum())})

    c = crawling_constant(d, geometry, mu)
    C = leak_constant(d, geometry)
    rhs = (m + 1.0) / m * (1.0 - c) * (measure_F_q1 + C * m * r0 ** 2)
    hypothesis_ok = not violations
    passed = hypothesis_ok and measure_E <= rhs + E.boundary_slack()
    family = {"radii": radii, "anchor_stride": stride,
              "anchors": "admissible lattice cells on the stride sublattice",
              "mu": mu, "flagged": len(flagged), "stack_checked": len(check)}
    return InkSpotsReport(measure_E, measure_F_q1, c, C, m, r0, rhs, passed,
                          hypothesis_ok, violations, family)


def synthesize_ink_spots_instance(geometry, m, r0, rng, cells_per_unit=96,
                                  n_seeds=4, k_cap=6, mu=0.5, stride=1):
    """Build an admissible (E, F) pair: E a union of small cylinders deep in
    Q1, F the union of E with the m-stacks of every half-filled family
    cylinder, so the theorem hypothesis holds by construction."""
    d = 1
    s = min(m * r0 * r0, 1.0)
    if geometry == "parabolic":
        roles = ["t", "x"]
        bounds = [(-1.0, s), (-1.0 - s, 1.0 + s)]
    else:
        roles = ["t", "x", "v"]
        xw = s + (m + 2) * r0 ** 3
        bounds = [(-1.0, s), (-1.0 - xw, 1.0 + xw), (-1.0, 1.0)]
    E = RasterMask.for_box(bounds, roles, cells_per_unit)
    radii_avail = _dyadic_radii(E, geometry, k_cap)
    small = [r for r in radii_avail if r < 0.6 * r0] or [radii_avail[-1]]
    for _ in range(n_seeds):
        r = small[int(rng.integers(len(small)))] * float(rng.uniform(0.8, 1.0))
        t0 = float(rng.uniform(-0.9 + r * r, -0.05))
        if geometry == "parabolic":
            x0 = float(rng.uniform(-0.9 + r, 0.9 - r))
            E.add(ParabolicCylinder(t0, [x0], r))
        else:
            v0 = float(rng.uniform(-0.9 + r, 0.9 - r))
            x0 = float(rng.uniform(-0.8, 0.8))
            E.add(KineticCylinder(PhasePoint(t0, [x0], [v0]), r))
    E.mask &= _q1_region_mask(E, geometry, d)

    F = RasterMask(E.axes, E.mask.copy())
    lattice = _lattice_mask(E.mask.shape, stride)
    for r in _dyadic_radii(E, geometry, k_cap):
        if r >= r0:
            # large half-filled cylinders would violate the hypothesis; the
            # synthesized E is sparse enough that none occur (checked below)
            continue
        adm = _anchor_admissible(E, geometry, d, r) & lattice
        if not adm.any():
            continue
        sums, counts = _cyl_sums(E.mask.astype(float), E.axes, r, geometry)
        hot = np.argwhere((sums > mu * counts) & adm)
        for idx in hot:
            anchor = [E.axes[k].centers()[idx[k]] for k in range(len(idx))]
            base = _family_cylinder(geometry, anchor, r)
            sl, cells = _stack_cells(F, base, m)
            F.mask[sl] |= cells
    return E, F


# ---------------------------------------------------------------------------
# Lebesgue differentiation probe
# ---------------------------------------------------------------------------

@dataclass
class LebesgueProbeReport:
    radii: list
    median_deviation: list
    monotone: bool


def lebesgue_differentiation_probe(g, samples=64, n_radii=4, rng=None):
    """Median over random anchors of the cylinder average of |g - g(z)|."""
    rng = np.random.default_rng(0) if rng is None else rng
    roles = g.roles()
    geometry = "kinetic" if "v" in roles else "parabolic"
    tspan = g.axes[0].hi - g.axes[0].lo
    rmax = 0.5 * math.sqrt(tspan)
    radii = [rmax / 2 ** k for k in range(n_radii)]
    vals = g.values
    devs = {r: [] for r in radii}
    # |g - g(z)| averages need per-anchor recentering; do it per sample
    shape = vals.shape
    for _ in range(samples):
        idx = tuple(int(rng.integers(max(1, n // 4), max(2, 3 * n // 4))) for n in shape)
        gz = vals[idx]
        for r in radii:
            s, cnt = _cyl_sums(np.abs(vals - gz), g.axes, r, geometry)
            s1, _ = _cyl_sums(np.ones_like(vals), g.axes, r, geometry)
            if s1[idx] > 0:
                devs[r].append(s[idx] / s1[idx])
    med = [float(np.median(devs[r])) for r in radii]
    monotone = all(med[i] >= med[i + 1] - 1e-12 for i in range(len(med) - 1))
    return LebesgueProbeReport(radii, med, monotone)
