"""Finite-difference solvers for divergence-form equations with rough
coefficients: steady diffusion, time-dependent diffusion, and the kinetic
transport-diffusion equation

    d_t f + v . grad_x f = div_v(A grad_v f) + B . grad_v f + S.

Coefficients are measurable symmetric-matrix fields with eigenvalues pinned
to [lam, Lam]; no smoothness is assumed anywhere.  Spatial discretization is
a symmetric face-flux scheme on uniform cell-centered lattices: the face
coefficient is the arithmetic mean of the diagonal coefficient entry in the
two adjacent cells, applied to the face-normal difference quotient.
Dirichlet data is imposed at ghost cell centers half a cell outside the box,
which keeps the stencil symmetric and exact on quadratic polynomials.

Time stepping is implicit Euler throughout (no stability constraint).  The
kinetic solver splits each step into an exact semi-Lagrangian shift
x <- x - v dt with linear interpolation (periodic in x), followed by an
implicit diffusion-drift solve in v, batched over x by a Thomas sweep.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .gridfn import Axis, GridFunction

__all__ = [
    "CoefficientField", "Problem", "Solution", "SolverError",
    "make_coefficients", "solve_elliptic", "solve_parabolic",
    "solve_kinetic_fp", "residual_check", "operator_symmetry_check",
    "TensorBump", "default_bumps",
]


class SolverError(RuntimeError):
    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


# ---------------------------------------------------------------------------
# Coefficient fields
# ---------------------------------------------------------------------------

_FIELD_KINDS = ("identity", "checkerboard", "random-piecewise-constant",
                "rotating-anisotropy")


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], axis=-1),
                     np.stack([s, c], axis=-1)], axis=-2)


@dataclass
class CoefficientField:
    """Symmetric-matrix field with eigenvalues in [lam, Lam].

    kind selects the evaluation rule; params holds the tiling box, tile
    count, and the per-tile random table for the random kind.  sample(points)
    maps (..., dp) point arrays to (..., dm, dm) matrices, where dm is the
    matrix dimension (dm = dp unless overridden, e.g. scalar diffusion in v
    varying over (x, v) pairs).
    """
    kind: str
    lam: float
    Lam: float
    d_mat: int
    params: dict = field(default_factory=dict)

    def _tile_index(self, pts):
        box = self.params.get("box")
        tiles = int(self.params.get("tiles", 8))
        dp = pts.shape[-1]
        if box is None:
            box = [(-1.0, 1.0)] * dp
        idx = []
        for k in range(dp):
            lo, hi = box[k]
            u = (pts[..., k] - lo) / (hi - lo)
            idx.append(np.clip(np.floor(u * tiles).astype(int), 0, tiles - 1))
        return idx, tiles

    def sample(self, points):
        pts = np.asarray(points, dtype=float)
        dm = self.d_mat
        eye = np.eye(dm)
        base = pts.shape[:-1]
        if self.kind == "identity":
            return np.broadcast_to(eye, base + (dm, dm)).copy()
        if self.kind == "checkerboard":
            idx, _ = self._tile_index(pts)
            parity = np.zeros(base, dtype=int)
            for a in idx:
                parity += a
            coef = np.where(parity % 2 == 0, self.lam, self.Lam)
            return coef[..., None, None] * eye
        if self.kind == "random-piecewise-constant":
            idx, tiles = self._tile_index(pts)
            flat = np.zeros(base, dtype=int)
            for a in idx:
                flat = flat * tiles + a
            eigs = self.params["eig_table"][flat]          # (..., dm)
            if dm == 1:
                return eigs[..., None]
            theta = self.params["theta_table"][flat]
            R = _rotation(theta)
            D = eigs[..., None] * np.eye(dm)
            return R @ D @ np.swapaxes(R, -1, -2)
        if self.kind == "rotating-anisotropy":
            if dm == 1:
                u = np.sin(3.0 * pts.sum(axis=-1))
                coef = 0.5 * (self.lam + self.Lam) + 0.5 * (self.Lam - self.lam) * u
                return coef[..., None, None]
            theta = np.arctan2(pts[..., 1], pts[..., 0])
            R = _rotation(theta)
            D = np.array([self.Lam] + [self.lam] * (dm - 1)) * np.eye(dm)
            return R @ D @ np.swapaxes(R, -1, -2)
        raise ValueError(f"unknown coefficient kind {self.kind!r}")

    def diag_entry(self, points, k):
        """k-th diagonal entry of the matrix at the given points."""
        return self.sample(points)[..., k, k]


def make_coefficients(spec, seed=0):
    """Build a CoefficientField from a plain dict spec.

    Keys: kind, lam, Lam, d (matrix dimension, default point dimension at
    sampling time = required for random kind), tiles, box.
    """
    kind = spec["kind"]
    if kind not in _FIELD_KINDS:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    lam = float(spec.get("lam", 1.0))
    Lam = float(spec.get("Lam", 1.0))
    if not (0 < lam <= Lam):
        raise ValueError("need 0 < lam <= Lam")
    dm = int(spec.get("d", 1))
    params = {k: spec[k] for k in ("tiles", "box") if k in spec}
    if kind == "random-piecewise-constant":
        tiles = int(spec.get("tiles", 8))
        dp = int(spec.get("point_dim", dm))
        rng = np.random.default_rng(seed)
        n = tiles ** dp
        params["eig_table"] = rng.uniform(lam, Lam, size=(n, dm))
        params["theta_table"] = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return CoefficientField(kind, lam, Lam, dm, params)


# ---------------------------------------------------------------------------
# Problems and solutions
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    kind: str                      # elliptic | parabolic | kinetic-fp
    axes: list                     # spatial axes; kinetic: x axes then v axes
    coefficients: CoefficientField
    boundary: object = 0.0         # Dirichlet trace g(points) or constant
    initial: object = None         # initial data f0(points) or constant
    source: object = 0.0           # S(points) or S(t, points) or constant
    drift: object = None           # kinetic drift B(points) -> (..., d)
    t_final: float = 0.0
    nt: int = 0
    periodic: bool = False         # parabolic: torus in x
    v_boundary: str = "dirichlet0"

    def __post_init__(self):
        if self.kind not in ("elliptic", "parabolic", "kinetic-fp"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind == "kinetic-fp" and self.v_boundary not in ("dirichlet0",):
            raise ValueError("kinetic v boundary must be dirichlet0")


@dataclass
class Solution:
    u: GridFunction
    info: dict


def _eval(data, pts, default=0.0):
    if data is None:
        data = default
    if isinstance(data, GridFunction):
        vals, _ = data.sample(pts)
        return vals
    if callable(data):
        return np.asarray(data(pts), dtype=float)
    if isinstance(data, np.ndarray) and data.shape == pts.shape[:-1]:
        return data.astype(float)
    return np.full(pts.shape[:-1], float(data))


def _cell_points(axes):
    grids = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
    return np.stack(grids, axis=-1)


# ---------------------------------------------------------------------------
# Symmetric face-flux operator on a box
# ---------------------------------------------------------------------------

class _DiffusionOperator:
    """Matrix-free  u -> -div(diag-face A grad u)  plus boundary plumbing."""

    def __init__(self, axes, A, boundary=0.0, periodic=False):
        self.axes = axes
        self.periodic = periodic
        pts = _cell_points(axes)
        d = len(axes)
        self.face_coef = []
        self.bdry_val = []
        for k, ax in enumerate(axes):
            a = A.diag_entry(pts, min(k, A.d_mat - 1))
            if periodic:
                # face j sits between cells j-1 and j (wrapping)
                fc = 0.5 * (a + np.roll(a, 1, axis=k))
                self.face_coef.append(fc)
                self.bdry_val.append(None)
                continue
            # ghost centers half a cell outside the box
            glo = pts.take([0], axis=k).copy()
            glo[..., k] = ax.lo - 0.5 * ax.h
            ghi = pts.take([-1], axis=k).copy()
            ghi[..., k] = ax.hi + 0.5 * ax.h
            a_glo = A.diag_entry(glo, min(k, A.d_mat - 1))
            a_ghi = A.diag_entry(ghi, min(k, A.d_mat - 1))
            inner = 0.5 * (np.take(a, range(0, ax.n - 1), axis=k)
                           + np.take(a, range(1, ax.n), axis=k))
            face = np.concatenate([0.5 * (a_glo + a.take([0], axis=k)), inner,
                                   0.5 * (a_ghi + a.take([-1], axis=k))], axis=k)
            self.face_coef.append(face)      # ax.n + 1 faces along axis k
            self.bdry_val.append((_eval(boundary, glo).take(0, axis=k),
                                  _eval(boundary, ghi).take(0, axis=k)))

    def apply(self, u):
        """-div flux with zero Dirichlet data (the homogeneous part)."""
        out = np.zeros_like(u)
        d = len(self.axes)
        for k, ax in enumerate(self.axes):
            h2 = ax.h * ax.h
            if self.periodic:
                fc = self.face_coef[k]
                um = np.roll(u, 1, axis=k)
                flux_lo = fc * (u - um)                     # face below cell
                flux_hi = np.roll(flux_lo, -1, axis=k)      # face above cell
                out += (flux_lo - flux_hi) / h2
                continue
            face = self.face_coef[k]
            sl = [slice(None)] * d
            pad = [(0, 0)] * d
            pad[k] = (1, 1)
            ue = np.pad(u, pad)                             # ghost = 0
            sl_lo = tuple(slice(None) if i != k else slice(0, ax.n) for i in range(d))
            sl_c = tuple(slice(None) if i != k else slice(1, ax.n + 1) for i in range(d))
            sl_hi = tuple(slice(None) if i != k else slice(2, ax.n + 2) for i in range(d))
            f_lo = face[tuple(slice(None) if i != k else slice(0, ax.n) for i in range(d))]
            f_hi = face[tuple(slice(None) if i != k else slice(1, ax.n + 1) for i in range(d))]
            out += (f_lo * (ue[sl_c] - ue[sl_lo]) + f_hi * (ue[sl_c] - ue[sl_hi])) / h2
        return out

    def boundary_rhs(self):
        """Contribution of the Dirichlet ghost values to the right side."""
        d = len(self.axes)
        shape = tuple(a.n for a in self.axes)
        rhs = np.zeros(shape)
        if self.periodic:
            return rhs
        for k, ax in enumerate(self.axes):
            h2 = ax.h * ax.h
            face = self.face_coef[k]
            g_lo, g_hi = self.bdry_val[k]
            f_lo = face.take(0, axis=k)
            f_hi = face.take(-1, axis=k)
            first = tuple(slice(None) if i != k else 0 for i in range(d))
            last = tuple(slice(None) if i != k else ax.n - 1 for i in range(d))
            rhs[first] += f_lo * g_lo / h2
            rhs[last] += f_hi * g_hi / h2
        return rhs

    def diagonal(self):
        d = len(self.axes)
        shape = tuple(a.n for a in self.axes)
        diag = np.zeros(shape)
        for k, ax in enumerate(self.axes):
            h2 = ax.h * ax.h
            if self.periodic:
                fc = self.face_coef[k]
                diag += (fc + np.roll(fc, -1, axis=k)) / h2
                continue
            face = self.face_coef[k]
            f_lo = face[tuple(slice(None) if i != k else slice(0, ax.n) for i in range(d))]
            f_hi = face[tuple(slice(None) if i != k else slice(1, ax.n + 1) for i in range(d))]
            diag += (f_lo + f_hi) / h2
        return diag

    def boundary_extremes(self):
        vals = []
        for pair in self.bdry_val:
            if pair is not None:
                vals.extend([float(pair[0].min()), float(pair[0].max()),
                             float(pair[1].min()), float(pair[1].max())])
        return (min(vals), max(vals)) if vals else (math.inf, -math.inf)


def _pcg(apply_op, rhs, diag, tol=1e-10, max_iter=20000, shift=0.0):
    """Jacobi-preconditioned conjugate gradients for (shift I + L) u = rhs."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    M = 1.0 / (diag + shift)
    z = M * r
    p = z.copy()
    rz = float((r * z).sum())
    nrhs = float(np.linalg.norm(rhs))
    history = []
    if nrhs == 0.0:
        return x, history
    for it in range(max_iter):
        Ap = shift * p + apply_op(p)
        alpha = rz / float((p * Ap).sum())
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / nrhs
        history.append(res)
        if res <= tol:
            return x, history
        z = M * r
        rz_new = float((r * z).sum())
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"conjugate gradients stalled at {history[-1]:.3e}", history)


def operator_symmetry_check(P, n_trials=5, seed=0):
    """max |<Lu, w> - <u, Lw>| / (|Lu||w|) over random vectors."""
    op = _DiffusionOperator(P.axes, P.coefficients, P.boundary, P.periodic)
    rng = np.random.default_rng(seed)
    shape = tuple(a.n for a in P.axes)
    worst = 0.0
    for _ in range(n_trials):
        u = rng.standard_normal(shape)
        w = rng.standard_normal(shape)
        lu, lw = op.apply(u), op.apply(w)
        num = abs(float((lu * w).sum()) - float((u * lw).sum()))
        den = float(np.linalg.norm(lu)) * float(np.linalg.norm(w)) + 1e-300
        worst = max(worst, num / den)
    return worst


# ---------------------------------------------------------------------------
# Elliptic and parabolic solves
# ---------------------------------------------------------------------------

def solve_elliptic(P, tol=1e-10):
    if P.kind != "elliptic":
        raise ValueError("expected an elliptic problem")
    op = _DiffusionOperator(P.axes, P.coefficients, P.boundary, P.periodic)
    pts = _cell_points(P.axes)
    rhs = _eval(P.source, pts) + op.boundary_rhs()
    u, history = _pcg(op.apply, rhs, op.diagonal(), tol=tol)
    info = {"iterations": len(history), "residual_history": history,
            "tol": tol}
    source_free = (not callable(P.source)) and float(P.source) == 0.0
    if source_free and not P.periodic:
        blo, bhi = op.boundary_extremes()
        info["max_principle"] = {
            "data_min": blo, "data_max": bhi,
            "u_min": float(u.min()), "u_max": float(u.max()),
            "ok": bool(u.min() >= blo - 1e-9 and u.max() <= bhi + 1e-9)}
    return Solution(GridFunction(P.axes, u), info)


def solve_parabolic(P, tol=1e-10, store_every=1):
    if P.kind != "parabolic":
        raise ValueError("expected a parabolic problem")
    if P.nt < 1 or P.t_final <= 0:
        raise ValueError("need nt >= 1 and t_final > 0")
    op = _DiffusionOperator(P.axes, P.coefficients, P.boundary, P.periodic)
    pts = _cell_points(P.axes)
    dt = P.t_final / P.nt
    u = _eval(P.initial, pts)
    diag = op.diagonal()
    brhs = op.boundary_rhs()
    iters = []
    energy = [float((u * u).sum())]
    history = [u.copy()]
    times = [0.0]
    for n in range(P.nt):
        t_new = (n + 1) * dt
        if callable(P.source):
            try:
                S = np.asarray(P.source(t_new, pts), dtype=float)
            except TypeError:
                S = np.asarray(P.source(pts), dtype=float)
        else:
            S = np.full(u.shape, float(P.source))
        rhs = u / dt + S + brhs
        u, h = _pcg(op.apply, rhs, diag, tol=tol, shift=1.0 / dt)
        iters.append(len(h))
        energy.append(float((u * u).sum()))
        if (n + 1) % store_every == 0 or n == P.nt - 1:
            history.append(u.copy())
            times.append(t_new)
    info = {"dt": dt, "iterations": iters, "energy": energy,
            "times": times, "history": history}
    source_free = (not callable(P.source)) and float(P.source) == 0.0
    if source_free and not P.periodic:
        blo, bhi = op.boundary_extremes()
        u0 = history[0]
        lo = min(blo, float(u0.min()))
        hi = max(bhi, float(u0.max()))
        info["max_principle"] = {
            "data_min": lo, "data_max": hi,
            "u_min": float(u.min()), "u_max": float(u.max()),
            "ok": bool(u.min() >= lo - 1e-9 and u.max() <= hi + 1e-9)}
    return Solution(GridFunction(P.axes, u), info)


# ---------------------------------------------------------------------------
# Kinetic transport-diffusion
# ---------------------------------------------------------------------------

def _transport_x(f, x_axis, v_axis, dt):
    """Periodic semi-Lagrangian shift f(x, v) <- f(x - v dt, v)."""
    Nx = x_axis.n
    s = v_axis.centers() * dt / x_axis.h       # shift in cells, per v column
    k = np.floor(s).astype(int)
    w = s - k
    i = np.arange(Nx)[:, None]
    j = np.arange(v_axis.n)[None, :]
    i0 = (i - k[None, :]) % Nx
    i1 = (i - k[None, :] - 1) % Nx
    return (1.0 - w)[None, :] * f[i0, j] + w[None, :] * f[i1, j]


def _v_step_matrices(P, pts):
    """Tridiagonal coefficients of the implicit v operator, per x column."""
    x_axis, v_axis = P.axes
    hv = v_axis.h
    a = P.coefficients.diag_entry(pts, P.coefficients.d_mat - 1)  # (Nx, Nv)
    # face coefficients in v, ghost cells half a step outside with same rule
    lo_pts = pts[:, :1, :].copy()
    lo_pts[..., 1] = v_axis.lo - 0.5 * hv
    hi_pts = pts[:, -1:, :].copy()
    hi_pts[..., 1] = v_axis.hi + 0.5 * hv
    a_lo = P.coefficients.diag_entry(lo_pts, P.coefficients.d_mat - 1)
    a_hi = P.coefficients.diag_entry(hi_pts, P.coefficients.d_mat - 1)
    ae = np.concatenate([a_lo, a, a_hi], axis=1)
    face = 0.5 * (ae[:, :-1] + ae[:, 1:])            # (Nx, Nv+1)
    B = np.zeros_like(a)
    if P.drift is not None:
        B = _eval(P.drift, pts)
    # -div_v(a d_v f) - B d_v f on the column; central drift difference
    lower = -face[:, :-1] / hv ** 2 + B / (2.0 * hv)
    upper = -face[:, 1:] / hv ** 2 - B / (2.0 * hv)
    diag = (face[:, :-1] + face[:, 1:]) / hv ** 2
    return lower, diag, upper


def _thomas_batched(lower, diag, upper, rhs):
    """Solve tridiagonal systems batched along axis 0 (one per x column)."""
    n = diag.shape[1]
    c = np.zeros_like(diag)
    d = np.zeros_like(rhs)
    c[:, 0] = upper[:, 0] / diag[:, 0]
    d[:, 0] = rhs[:, 0] / diag[:, 0]
    for j in range(1, n):
        den = diag[:, j] - lower[:, j] * c[:, j - 1]
        c[:, j] = upper[:, j] / den
        d[:, j] = (rhs[:, j] - lower[:, j] * d[:, j - 1]) / den
    x = np.zeros_like(rhs)
    x[:, -1] = d[:, -1]
    for j in range(n - 2, -1, -1):
        x[:, j] = d[:, j] - c[:, j] * x[:, j + 1]
    return x


def solve_kinetic_fp(P, store_every=1):
    """Split-step kinetic solve: exact x-transport, implicit v-diffusion.

    Axes must be (x periodic, v); Dirichlet 0 at the v boundary.  Mass is
    conserved by transport exactly and by diffusion up to the flux through
    the v boundary; the running mass trace is reported.
    """
    if P.kind != "kinetic-fp":
        raise ValueError("expected a kinetic-fp problem")
    if len(P.axes) != 2 or P.axes[0].role != "x" or P.axes[1].role != "v":
        raise ValueError("kinetic axes must be (x, v) at d = 1")
    if P.nt < 1 or P.t_final <= 0:
        raise ValueError("need nt >= 1 and t_final > 0")
    x_axis, v_axis = P.axes
    pts = _cell_points(P.axes)
    dt = P.t_final / P.nt
    f = _eval(P.initial, pts)
    lower, diag, upper = _v_step_matrices(P, pts)
    Idt = 1.0 / dt
    mass = [float(f.sum()) * x_axis.h * v_axis.h]
    history = [f.copy()]
    times = [0.0]
    for n in range(P.nt):
        f = _transport_x(f, x_axis, v_axis, dt)
        t_new = (n + 1) * dt
        if callable(P.source):
            try:
                S = np.asarray(P.source(t_new, pts), dtype=float)
            except TypeError:
                S = np.asarray(P.source(pts), dtype=float)
        else:
            S = np.full(f.shape, float(P.source))
        rhs = f * Idt + S
        f = _thomas_batched(lower * 1.0, diag + Idt, upper * 1.0, rhs)
        mass.append(float(f.sum()) * x_axis.h * v_axis.h)
        if (n + 1) % store_every == 0 or n == P.nt - 1:
            history.append(f.copy())
            times.append(t_new)
    info = {"dt": dt, "mass": mass, "times": times, "history": history,
            "mass_drift": mass[-1] - mass[0]}
    source_free = (not callable(P.source)) and float(P.source) == 0.0
    if source_free:
        f0 = history[0]
        lo = min(0.0, float(f0.min()))
        hi = max(0.0, float(f0.max()))
        info["max_principle"] = {
            "data_min": lo, "data_max": hi,
            "u_min": float(f.min()), "u_max": float(f.max()),
            "ok": bool(f.min() >= lo - 1e-9 and f.max() <= hi + 1e-9)}
    return Solution(GridFunction(P.axes, f), info)


# ---------------------------------------------------------------------------
# Weak-form residual checks
# ---------------------------------------------------------------------------

def _bump1(u):
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - u[m] ** 2))
    return out


def _bump1_d(u):
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - u[m] ** 2)) * (-2.0 * u[m] / (1.0 - u[m] ** 2) ** 2)
    return out


@dataclass
class TensorBump:
    """Product of 1-D bumps, one factor per coordinate; centers c, widths w."""
    centers: np.ndarray
    widths: np.ndarray

    def value(self, pts):
        u = (np.asarray(pts) - self.centers) / self.widths
        out = np.ones(u.shape[:-1])
        for k in range(u.shape[-1]):
            out *= _bump1(u[..., k])
        return out

    def partial(self, pts, k):
        u = (np.asarray(pts) - self.centers) / self.widths
        out = np.ones(u.shape[:-1])
        for i in range(u.shape[-1]):
            f = _bump1_d(u[..., i]) / self.widths[i] if i == k else _bump1(u[..., i])
            out *= f
        return out


def default_bumps(bounds, n=5, seed=0):
    """A battery of bumps supported strictly inside the given box."""
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    span = hi - lo
    bumps = []
    for _ in range(n):
        w = span * rng.uniform(0.15, 0.3, size=len(bounds))
        c = rng.uniform(lo + 1.05 * w, hi - 1.05 * w)
        bumps.append(TensorBump(c, w))
    return bumps


def _face_grad_sum(u, phi_vals, face_coef, axes):
    """sum over faces of a_face (D u)(D phi) h^d for interior faces."""
    d = len(axes)
    vol = 1.0
    for a in axes:
        vol *= a.h
    total = 0.0
    for k, ax in enumerate(axes):
        du = np.diff(u, axis=k) / ax.h
        dphi = np.diff(phi_vals, axis=k) / ax.h
        face = face_coef[k][tuple(slice(None) if i != k else slice(1, ax.n)
                                  for i in range(d))]
        total += float((face * du * dphi).sum()) * vol
    return total


def residual_check(sol, P, bumps=None, n_bumps=5, seed=0):
    """Weak-form residual against a battery of interior tensor bumps.

    Elliptic:  R(phi) = sum_faces a (Du)(Dphi) - int S phi.
    Kinetic:   R(phi) = -int f (d_t phi + v d_x phi)
                        + int a (D_v f)(D_v phi) - int (B D_v f + S) phi,
    integrated over the stored time slices by the midpoint-in-cells,
    trapezoid-in-time rule.  Returns max |R(phi)| over the battery, scaled
    by the solution's L2 norm.
    """
    if P.kind == "elliptic":
        axes = sol.u.axes
        bounds = [(a.lo, a.hi) for a in axes]
        if bumps is None:
            bumps = default_bumps(bounds, n_bumps, seed)
        op = _DiffusionOperator(axes, P.coefficients, P.boundary, P.periodic)
        pts = _cell_points(axes)
        S = _eval(P.source, pts)
        vol = sol.u.cell_volume
        worst = 0.0
        per_bump = []
        for b in bumps:
            phi = b.value(pts)
            r = _face_grad_sum(sol.u.values, phi, op.face_coef, axes)
            r -= float((S * phi).sum()) * vol
            per_bump.append(r)
            worst = max(worst, abs(r))
        scale = sol.u.norm_lp(2) + 1e-300
        return {"max_residual": worst, "scaled": worst / scale,
                "per_bump": per_bump, "n_bumps": len(bumps)}
    if P.kind == "kinetic-fp":
        x_axis, v_axis = P.axes
        hist = sol.info["history"]
        times = sol.info["times"]
        bounds = [(times[0], times[-1]), (x_axis.lo, x_axis.hi),
                  (v_axis.lo, v_axis.hi)]
        if bumps is None:
            bumps = default_bumps(bounds, n_bumps, seed)
        pts = _cell_points(P.axes)
        a = P.coefficients.diag_entry(pts, P.coefficients.d_mat - 1)
        face_v = np.zeros((x_axis.n, v_axis.n + 1))
        face_v[:, 1:-1] = 0.5 * (a[:, :-1] + a[:, 1:])
        B = _eval(P.drift, pts) if P.drift is not None else np.zeros_like(a)
        vol = x_axis.h * v_axis.h
        V = pts[..., 1]
        worst = 0.0
        per_bump = []
        for b in bumps:
            acc = 0.0
            for idx, (t, f) in enumerate(zip(times, hist)):
                tp = np.concatenate([np.full(pts.shape[:-1] + (1,), t), pts], axis=-1)
                phi = b.value(tp)
                dtphi = b.partial(tp, 0)
                dxphi = b.partial(tp, 1)
                dvphi = b.partial(tp, 2)
                term = -float((f * (dtphi + V * dxphi)).sum()) * vol
                dvf = np.diff(f, axis=1) / v_axis.h
                dvp = np.diff(phi, axis=1) / v_axis.h
                fa = face_v[:, 1:-1]
                term += float((fa * dvf * dvp).sum()) * vol
                dvf_c = np.gradient(f, v_axis.h, axis=1)
                if callable(P.source):
                    try:
                        S = np.asarray(P.source(t, pts), dtype=float)
                    except TypeError:
                        S = np.asarray(P.source(pts), dtype=float)
                else:
                    S = np.full(f.shape, float(P.source))
                term -= float(((B * dvf_c + S) * phi).sum()) * vol
                wtime = 0.5 if idx in (0, len(times) - 1) else 1.0
                if len(times) > 1:
                    acc += wtime * term * (times[1] - times[0])
            per_bump.append(acc)
            worst = max(worst, abs(acc))
        scale = sol.u.norm_lp(2) + 1e-300
        return {"max_residual": worst, "scaled": worst / scale,
                "per_bump": per_bump, "n_bumps": len(bumps)}
    raise ValueError(f"no residual check for kind {P.kind!r}")
