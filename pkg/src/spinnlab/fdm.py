"""Layer-resolving finite-difference references on Shishkin meshes.

Upwind convection plus central diffusion on a piecewise-uniform mesh whose
transition point tau = min(1/2, (2 eps / beta) ln N) packs half the
intervals into the boundary layer; first order, epsilon-uniformly
convergent up to a ln N factor.  The 2-D steady solver decouples the
constant-coefficient cross direction with a discrete sine transform and
solves one tridiagonal system per mode (a direct method, so the discrete
residual is at solver precision); the parabolic solver steps implicit Euler
with one tridiagonal solve per step.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dst
from scipy.linalg import solve_banded

from . import autodiff as ad
from .errors import ConfigurationError, NumericError

SIGMA = 2.0  # Shishkin transition constant


@dataclass(frozen=True)
class Mesh1D:
    """Nodes of one axis; ``tau`` is None for a uniform (layer-free) axis."""

    nodes: np.ndarray
    tau: float | None = None
    layer_at: float | None = None

    @property
    def n(self):
        return len(self.nodes) - 1


def shishkin_mesh(n, epsilon, beta, layer_at):
    """Piecewise-uniform mesh on [0, 1] with n intervals, half of them inside
    the layer region of width tau next to ``layer_at`` (0 or 1)."""
    if n < 4 or n % 2:
        raise ConfigurationError("interval count must be even and >= 4")
    tau = min(0.5, (SIGMA * epsilon / beta) * math.log(n))
    half = n // 2
    if layer_at >= 0.5:
        coarse = np.linspace(0.0, 1.0 - tau, half + 1)
        fine = np.linspace(1.0 - tau, 1.0, half + 1)
    else:
        fine = np.linspace(0.0, tau, half + 1)
        coarse = np.linspace(tau, 1.0, half + 1)
        return Mesh1D(np.concatenate([fine, coarse[1:]]), tau, layer_at)
    return Mesh1D(np.concatenate([coarse, fine[1:]]), tau, layer_at)


def uniform_mesh(n):
    return Mesh1D(np.linspace(0.0, 1.0, n + 1))


@dataclass
class GridSolution:
    """Reference values on the tensor grid of ``axes`` (1 or 2 of them)."""

    problem: str
    epsilon: float
    axes: tuple
    values: np.ndarray
    n: int
    m: int | None
    scheme: str

    def points_and_values(self):
        """Flatten to ((k, d) points, (k,) values) in lexicographic order."""
        if len(self.axes) == 1:
            return self.axes[0].reshape(-1, 1), self.values.reshape(-1)
        xs, ys = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        pts = np.column_stack([xs.reshape(-1), ys.reshape(-1)])
        return pts, self.values.reshape(-1)


def _operator_rows(mesh, epsilon, p, q):
    """Tridiagonal coefficients of -eps u'' + p u' + q u at interior nodes.

    Central second difference on the nonuniform mesh; first difference
    upwinded by the sign of the convection coefficient.  Returns (lower,
    diag, upper) of length n-1 aligned with nodes 1..n-1.
    """
    x = mesh.nodes
    h = np.diff(x)
    hl, hr = h[:-1], h[1:]
    lo = -epsilon * 2.0 / (hl * (hl + hr))
    up = -epsilon * 2.0 / (hr * (hl + hr))
    di = -(lo + up)
    if p > 0.0:
        lo = lo - p / hl
        di = di + p / hl
    elif p < 0.0:
        up = up + p / hr
        di = di - p / hr
    di = di + q
    return lo, di, up


def _tridiag_solve(lo, di, up, rhs):
    n = len(di)
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[1, :] = di
    ab[2, :-1] = lo[1:]
    if np.any(di == 0.0):
        raise NumericError("singular tridiagonal system (zero diagonal)")
    return solve_banded((1, 1), ab, rhs)


def _face_value(problem, dim, position, tang):
    for face in problem.dirichlet:
        if face.dim == dim and face.position == position:
            g = face.trace([np.asarray(tang, dtype=float).reshape(-1, 1)]
                           if np.ndim(tang) else [tang])
            return np.asarray(ad.value_of(g), dtype=float).reshape(-1) if np.ndim(tang) \
                else float(ad.value_of(g))
    raise ConfigurationError(f"{problem.name}: no Dirichlet face {dim}@{position}")


def solve_steady_1d(problem, n):
    """Upwind/central scheme for the steady 1-D problems; direct solve."""
    if problem.domain != "interval" or problem.fdm is None:
        raise ConfigurationError(f"{problem.name} is not a steady 1-D problem")
    form = problem.fdm
    mesh = shishkin_mesh(n, problem.epsilon, form.beta, form.layer_pos)
    x = mesh.nodes
    lo, di, up = _operator_rows(mesh, problem.epsilon, form.p[0], form.q)
    rhs = form.f(x[1:-1]).astype(float)
    g0 = _face_value(problem, 0, 0.0, None)
    g1 = _face_value(problem, 0, 1.0, None)
    rhs[0] -= lo[0] * g0
    rhs[-1] -= up[-1] * g1
    u = np.empty(n + 1)
    u[0], u[-1] = g0, g1
    u[1:-1] = _tridiag_solve(lo, di, up, rhs)
    return GridSolution(problem.name, problem.epsilon, (x,), u, n, None,
                        "shishkin-upwind")


def _steady_2d_parts(problem, n):
    """Meshes and 1-D operator pieces of the separable 2-D scheme."""
    form = problem.fdm
    ld = form.layer_dim
    cd = 1 - ld
    layer_mesh = shishkin_mesh(n, problem.epsilon, form.beta, form.layer_pos)
    cross_mesh = uniform_mesh(n)
    lo, di, up = _operator_rows(layer_mesh, problem.epsilon, form.p[ld], form.q)
    hc = 1.0 / n
    # cross axis carries -eps u'' only (uniform, homogeneous data)
    lam = (4.0 * problem.epsilon / hc**2) * np.sin(
        np.arange(1, n) * math.pi / (2.0 * n)) ** 2
    return ld, cd, layer_mesh, cross_mesh, (lo, di, up), lam


def solve_steady_2d(problem, n):
    """Sine-transform direct solve of the separable steady 2-D problems.

    The layer axis gets the Shishkin-upwind operator; the cross axis, whose
    boundary data is homogeneous for both registered problems, is
    diagonalized by DST-I so each mode costs one tridiagonal solve.
    """
    if problem.domain != "square" or problem.fdm is None:
        raise ConfigurationError(f"{problem.name} is not a steady 2-D problem")
    ld, cd, layer_mesh, cross_mesh, (lo, di, up), lam = _steady_2d_parts(problem, n)
    xl = layer_mesh.nodes
    xc = cross_mesh.nodes
    # rhs over interior (layer-axis index i, cross-axis index j)
    rhs = np.zeros((n - 1, n - 1))
    gl0 = _face_value(problem, ld, 0.0, xc[1:-1])
    gl1 = _face_value(problem, ld, 1.0, xc[1:-1])
    rhs[0, :] -= lo[0] * gl0
    rhs[-1, :] -= up[-1] * gl1
    # cross faces are homogeneous (asserted): no further lifts
    for pos in (0.0, 1.0):
        gc = _face_value(problem, cd, pos, xl[1:-1])
        if np.any(gc != 0.0):
            raise ConfigurationError(
                f"{problem.name}: cross-axis face {cd}@{pos} must be homogeneous")
    rhat = dst(rhs, type=1, axis=1)
    uhat = np.empty_like(rhat)
    for k in range(n - 1):
        uhat[:, k] = _tridiag_solve(lo, di + lam[k], up, rhat[:, k])
    u_int = dst(uhat, type=1, axis=1) / (2.0 * n)

    u = np.zeros((n + 1, n + 1))  # indexed [layer axis, cross axis]
    u[1:-1, 1:-1] = u_int
    u[0, 1:-1] = gl0
    u[-1, 1:-1] = gl1
    # corners keep the (zero) cross-face data
    values = u if ld == 0 else u.T
    axes = (xl, xc) if ld == 0 else (xc, xl)
    return GridSolution(problem.name, problem.epsilon, axes, values, n, None,
                        "shishkin-upwind-dst")


def steady_2d_residual(problem, sol):
    """Scaled max-norm residual of a 2-D solution (5-point stencil audit)."""
    form = problem.fdm
    n = sol.n
    ld = form.layer_dim
    u = sol.values if ld == 0 else sol.values.T
    layer_mesh = Mesh1D(sol.axes[ld], None, form.layer_pos)
    lo, di, up = _operator_rows(layer_mesh, problem.epsilon, form.p[ld], form.q)
    hc = 1.0 / n
    res = (u[:-2, 1:-1] * lo[:, None] + u[1:-1, 1:-1] * di[:, None]
           + u[2:, 1:-1] * up[:, None]
           - problem.epsilon * (u[1:-1, :-2] - 2.0 * u[1:-1, 1:-1] + u[1:-1, 2:]) / hc**2)
    scale = np.abs(u).max() * (np.abs(lo) + np.abs(di) + np.abs(up)).max()
    return np.abs(res).max() / scale


def solve_parabolic(problem, n, m, stabilized=False):
    """Implicit Euler in time, Shishkin-upwind in space (unconditionally
    stable).  ``stabilized=True`` runs the reaction-free substitution
    u = e^t v (restoring the maximum-principle sign condition for the
    problem with reaction -1) and maps back; the direct route solves the
    equation as given.
    """
    if problem.domain != "slab" or problem.fdm is None:
        raise ConfigurationError(f"{problem.name} is not a parabolic problem")
    form = problem.fdm
    if stabilized and form.q >= 0.0:
        raise ConfigurationError("stabilized route only applies to negative reaction")
    q = form.q + 1.0 if stabilized else form.q  # v-equation reaction: q + 1
    mesh = shishkin_mesh(n, problem.epsilon, form.beta, form.layer_pos)
    x = mesh.nodes
    dt = 1.0 / m
    lo, di, up = _operator_rows(mesh, problem.epsilon, form.p[0], q)
    di_t = di + 1.0 / dt
    g_init = np.asarray(ad.value_of(problem.initial.trace([x.reshape(-1, 1)])),
                        dtype=float).reshape(-1)
    g0 = _face_value(problem, 0, 0.0, None)
    g1 = _face_value(problem, 0, 1.0, None)

    values = np.empty((n + 1, m + 1))
    values[:, 0] = g_init
    # corner nodes keep the boundary data (documented inconsistency)
    values[0, 0], values[-1, 0] = g0, g1
    v = values[:, 0].copy()
    for step in range(1, m + 1):
        t = step * dt
        scale = math.exp(-t) if stabilized else 1.0
        b0, b1 = g0 * scale, g1 * scale
        rhs = v[1:-1] / dt + form.f(x[1:-1], t) * scale
        rhs[0] -= lo[0] * b0
        rhs[-1] -= up[-1] * b1
        v_int = _tridiag_solve(lo, di_t, up, rhs)
        v = np.concatenate([[b0], v_int, [b1]])
        values[:, step] = v * (math.exp(t) if stabilized else 1.0)
    return GridSolution(problem.name, problem.epsilon, (x, np.linspace(0.0, 1.0, m + 1)),
                        values, n, m, "shishkin-upwind-euler" + ("-exp" if stabilized else ""))


def monotone_system_report(problem, n, m=None):
    """M-matrix sign audit of the discrete operator (discrete maximum
    principle): positive diagonal, nonpositive off-diagonals, nonnegative
    row sums.  For the parabolic problems the implicit Euler step matrix is
    audited (use the stabilized form for negative reaction)."""
    form = problem.fdm
    if problem.domain == "slab":
        q = form.q + 1.0 if form.q < 0.0 else form.q
        mesh = shishkin_mesh(n, problem.epsilon, form.beta, form.layer_pos)
        lo, di, up = _operator_rows(mesh, problem.epsilon, form.p[0], q)
        di = di + float(m if m else n)  # + 1/dt
        row_sum = lo + di + up
        return bool(np.all(di > 0) and np.all(lo[1:] <= 0) and np.all(up[:-1] <= 0)
                    and np.all(row_sum >= -1e-12))
    if problem.domain == "square":
        ld, cd, layer_mesh, cross_mesh, (lo, di, up), lam = _steady_2d_parts(problem, n)
        hc = 1.0 / n
        cross_off = -problem.epsilon / hc**2
        diag = di + 2.0 * problem.epsilon / hc**2
        row_sum = lo + diag + up + 2.0 * cross_off
        return bool(np.all(diag > 0) and np.all(lo <= 0) and np.all(up <= 0)
                    and cross_off <= 0 and np.all(row_sum >= -1e-12))
    lo, di, up = _operator_rows(
        shishkin_mesh(n, problem.epsilon, form.beta, form.layer_pos),
        problem.epsilon, form.p[0], form.q)
    row_sum = lo + di + up
    return bool(np.all(di > 0) and np.all(lo <= 0) and np.all(up <= 0)
                and np.all(row_sum >= -1e-12))


def save_grid(sol, csv_path, meta_path):
    """CSV of node coordinates and values plus a JSON metadata sidecar with a
    content checksum; byte-stable for fixed inputs."""
    pts, vals = sol.points_and_values()
    headers = {1: "x,value", 2: "x,y,value" if sol.m is None else "x,t,value"}
    dim = pts.shape[1]
    lines = [headers[dim]]
    for row, v in zip(pts, vals):
        coords = ",".join("%.17g" % c for c in row)
        lines.append(f"{coords},%.17g" % v)
    text = "\n".join(lines) + "\n"
    with open(csv_path, "w") as fh:
        fh.write(text)
    checksum = hashlib.sha256(text.encode()).hexdigest()
    meta = {
        "problem": sol.problem,
        "epsilon": sol.epsilon,
        "n": sol.n,
        "m": sol.m,
        "scheme": sol.scheme,
        "checksum": checksum,
        "rows": len(vals),
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def load_grid(csv_path):
    """Points and values from a saved reference CSV."""
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    return data[:, :-1], data[:, -1]
