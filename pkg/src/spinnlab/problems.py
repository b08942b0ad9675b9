"""Registry of the seven convection-diffusion benchmark problems.

Each entry couples a residual operator over (value, first, pure second
derivatives), Dirichlet/initial data, the boundary-layer prior used by the
gated models, overflow-free exact solutions where they exist, and the
constant-coefficient normal form the finite-difference reference solver
consumes.  All evaluators are written against the autodiff algebra so the
same closed form yields values, derivative bundles, and graph nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, UnknownProblemError
from .models import AsymptoticPrior

PI = math.pi

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class Face:
    """One Dirichlet face: coordinate ``dim`` pinned at ``position``; ``trace``
    maps the tangential coordinate columns to the boundary data."""

    dim: int
    position: float
    trace: Callable = field(compare=False)


@dataclass(frozen=True)
class FdmForm:
    """Constant-coefficient normal form for the reference solver.

    Steady:    -eps u'' + p . grad(u) + q u = f
    Parabolic:  u_t - eps u_xx + p u_x + q u = f
    ``layer_dim``/``layer_pos``/``beta`` drive the layer-adapted mesh.
    """

    p: tuple
    q: float
    f: Callable
    layer_dim: int
    layer_pos: float
    beta: float


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    input_dim: int
    epsilon: float
    domain: str  # "interval" | "square" | "slab"
    residual: Callable = field(compare=False)
    dirichlet: tuple = ()
    initial: Face | None = None
    time_dim: int | None = None
    priors: tuple = ()
    exact: Callable | None = field(default=None, compare=False)
    fdm: FdmForm | None = None

    @property
    def has_exact(self):
        return self.exact is not None

    @property
    def d2_dims(self):
        """Dims whose second derivatives the residual actually uses (the
        time problems only ever differentiate twice in space)."""
        return (0, 1) if self.domain == "square" else (0,)

    def face_points(self, face, tang):
        """Assemble full coordinates for points on ``face`` with tangential
        coordinates ``tang`` (shape (n, input_dim - 1), possibly empty)."""
        tang = np.asarray(tang, dtype=float).reshape(len(tang), self.input_dim - 1)
        pts = np.empty((len(tang), self.input_dim))
        pts[:, face.dim] = face.position
        other = [j for j in range(self.input_dim) if j != face.dim]
        for k, j in enumerate(other):
            pts[:, j] = tang[:, k]
        return pts


# --- exact solutions (stable rearrangements: no positive exponent is ever
# fed to exp, so arbitrarily small epsilon stays overflow-free) ---

def exact_ex1(x, eps):
    """sin(pi x) + (e^{(x-1)/eps} - e^{-1/eps}) / (1 - e^{-1/eps})."""
    w = math.exp(-1.0 / eps)
    return ad.sin(PI * x) + (ad.exp((x - 1.0) / eps) - w) / (1.0 - w)


def exact_ex2(x, eps):
    """(e^{-x} - e^{-x/eps}) / (e^{-1} - e^{-1/eps}).

    The denominator uses e^{-1}; this is the unique combination of the
    characteristic roots -1 and -1/eps meeting both boundary values, and it
    is the form that passes the residual oracle.
    """
    den = math.exp(-1.0) - math.exp(-1.0 / eps)
    return (ad.exp(-1.0 * x) - ad.exp((-1.0 / eps) * x)) / den


def exact_intro(x, eps):
    """e^{-x} + e^{(1+eps)(x-1)/eps}."""
    return ad.exp(-1.0 * x) + ad.exp(((1.0 + eps) / eps) * (x - 1.0))


def residual(problem, point, bundle):
    """Signed residual of ``problem`` at ``point`` given a derivative bundle."""
    cols = point if isinstance(point, (list, tuple)) else [point]
    return problem.residual(cols, bundle)


def residual_of_exact(problem, xs):
    """Residual of the closed-form solution at 1-D points ``xs`` (oracle
    path: the bundle comes from forward-mode differentiation of the exact
    evaluator itself)."""
    if not problem.has_exact or problem.input_dim != 1:
        raise ConfigurationError(f"{problem.name} has no 1-D exact solution")
    xs = np.asarray(xs, dtype=float).reshape(-1, 1)
    tri = ad.input_triple(xs)
    x = ad.column(tri, 0)
    u = problem.exact([x])
    bundle = ad.DerivativeBundle(u.u, list(u.du), list(u.d2u))
    r = problem.residual([x.u], bundle)
    return np.asarray(ad.value_of(r)).reshape(-1)


def _const_trace(c):
    return lambda tang: c


def _build_ex1(eps):
    def res(cols, b):
        x = cols[0]
        forcing = eps * PI * PI * ad.sin(PI * x) + PI * ad.cos(PI * x)
        return -eps * b.d2u[0] + b.du[0] - forcing

    return ProblemSpec(
        name="ex1", input_dim=1, epsilon=eps, domain="interval", residual=res,
        dirichlet=(Face(0, 0.0, _const_trace(0.0)), Face(0, 1.0, _const_trace(1.0))),
        priors=(AsymptoticPrior(0, 1.0, 1.0, _const_trace(1.0), label="x=1"),),
        exact=lambda cols: exact_ex1(cols[0], eps),
        fdm=FdmForm(p=(1.0,), q=0.0,
                    f=lambda x: eps * PI * PI * np.sin(PI * x) + PI * np.cos(PI * x),
                    layer_dim=0, layer_pos=1.0, beta=1.0),
    )


def _build_ex2(eps):
    def res(cols, b):
        return eps * b.d2u[0] + (1.0 + eps) * b.du[0] + b.u

    return ProblemSpec(
        name="ex2", input_dim=1, epsilon=eps, domain="interval", residual=res,
        dirichlet=(Face(0, 0.0, _const_trace(0.0)), Face(0, 1.0, _const_trace(1.0))),
        priors=(AsymptoticPrior(0, 0.0, 1.0, _const_trace(0.0), label="x=0"),),
        exact=lambda cols: exact_ex2(cols[0], eps),
        # normal form multiplies the equation by -1
        fdm=FdmForm(p=(-(1.0 + eps),), q=-1.0, f=lambda x: np.zeros_like(x),
                    layer_dim=0, layer_pos=0.0, beta=1.0),
    )


def _build_intro(eps):
    def res(cols, b):
        return -eps * b.d2u[0] + b.du[0] + (1.0 + eps) * b.u

    g0 = 1.0 + math.exp(-(1.0 + eps) / eps)
    g1 = 1.0 + math.exp(-1.0)
    return ProblemSpec(
        name="intro", input_dim=1, epsilon=eps, domain="interval", residual=res,
        dirichlet=(Face(0, 0.0, _const_trace(g0)), Face(0, 1.0, _const_trace(g1))),
        # decay 1+eps matches the exact layer root; derived via the same
        # matched-expansion recipe as the named examples
        priors=(AsymptoticPrior(0, 1.0, 1.0 + eps, _const_trace(g1), label="x=1"),),
        exact=lambda cols: exact_intro(cols[0], eps),
        fdm=FdmForm(p=(1.0,), q=1.0 + eps, f=lambda x: np.zeros_like(x),
                    layer_dim=0, layer_pos=1.0, beta=1.0),
    )


def _build_ex3(eps):
    def res(cols, b):
        return -eps * (b.d2u[0] + b.d2u[1]) + b.du[0]

    return ProblemSpec(
        name="ex3", input_dim=2, epsilon=eps, domain="square", residual=res,
        dirichlet=(
            Face(0, 0.0, lambda t: ad.sin(PI * t[0])),
            Face(0, 1.0, lambda t: 2.0 * ad.sin(PI * t[0])),
            Face(1, 0.0, _const_trace(0.0)),
            Face(1, 1.0, _const_trace(0.0)),
        ),
        priors=(AsymptoticPrior(0, 1.0, 1.0,
                                lambda t: 2.0 * ad.sin(PI * t[0]), label="x=1"),),
        fdm=FdmForm(p=(1.0, 0.0), q=0.0, f=lambda x, y: np.zeros_like(x),
                    layer_dim=0, layer_pos=1.0, beta=1.0),
    )


def _build_ex4(eps):
    def res(cols, b):
        return eps * (b.d2u[0] + b.d2u[1]) + b.du[1]

    return ProblemSpec(
        name="ex4", input_dim=2, epsilon=eps, domain="square", residual=res,
        dirichlet=(
            Face(0, 0.0, _const_trace(0.0)),
            Face(0, 1.0, _const_trace(0.0)),
            Face(1, 0.0, lambda t: 2.0 * ad.sin(PI * t[0])),
            Face(1, 1.0, lambda t: ad.sin(PI * t[0])),
        ),
        priors=(AsymptoticPrior(1, 0.0, 1.0,
                                lambda t: 2.0 * ad.sin(PI * t[0]), label="y=0"),),
        # normal form multiplies the equation by -1
        fdm=FdmForm(p=(0.0, -1.0), q=0.0, f=lambda x, y: np.zeros_like(x),
                    layer_dim=1, layer_pos=0.0, beta=1.0),
    )


def _build_ex5(eps):
    def res(cols, b):
        return b.du[1] - eps * b.d2u[0] - b.du[0] - b.u

    # initial data cos(2 pi x) disagrees with the x=0 boundary value at the
    # (0, 0) corner; sampling never lands on corners and the
    # finite-difference reference keeps the boundary value there
    return ProblemSpec(
        name="ex5", input_dim=2, epsilon=eps, domain="slab", time_dim=1, residual=res,
        dirichlet=(Face(0, 0.0, _const_trace(0.0)), Face(0, 1.0, _const_trace(1.0))),
        initial=Face(1, 0.0, lambda t: ad.cos(2.0 * PI * t[0])),
        priors=(AsymptoticPrior(0, 0.0, 1.0, _const_trace(0.0), label="x=0"),),
        fdm=FdmForm(p=(-1.0,), q=-1.0, f=lambda x, t: np.zeros_like(x),
                    layer_dim=0, layer_pos=0.0, beta=1.0),
    )


def _build_ex6(eps):
    def res(cols, b):
        return b.du[1] - eps * b.d2u[0] + b.du[0] + 5.0 * b.u

    # initial data sin(2 pi x) gives 0 at (1, 0) while the x=1 boundary
    # carries 1: documented inconsistency, handled as in ex5
    return ProblemSpec(
        name="ex6", input_dim=2, epsilon=eps, domain="slab", time_dim=1, residual=res,
        dirichlet=(Face(0, 0.0, _const_trace(0.0)), Face(0, 1.0, _const_trace(1.0))),
        initial=Face(1, 0.0, lambda t: ad.sin(2.0 * PI * t[0])),
        priors=(AsymptoticPrior(0, 1.0, 1.0, _const_trace(1.0), label="x=1"),),
        fdm=FdmForm(p=(1.0,), q=5.0, f=lambda x, t: np.zeros_like(x),
                    layer_dim=0, layer_pos=1.0, beta=1.0),
    )


_BUILDERS = {
    "intro": _build_intro,
    "ex1": _build_ex1,
    "ex2": _build_ex2,
    "ex3": _build_ex3,
    "ex4": _build_ex4,
    "ex5": _build_ex5,
    "ex6": _build_ex6,
}

PROBLEM_NAMES = tuple(_BUILDERS)


def get_problem(name, epsilon=None):
    if name not in _BUILDERS:
        raise UnknownProblemError(name, PROBLEM_NAMES)
    eps = DEFAULT_EPSILON if epsilon is None else float(epsilon)
    if eps <= 0.0:
        raise ConfigurationError("epsilon must be positive")
    return _BUILDERS[name](eps)


def prior_for(name, epsilon=None):
    """Boundary-layer priors of a registered problem."""
    return list(get_problem(name, epsilon).priors)


def ode_test_grid(problem, n_uniform=1001, n_layer=1000):
    """Test abscissae for the 1-D problems: a uniform sweep plus
    geometrically spaced points packed into the layer so the error metric
    actually sees layer fidelity.  Returns (points (n, 1), exact values)."""
    if problem.input_dim != 1 or not problem.has_exact:
        raise ConfigurationError(f"{problem.name} has no analytic 1-D test set")
    a = problem.priors[0].position
    d = np.geomspace(problem.epsilon / 100.0, 0.5, n_layer)
    layer_x = a - d if a >= 0.5 else a + d
    xs = np.sort(np.concatenate([np.linspace(0.0, 1.0, n_uniform), layer_x]))
    vals = np.asarray(ad.value_of(problem.exact([xs])), dtype=float)
    return xs.reshape(-1, 1), vals
