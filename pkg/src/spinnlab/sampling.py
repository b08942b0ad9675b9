"""Seeded generation of collocation, boundary and initial training points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# default point budgets: 1000 collocation points for the 1-D problems,
# 10000 plus 100 boundary / 100 initial picks for the 2-D and time problems
N_INTERIOR_1D = 1000
N_INTERIOR_2D = 10000
N_BOUNDARY_2D = 100
N_INITIAL = 100

_OPEN_EPS = 1e-12  # keeps stratified samples strictly inside the open domain


@dataclass
class SampleSet:
    """Training points: interior (n, d), per-face boundary blocks, initial."""

    interior: np.ndarray
    boundary: list  # [(face_index, points (n_f, d)), ...]
    initial: np.ndarray | None = None

    @property
    def n_boundary(self):
        return sum(len(pts) for _, pts in self.boundary)


def lhs(n, d, seed):
    """Latin hypercube sample of n points in [0,1]^d.

    Per dimension the n equal-width strata each receive exactly one point,
    jittered uniformly within its stratum; deterministic per seed.
    """
    if n < 1:
        raise ConfigurationError("need at least one sample")
    rng = np.random.default_rng(seed)
    pts = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        pts[:, j] = (perm + rng.random(n)) / n
    return np.clip(pts, _OPEN_EPS, 1.0 - _OPEN_EPS)


def sample_problem(problem, seed, n_interior=None, n_boundary=None, n_initial=None):
    """Full training sample for a registered problem.

    Boundary points are spread over the Dirichlet faces proportionally to
    face measure (equal here: all faces are unit segments); the 1-D problems
    always use their two endpoints.  Time problems additionally draw initial
    points on the t=0 face.
    """
    rng = np.random.default_rng([seed, 1])
    d = problem.input_dim
    if d == 1:
        n_int = N_INTERIOR_1D if n_interior is None else int(n_interior)
        interior = lhs(n_int, 1, [seed, 0])
        boundary = [(i, problem.face_points(face, np.zeros((1, 0))))
                    for i, face in enumerate(problem.dirichlet)]
        return SampleSet(interior, boundary)

    n_int = N_INTERIOR_2D if n_interior is None else int(n_interior)
    n_bc = N_BOUNDARY_2D if n_boundary is None else int(n_boundary)
    interior = lhs(n_int, d, [seed, 0])
    faces = problem.dirichlet
    per_face = [n_bc // len(faces)] * len(faces)
    for i in range(n_bc - sum(per_face)):
        per_face[i] += 1
    boundary = []
    for i, face in enumerate(faces):
        tang = rng.random((per_face[i], d - 1))
        if problem.time_dim is not None:
            # spatial faces of the slab span t in (0, 1]: keep t away from 0
            tang = np.clip(tang, _OPEN_EPS, 1.0)
        boundary.append((i, problem.face_points(face, tang)))
    initial = None
    if problem.initial is not None:
        n_ic = N_INITIAL if n_initial is None else int(n_initial)
        tang = np.clip(rng.random((n_ic, d - 1)), _OPEN_EPS, 1.0 - _OPEN_EPS)
        initial = problem.face_points(problem.initial, tang)
    return SampleSet(interior, boundary, initial)
