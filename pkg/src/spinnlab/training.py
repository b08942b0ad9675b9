"""Weighted residual training loop: RBA multipliers plus ADAM.

One iteration runs forward -> residuals -> RBA update -> loss -> parameter
gradient -> ADAM step, full batch.  Histories log every ``log_every``
iterations and runs are bit-reproducible per seed (timing column aside).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, NumericError, TrainingDiverged
from .models import Predictor, default_backbone
from .problems import get_problem
from .sampling import sample_problem

HISTORY_COLUMNS = ("iteration", "loss_ic", "loss_bc", "loss_r", "loss_total",
                   "seconds_elapsed")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    problem: str
    model: str = "aspinn"
    backbone: str = "mlp"
    iterations: int = 100_000
    learning_rate: float = 1e-3
    w_ic: float = 1.0
    w_bc: float = 1.0
    w_r: float = 1.0
    rba_learning_rate: float = 1e-4
    rba_on_boundary: bool = False
    seed: int = 0
    epsilon: float | None = None
    n_interior: int | None = None
    n_boundary: int | None = None
    n_initial: int | None = None
    log_every: int = 100

    def to_dict(self):
        return asdict(self)


@dataclass
class RbaState:
    """Residual-based attention multipliers, one per collocation point."""

    alpha: np.ndarray

    @classmethod
    def ones(cls, n):
        return cls(np.ones(n))


def rba_update(rba, residuals, eta):
    """alpha <- (1 - eta) alpha + eta |e| / max|e|; all-zero residuals skip
    the update (division guard).  The ratio lies in [0, 1], so multipliers
    starting in [0, 1] stay there."""
    mags = np.abs(np.asarray(residuals)).reshape(-1)
    if mags.shape != rba.alpha.shape:
        raise ConfigurationError(
            f"residual vector has length {mags.shape}, multipliers {rba.alpha.shape}")
    top = mags.max()
    if top == 0.0:
        return rba
    return RbaState((1.0 - eta) * rba.alpha + eta * (mags / top))


@dataclass
class AdamState:
    """Bias-corrected first/second moments for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


def adam_step(adam, params, gradient, lr):
    """One ADAM update of ``params`` (a NetworkParams; in place) and state."""
    g = np.asarray(gradient)
    if g.shape != params.vector.shape:
        raise ConfigurationError(
            f"gradient length {g.shape} does not match parameters {params.vector.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient entry at step {adam.t + 1}")
    adam.t += 1
    adam.m = ADAM_BETA1 * adam.m + (1.0 - ADAM_BETA1) * g
    adam.v = ADAM_BETA2 * adam.v + (1.0 - ADAM_BETA2) * g * g
    m_hat = adam.m / (1.0 - ADAM_BETA1 ** adam.t)
    v_hat = adam.v / (1.0 - ADAM_BETA2 ** adam.t)
    params.vector -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, adam


class _Batches:
    """Precomputed constants of one training run: points, targets, weights."""

    def __init__(self, predictor, problem, samples, cfg):
        self.interior = samples.interior
        self.n_r = len(self.interior)
        if self.n_r == 0 and cfg.w_r != 0.0:
            raise ConfigurationError("no collocation points but w_r != 0")
        self.cols = [self.interior[:, j:j + 1] for j in range(problem.input_dim)]

        if samples.n_boundary == 0 and cfg.w_bc != 0.0:
            raise ConfigurationError("no boundary points but w_bc != 0")
        pts, targets = [], []
        for face_idx, face_pts in samples.boundary:
            face = problem.dirichlet[face_idx]
            tang = [face_pts[:, j:j + 1] for j in range(problem.input_dim)
                    if j != face.dim]
            g = face.trace(tang)
            pts.append(face_pts)
            targets.append(np.broadcast_to(np.asarray(g, dtype=float),
                                           (len(face_pts), 1)))
        self.boundary_pts = np.concatenate(pts, axis=0)
        self.boundary_targets = np.concatenate(targets, axis=0)

        self.initial_pts = None
        if problem.initial is not None:
            if samples.initial is None or len(samples.initial) == 0:
                if cfg.w_ic != 0.0:
                    raise ConfigurationError("no initial points but w_ic != 0")
            else:
                face = problem.initial
                tang = [samples.initial[:, j:j + 1] for j in range(problem.input_dim)
                        if j != face.dim]
                self.initial_pts = samples.initial
                self.initial_targets = np.broadcast_to(
                    np.asarray(ad.value_of(face.trace(tang)), dtype=float),
                    (len(samples.initial), 1))


def residual_vector(predictor, lifted, problem, batches):
    """Residual graph node over the collocation batch."""
    tri = predictor.bundle(lifted, batches.interior, d2_dims=problem.d2_dims)
    bundle = ad.DerivativeBundle(tri.u, list(tri.du), list(tri.d2u))
    return problem.residual(batches.cols, bundle)


def assemble_loss(predictor, lifted, samples_or_batches, problem, cfg, rba,
                  residual_node=None, rba_bc=None, rba_ic=None):
    """Weighted loss graph: mean squared data misfits plus the RBA-weighted
    mean squared residual (multiplier applied to the residual, then squared;
    no gradient flows through the multipliers).

    Multipliers apply to collocation residuals only unless
    ``cfg.rba_on_boundary`` supplies boundary/initial multiplier states.
    Returns (total node, {"ic": float, "bc": float, "r": float, "residuals":
    ndarray, "bc_errors": ndarray, "ic_errors": ndarray}).  Accepts a raw
    SampleSet or a prebuilt point cache.
    """
    batches = samples_or_batches if isinstance(samples_or_batches, _Batches) \
        else _Batches(predictor, problem, samples_or_batches, cfg)
    r = residual_node if residual_node is not None \
        else residual_vector(predictor, lifted, problem, batches)
    weighted = rba.alpha.reshape(-1, 1) * r
    loss_r = (cfg.w_r / batches.n_r) * ad.total(ad.square(weighted))

    u_b = predictor.values(lifted, batches.boundary_pts)
    bc_misfit = u_b - batches.boundary_targets
    bc_term = rba_bc.alpha.reshape(-1, 1) * bc_misfit if rba_bc is not None else bc_misfit
    loss_bc = (cfg.w_bc / len(batches.boundary_pts)) * ad.total(ad.square(bc_term))

    total = loss_bc + loss_r
    ic_val = 0.0
    ic_errors = np.zeros(0)
    if batches.initial_pts is not None:
        u_i = predictor.values(lifted, batches.initial_pts)
        ic_misfit = u_i - batches.initial_targets
        ic_term = rba_ic.alpha.reshape(-1, 1) * ic_misfit if rba_ic is not None else ic_misfit
        loss_ic = (cfg.w_ic / len(batches.initial_pts)) * ad.total(ad.square(ic_term))
        total = loss_ic + total
        ic_val = float(ad.value_of(loss_ic))
        ic_errors = np.asarray(ad.value_of(ic_misfit)).reshape(-1)
    parts = {
        "ic": ic_val,
        "bc": float(ad.value_of(loss_bc)),
        "r": float(ad.value_of(loss_r)),
        "residuals": np.asarray(ad.value_of(r)).reshape(-1),
        "bc_errors": np.asarray(ad.value_of(bc_misfit)).reshape(-1),
        "ic_errors": ic_errors,
    }
    return total, parts


@dataclass
class TrainResult:
    params_list: list
    history: list
    wall_seconds: float
    iterations: int
    rba: RbaState
    predictor: Predictor
    problem: object
    config: TrainConfig
    samples: object


def build_predictor(problem, model, backbone):
    cfg = default_backbone(backbone, problem.input_dim)
    return Predictor(model, cfg, priors=problem.priors, epsilon=problem.epsilon)


def train(cfg, problem=None):
    """Run the full loop; deterministic per seed.

    Raises :class:`TrainingDiverged` (keeping the last finite snapshot) on a
    NaN loss and :class:`NumericError` on a non-finite gradient entry.
    """
    if problem is None:
        problem = get_problem(cfg.problem, cfg.epsilon)
    predictor = build_predictor(problem, cfg.model, cfg.backbone)
    samples = sample_problem(problem, cfg.seed, cfg.n_interior,
                             cfg.n_boundary, cfg.n_initial)
    batches = _Batches(predictor, problem, samples, cfg)
    params_list = predictor.init(cfg.seed)
    adam_states = [AdamState.zeros(p.size) for p in params_list]
    rba = RbaState.ones(batches.n_r)
    rba_bc = rba_ic = None
    if cfg.rba_on_boundary:
        rba_bc = RbaState.ones(len(batches.boundary_pts))
        if batches.initial_pts is not None:
            rba_ic = RbaState.ones(len(batches.initial_pts))
    history = []
    last_good = [p.copy() for p in params_list]
    start = time.perf_counter()

    for it in range(1, cfg.iterations + 1):
        lifted = [p.lift() for p in params_list]
        r = residual_vector(predictor, lifted, problem, batches)
        rba = rba_update(rba, r.value if isinstance(r, ad.Node) else r,
                         cfg.rba_learning_rate)
        loss, parts = assemble_loss(predictor, lifted, batches, problem, cfg,
                                    rba, residual_node=r,
                                    rba_bc=rba_bc, rba_ic=rba_ic)
        # boundary/initial multipliers (optional) update from the current
        # misfits and take effect from the next iteration on
        if rba_bc is not None:
            rba_bc = rba_update(rba_bc, parts["bc_errors"], cfg.rba_learning_rate)
        if rba_ic is not None and len(parts["ic_errors"]):
            rba_ic = rba_update(rba_ic, parts["ic_errors"], cfg.rba_learning_rate)
        total = float(ad.value_of(loss))
        if not np.isfinite(total):
            raise TrainingDiverged(
                f"loss became non-finite at iteration {it}", it, last_good)
        grads = ad.param_gradient(loss, lifted)
        for p, adam, g in zip(params_list, adam_states, grads):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient entry at iteration {it}")
            adam_step(adam, p, g, cfg.learning_rate)
        if it % cfg.log_every == 0 or it == cfg.iterations:
            history.append((it, parts["ic"], parts["bc"], parts["r"], total,
                            time.perf_counter() - start))
            last_good = [p.copy() for p in params_list]

    wall = time.perf_counter() - start
    return TrainResult(params_list, history, wall, cfg.iterations, rba,
                       predictor, problem, cfg, samples)


def history_rows(history):
    """History as a float array in HISTORY_COLUMNS order."""
    return np.asarray(history, dtype=float).reshape(-1, len(HISTORY_COLUMNS))


def write_history_csv(path, history):
    rows = history_rows(history)
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in rows:
            fh.write("%d,%.17g,%.17g,%.17g,%.17g,%.6f\n" % tuple(row))
