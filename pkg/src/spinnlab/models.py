"""Predictor compositions: plain network, gated layer networks, asymptotic form.

Three model kinds share the two backbones from :mod:`networks`:

* ``pinn``    - backbone only.
* ``gkpinn``  - smooth backbone plus one extra backbone per boundary layer,
  each multiplied by that layer's exponential gate.
* ``aspinn``  - one backbone; each layer correction is the analytically
  known form (trace - backbone at the projected face point) times the gate,
  so the prediction matches the boundary trace at the layer face exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import networks
from .errors import ConfigurationError

log = logging.getLogger(__name__)

MODEL_KINDS = ("pinn", "gkpinn", "aspinn")
BACKBONES = ("mlp", "kan")


@dataclass(frozen=True)
class AsymptoticPrior:
    """One boundary layer: where it sits, how fast it decays, what it pins.

    ``trace`` maps the tangential coordinate columns (everything except
    ``normal_dim``, in ascending dim order) to the boundary data; for 1-D
    problems it ignores its (empty) argument and returns a constant.
    """

    normal_dim: int
    position: float
    decay: float
    trace: Callable = field(compare=False)
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.position <= 1.0:
            raise ConfigurationError(f"layer position {self.position} outside [0, 1]")
        if self.decay <= 0.0:
            raise ConfigurationError("decay coefficient magnitude must be positive")


def exp_layer(x, prior, epsilon):
    """Exponential gate exp(-decay * d / epsilon), d = distance to the layer.

    The distance is the oriented linear form (position - x_n for layers at
    the upper face, x_n - position otherwise), which equals |position - x_n|
    in-domain and keeps the gate smooth through the face itself.  The
    exponent saturates at -745 so far-field gates underflow to a clean 0.
    """
    if epsilon <= 0.0:
        raise ConfigurationError("epsilon must be positive")
    xn = x[prior.normal_dim]
    d = (prior.position - xn) if prior.position >= 0.5 else (xn - prior.position)
    return ad.satexp((-prior.decay / epsilon) * d)


def default_backbone(backbone, input_dim):
    """Backbone configurations used throughout the experiments: an MLP with
    two hidden layers of 100 (sigmoid in 1-D, tanh otherwise) or a
    Chebyshev-KAN with one hidden layer of 8 and degree 5."""
    if backbone == "mlp":
        return networks.MlpConfig(input_dim=input_dim, hidden_widths=(100, 100),
                                  activation="sigmoid" if input_dim == 1 else "tanh")
    if backbone == "kan":
        return networks.KanConfig(input_dim=input_dim)
    raise ConfigurationError(f"unknown backbone {backbone!r}; choose from {BACKBONES}")


class Predictor:
    """A model kind composed with a problem's priors at a fixed epsilon."""

    def __init__(self, kind, backbone_cfg, priors=(), epsilon=1.0):
        if kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
        self.kind = kind
        self.cfg = backbone_cfg
        self.priors = tuple(priors)
        self.epsilon = float(epsilon)
        self.input_dim = backbone_cfg.input_dim
        if kind == "gkpinn" and not self.priors:
            log.warning("gkpinn with no boundary layers degenerates to pinn")

    @property
    def n_param_sets(self):
        return 1 + len(self.priors) if self.kind == "gkpinn" else 1

    def init(self, seed):
        return [networks.init_params(self.cfg, [seed, i])
                for i in range(self.n_param_sets)]

    def _check(self, params_list, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"points have shape {X.shape}, predictor expects (n, {self.input_dim})")
        if len(params_list) != self.n_param_sets:
            raise ConfigurationError(
                f"{self.kind} needs {self.n_param_sets} parameter sets, got {len(params_list)}")
        return X

    def _apply(self, params_list, X, derivatives, d2_dims=None):
        X = self._check(params_list, X)
        n, d = X.shape

        def alg(pts, frozen=()):
            if not derivatives:
                return pts
            return ad.input_triple(pts, d2_dims=d2_dims, frozen_dims=frozen)

        x_alg = alg(X)
        out = networks.forward(params_list[0], x_alg, self.cfg)
        if self.kind == "pinn" or not self.priors:
            return out
        cols = [ad.column(x_alg, j) for j in range(d)]
        for i, prior in enumerate(self.priors):
            gate = exp_layer(cols, prior, self.epsilon)
            if self.kind == "gkpinn":
                layer_net = networks.forward(params_list[i + 1], x_alg, self.cfg)
                out = out + layer_net * gate
                continue
            # aspinn: second backbone evaluation at the face projection;
            # the pinned coordinate carries zero derivative there
            if d == 1:
                proj = np.array([[prior.position]])
            else:
                proj = np.array(X, copy=True)
                proj[:, prior.normal_dim] = prior.position
            u0_face = networks.forward(
                params_list[0], alg(proj, frozen=(prior.normal_dim,)), self.cfg)
            tang = [cols[j] for j in range(d) if j != prior.normal_dim]
            out = out + (prior.trace(tang) - u0_face) * gate
        return out

    def values(self, params_list, X):
        """Predictions only; raw params give raw arrays, lifted give Nodes."""
        return self._apply(params_list, X, derivatives=False)

    def bundle(self, params_list, X, d2_dims=None):
        """Batched Triple with first and pure second input derivatives.

        ``d2_dims`` limits which second derivatives are propagated (None
        tracks every dim, the public single-point contract)."""
        return self._apply(params_list, X, derivatives=True, d2_dims=d2_dims)

    def predict(self, params_list, X, chunk=65536):
        """Plain ndarray predictions over a possibly huge point set."""
        X = np.asarray(X, dtype=float)
        raw = [p.tensors() for p in params_list]
        parts = [np.asarray(self.values(raw, X[i:i + chunk]))
                 for i in range(0, len(X), chunk)]
        return np.concatenate(parts, axis=0).reshape(-1)


def pinn_predict(params, x, cfg):
    """Backbone forward only."""
    return networks.forward(params, x, cfg)


def gkpinn_predict(params_list, x, priors, epsilon, cfg):
    """Smooth part plus gated layer networks: u0 + sum u_i * gate_i."""
    d = np.shape(ad.value_of(x))[1]
    cols = [ad.column(x, j) for j in range(d)]
    out = networks.forward(params_list[0], x, cfg)
    for i, prior in enumerate(priors):
        out = out + networks.forward(params_list[i + 1], x, cfg) * exp_layer(cols, prior, epsilon)
    return out


def aspinn_predict(params, x, priors, epsilon, cfg):
    """Value-mode asymptotic composition for a single parameter set.

    The standalone form of what ``Predictor`` does (including derivative
    propagation and projection seeding); kept as the readable reference the
    class is tested against.
    """
    d = np.shape(ad.value_of(x))[1]
    cols = [ad.column(x, j) for j in range(d)]
    out = networks.forward(params, x, cfg)
    for prior in priors:
        if isinstance(x, ad.Triple):
            raise ConfigurationError("use Predictor.bundle for derivative evaluation")
        proj = np.array(x, dtype=float, copy=True)
        proj[:, prior.normal_dim] = prior.position
        u0_face = networks.forward(params, proj, cfg)
        tang = [cols[j] for j in range(d) if j != prior.normal_dim]
        out = out + (prior.trace(tang) - u0_face) * exp_layer(cols, prior, epsilon)
    return out
