"""Trainable function approximators: tanh/sigmoid MLP and Chebyshev-KAN.

Both backends read their tensors from a :class:`NetworkParams` flat vector
through a named shape table, and their forward passes are written against
the autodiff algebra so the same code runs on raw arrays, graph Nodes and
derivative Triples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError

ACTIVATIONS = {"tanh": ad.tanh, "sigmoid": ad.sigmoid}


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_widths: tuple = (100, 100)
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        if not self.hidden_widths:
            raise ConfigurationError("hidden_widths must be non-empty")
        counts = (self.input_dim, self.output_dim, *self.hidden_widths)
        if any(int(c) < 1 for c in counts):
            raise ConfigurationError(f"all layer sizes must be >= 1, got {counts}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    def shape_table(self):
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        table = []
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            table.append((f"w{i}", (n_in, n_out)))
            table.append((f"b{i}", (n_out,)))
        return table


@dataclass(frozen=True)
class KanConfig:
    """Stacked Chebyshev layers: input -> hidden_width -> ... -> output.

    Each layer owns a coefficient tensor of shape (d_in, d_out, degree + 1)
    and tanh-normalizes its own input; the final output is left raw.
    """

    input_dim: int
    output_dim: int = 1
    degree: int = 5
    hidden_width: int = 8
    layer_count: int = 2

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigurationError("Chebyshev degree must be >= 1")
        counts = (self.input_dim, self.output_dim, self.hidden_width, self.layer_count)
        if any(int(c) < 1 for c in counts):
            raise ConfigurationError(f"all sizes must be >= 1, got {counts}")

    def layer_dims(self):
        dims = [self.input_dim] + [self.hidden_width] * (self.layer_count - 1) + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def shape_table(self):
        return [(f"theta{i}", (d_in, d_out, self.degree + 1))
                for i, (d_in, d_out) in enumerate(self.layer_dims())]


class LiftedParams(dict):
    """name -> Node view of one parameter set, remembering table order."""

    def __init__(self, pairs, order):
        super().__init__(pairs)
        self.order = tuple(order)


class NetworkParams:
    """Flat parameter vector plus the shape table locating named tensors."""

    def __init__(self, shape_table, vector=None):
        self.shape_table = [(name, tuple(shape)) for name, shape in shape_table]
        self._offsets = {}
        off = 0
        for name, shape in self.shape_table:
            size = int(np.prod(shape))
            self._offsets[name] = (off, off + size, shape)
            off += size
        self.size = off
        if vector is None:
            vector = np.zeros(off)
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (off,):
            raise ConfigurationError(
                f"parameter vector has length {vector.shape}, table needs {off}")
        self.vector = vector

    @property
    def names(self):
        return [name for name, _ in self.shape_table]

    def tensor(self, name):
        lo, hi, shape = self._offsets[name]
        return self.vector[lo:hi].reshape(shape)

    def tensors(self):
        return {name: self.tensor(name) for name in self.names}

    def lift(self):
        return LiftedParams(((n, ad.Node(self.tensor(n), op=n)) for n in self.names),
                            self.names)

    def copy(self):
        return NetworkParams(self.shape_table, self.vector.copy())

    @classmethod
    def pack(cls, shape_table, tensors):
        p = cls(shape_table)
        for name, _ in p.shape_table:
            p.tensor(name)[...] = tensors[name]
        return p

    def unpack(self):
        return {name: self.tensor(name).copy() for name in self.names}


def chebyshev_basis(x, n):
    """First-kind Chebyshev values T_0..T_n at ``x`` via the two-term recurrence.

    Works on floats, arrays, Nodes and Triples; raw inputs are checked
    against the [-1, 1] domain (tanh normalization makes violations
    impossible in the network path, asserted anyway).
    """
    if n < 0:
        raise ConfigurationError("degree must be >= 0")
    if not isinstance(x, (ad.Node, ad.Triple)):
        if np.any(np.abs(x) > 1.0):
            raise ConfigurationError("chebyshev_basis input outside [-1, 1]")
    out = [1.0 if np.ndim(ad.value_of(x)) == 0 else np.ones(np.shape(ad.value_of(x)))]
    if n >= 1:
        out.append(x)
    for _ in range(2, n + 1):
        out.append(2.0 * x * out[-1] - out[-2])
    return out


def mlp_forward(params, x, cfg):
    """Affine-activation stack; the final layer is affine with no activation.

    Derivative Triples over constant points run through the fused stream
    lane (one matmul plus one fused activation per layer); everything else
    takes the generic op-by-op path.
    """
    last = len(cfg.hidden_widths)
    if isinstance(x, ad.Triple):
        layout = ad.StreamLayout.of(x)
        if layout is not None:
            h = ad.pack_streams(x, layout)
            for i in range(last + 1):
                h = ad.affine_streams(h, params[f"w{i}"], params[f"b{i}"])
                if i < last:
                    h = ad.activation_streams(h, layout, cfg.activation)
            return ad.unpack_streams(h, layout, x.dim)
    act = ACTIVATIONS[cfg.activation]
    h = x
    for i in range(last + 1):
        h = ad.matmul(h, params[f"w{i}"]) + params[f"b{i}"]
        if i < last:
            h = act(h)
    return h


def kan_forward(params, x, cfg):
    """Chebyshev-KAN: per layer, out_j = sum_i sum_k theta[i,j,k] T_k(tanh(in_i)).

    The contraction runs as degree+1 slim matrix products so batched inputs
    stay vectorized.
    """
    h = x
    for i in range(len(cfg.layer_dims())):
        theta = params[f"theta{i}"]
        z = ad.tanh(h)
        basis = chebyshev_basis(z, cfg.degree)
        out = ad.matmul(basis[0], ad.take_last(theta, 0))
        for k in range(1, cfg.degree + 1):
            out = out + ad.matmul(basis[k], ad.take_last(theta, k))
        h = out
    return h


def forward(params, x, cfg):
    if isinstance(cfg, MlpConfig):
        return mlp_forward(params, x, cfg)
    if isinstance(cfg, KanConfig):
        return kan_forward(params, x, cfg)
    raise ConfigurationError(f"unknown backbone config {type(cfg).__name__}")


def init_params(cfg, seed):
    """Fresh parameters: Glorot-uniform MLP weights (zero biases) or uniform
    Chebyshev coefficients with half-width 1 / (d_in * (degree + 1))."""
    rng = np.random.default_rng(seed)
    p = NetworkParams(cfg.shape_table())
    if isinstance(cfg, MlpConfig):
        for name, shape in p.shape_table:
            if name.startswith("w"):
                s = np.sqrt(6.0 / (shape[0] + shape[1]))
                p.tensor(name)[...] = rng.uniform(-s, s, size=shape)
    elif isinstance(cfg, KanConfig):
        for name, shape in p.shape_table:
            s = 1.0 / (shape[0] * shape[2])
            p.tensor(name)[...] = rng.uniform(-s, s, size=shape)
    else:
        raise ConfigurationError(f"unknown backbone config {type(cfg).__name__}")
    return p


def save_checkpoint(path, params_list, meta):
    """Single-file checkpoint: flat vectors plus JSON shape tables and metadata.

    Layout of the .npz: ``vector{i}`` float64 arrays, ``shapes{i}`` JSON
    strings of the shape tables, ``meta`` JSON string.
    """
    payload = {"meta": np.array(json.dumps(meta))}
    for i, p in enumerate(params_list):
        payload[f"vector{i}"] = p.vector
        payload[f"shapes{i}"] = np.array(json.dumps(p.shape_table))
    np.savez(path, **payload)


def load_checkpoint(path):
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        params_list = []
        i = 0
        while f"vector{i}" in data:
            table = json.loads(str(data[f"shapes{i}"]))
            params_list.append(NetworkParams(table, data[f"vector{i}"]))
            i += 1
    return params_list, meta
