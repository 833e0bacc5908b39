"""
The toy deep equilibrium model.

A single weight-tied cell f(z, x) = tanh(W z + U x + b) whose fixed point
z* = f(z*, x) is read out linearly. W is kept contractive (‖W‖₂ <= gamma < 1),
so the fixed point exists, is unique and naive iteration converges to it.
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from deqcert.exceptions import ArgumentError, DimensionError
from deqcert.linalg import as_matrix, as_vector, spectral_norm_estimate


log = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.9
SPECTRAL_ITERS = 300

# relative slack under which a matrix already counts as contractive
_RESCALE_SLACK = 1e-9

ACTIVATIONS = ('tanh', 'identity')


@dataclass(frozen=True)
class DeqCellParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    gamma: float = DEFAULT_GAMMA
    # 'identity' turns the cell into the affine map z -> Wz + Ux + b
    activation: str = field(default='tanh', compare=False)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ArgumentError('gamma must be in (0, 1), got {0}'.format(self.gamma))
        if self.activation not in ACTIVATIONS:
            raise ArgumentError('Unknown activation {0!r}'.format(self.activation))
        hidden = self.W.shape[0]
        if self.W.shape != (hidden, hidden):
            raise DimensionError('W must be square, got {0}'.format(self.W.shape))
        if self.U.shape[0] != hidden or self.b.shape != (hidden,):
            raise DimensionError('U and b must have {0} rows'.format(hidden))

    @property
    def hidden_dim(self):
        return self.W.shape[0]

    @property
    def input_dim(self):
        return self.U.shape[1]


@dataclass(frozen=True)
class ReadoutParams:
    V: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.c.shape != (self.V.shape[0],):
            raise DimensionError('Readout bias must have one entry per class')

    @property
    def num_classes(self):
        return self.V.shape[0]


@dataclass(frozen=True)
class DeqModel:
    cell: DeqCellParams
    readout: ReadoutParams
    sigma_train: float = 0.0

    def __post_init__(self):
        if self.readout.V.shape[1] != self.cell.hidden_dim:
            raise DimensionError('Readout expects {0} hidden units, cell has {1}'.format(
                self.readout.V.shape[1], self.cell.hidden_dim))
        if self.sigma_train < 0:
            raise ArgumentError('sigma_train must be >= 0')

    @property
    def hidden_dim(self):
        return self.cell.hidden_dim

    @property
    def input_dim(self):
        return self.cell.input_dim

    @property
    def num_classes(self):
        return self.readout.num_classes


def make_cell(W, U, b, gamma=DEFAULT_GAMMA, activation='tanh'):
    W = as_matrix(W)
    return DeqCellParams(W=W, U=as_matrix(U), b=as_vector(b), gamma=gamma, activation=activation)


def make_model(W, U, b, V, c, gamma=DEFAULT_GAMMA, sigma_train=0.0, activation='tanh'):
    cell = make_cell(W, U, b, gamma=gamma, activation=activation)
    readout = ReadoutParams(V=as_matrix(V), c=as_vector(c))
    return DeqModel(cell=cell, readout=readout, sigma_train=float(sigma_train))


def init_model(input_dim, hidden_dim, num_classes, gamma=DEFAULT_GAMMA, seed=0, sigma_train=0.0):
    """Random Glorot-scaled parameters, rescaled to a contraction."""
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((hidden_dim, hidden_dim)) / np.sqrt(hidden_dim)
    U = rng.standard_normal((hidden_dim, input_dim)) * np.sqrt(2.0 / (hidden_dim + input_dim))
    V = rng.standard_normal((num_classes, hidden_dim)) * np.sqrt(2.0 / (hidden_dim + num_classes))
    model = make_model(W, U, np.zeros(hidden_dim), V, np.zeros(num_classes),
                       gamma=gamma, sigma_train=sigma_train)
    return replace(model, cell=rescale_to_contraction(model.cell))


def _activate(cell, pre):
    if cell.activation == 'identity':
        return pre
    return np.tanh(pre)


def cell_forward(params, z, x):
    """
    f(z, x) for a single state (1-D) or a batch of states (rows of 2-D arrays).
    """
    if z.shape[-1] != params.hidden_dim or x.shape[-1] != params.input_dim:
        raise DimensionError('cell_forward expects z of width {0} and x of width {1}, got {2} and {3}'.format(
            params.hidden_dim, params.input_dim, z.shape[-1], x.shape[-1]))
    return _activate(params, z @ params.W.T + x @ params.U.T + params.b)


def rescale_to_contraction(params, iters=SPECTRAL_ITERS):
    norm = spectral_norm_estimate(params.W, iters)
    if norm <= params.gamma * (1.0 + _RESCALE_SLACK):
        return params
    log.debug('Rescaling W from spectral norm %.6f to %.6f', norm, params.gamma)
    return replace(params, W=params.W * (params.gamma / norm))


def logits(model, z_star):
    if z_star.shape[-1] != model.hidden_dim:
        raise DimensionError('logits expects a state of width {0}, got {1}'.format(
            model.hidden_dim, z_star.shape[-1]))
    return z_star @ model.readout.V.T + model.readout.c


def classify(logit_vec):
    """Index of the largest logit; ties go to the lowest index."""
    logit_vec = np.asarray(logit_vec)
    if logit_vec.shape[-1] == 0:
        raise ArgumentError('classify needs at least one logit')
    # np.argmax returns the first maximum
    return np.argmax(logit_vec, axis=-1)
