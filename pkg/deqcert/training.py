"""
Gaussian-augmentation training of the toy DEQ.

Gradients flow through the fixed point by the implicit function theorem:
with J = ∂f/∂z at (z*, x) and v = ∂loss/∂z*, the adjoint u = v + Jᵀu is
found by fixed-point iteration (it converges because ‖J‖ <= gamma < 1) and
the parameter gradients follow from the chain rule through one cell
application.
"""

from collections import namedtuple
from dataclasses import dataclass, field, replace
import logging

import numpy as np
from scipy.special import logsumexp, softmax

from deqcert.deqcore import logits, classify, rescale_to_contraction
from deqcert.exceptions import ArgumentError, DimensionError, TrainingDiverged
from deqcert.solvers import SolverConfig, solve_batch
from deqcert.stats import AUGMENT_STREAM, gaussian_batch


log = logging.getLogger(__name__)

LossRecord = namedtuple('LossRecord', ['epoch', 'step', 'loss', 'truncated'])


def _default_train_solver():
    return SolverConfig(method='anderson', tol=1e-5, max_iters=100)


def _precise_solver():
    return SolverConfig(method='naive', tol=1e-12, max_iters=10000)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise DimensionError('Dataset inputs must be a 2-D array')
        if len(self.inputs) != len(self.labels):
            raise DimensionError('{0} inputs but {1} labels'.format(len(self.inputs), len(self.labels)))
        if len(self.labels) and (np.min(self.labels) < 0 or np.max(self.labels) >= self.num_classes):
            raise ArgumentError('Labels must lie in [0, {0})'.format(self.num_classes))

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, indices):
        return Dataset(inputs=self.inputs[indices], labels=self.labels[indices], num_classes=self.num_classes)


@dataclass(frozen=True)
class TrainConfig:
    sigma: float = 0.0
    epochs: int = 50
    lr: float = 0.1
    batch_size: int = 32
    seed: int = 0
    solver: SolverConfig = field(default_factory=_default_train_solver)
    adjoint_iters: int = 100
    adjoint_tol: float = 1e-6

    def __post_init__(self):
        if self.sigma < 0:
            raise ArgumentError('sigma must be >= 0')
        if self.epochs < 1:
            raise ArgumentError('epochs must be >= 1')
        if self.lr < 0:
            raise ArgumentError('lr must be >= 0')
        if self.batch_size < 1:
            raise ArgumentError('batch_size must be >= 1')
        if self.adjoint_iters < 1 or not self.adjoint_tol > 0:
            raise ArgumentError('adjoint_iters must be >= 1 and adjoint_tol > 0')


@dataclass(frozen=True)
class Gradients:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    V: np.ndarray
    c: np.ndarray
    x: np.ndarray
    loss: float
    adjoint_converged: bool


def cross_entropy(logit_vec, label):
    logit_vec = np.asarray(logit_vec, dtype=np.float64)
    return float(logsumexp(logit_vec) - logit_vec[label])


def _cell_slope(cell, Z, X):
    if cell.activation == 'identity':
        return np.ones_like(Z)
    pre = Z @ cell.W.T + X @ cell.U.T + cell.b
    return 1.0 - np.tanh(pre) ** 2


def _solve_adjoint(W, slope, v, iters, tol):
    """Iterate u <- v + Wᵀ(slope ⊙ u) row-wise; returns u and per-row convergence."""
    u = v.copy()
    converged = np.zeros(len(v), dtype=bool)
    for _ in range(iters):
        u_new = v + (slope * u) @ W
        change = np.linalg.norm(u_new - u, axis=1)
        u = u_new
        converged = change <= tol * (np.linalg.norm(u, axis=1) + 1e-12)
        if np.all(converged):
            break
    return u, converged


def batch_gradients(model, X, labels, Z_star, adjoint_iters=100, adjoint_tol=1e-6, loss_scale=1.0):
    """
    Gradients of the mean cross-entropy over a batch whose fixed points are `Z_star`.
    """
    labels = np.asarray(labels, dtype=np.int64)
    lanes = len(labels)
    cell = model.cell

    L = logits(model, Z_star)
    losses = logsumexp(L, axis=1) - L[np.arange(lanes), labels]

    d_logits = softmax(L, axis=1)
    d_logits[np.arange(lanes), labels] -= 1.0
    d_logits *= loss_scale / lanes

    v = d_logits @ model.readout.V
    slope = _cell_slope(cell, Z_star, X)
    u, converged = _solve_adjoint(cell.W, slope, v, adjoint_iters, adjoint_tol)
    if not np.all(converged):
        log.warning('Adjoint did not converge for %d of %d examples, using truncated gradient',
                    int(np.sum(~converged)), lanes)
        u = np.where(converged[:, None], u, v)

    w = slope * u
    return Gradients(
        W=w.T @ Z_star,
        U=w.T @ X,
        b=np.sum(w, axis=0),
        V=d_logits.T @ Z_star,
        c=np.sum(d_logits, axis=0),
        x=w @ cell.U,
        loss=float(loss_scale * np.mean(losses)),
        adjoint_converged=bool(np.all(converged)),
    )


def grad_via_ift(model, x_noisy, label, solver=None, z_star=None,
                 adjoint_iters=1000, adjoint_tol=1e-10, loss_scale=1.0):
    """
    Parameter and input gradients of the cross-entropy at one input.

    The fixed point is solved from zero unless `z_star` is given.
    """
    x_noisy = np.asarray(x_noisy, dtype=np.float64)
    if z_star is None:
        result = solve_batch(model.cell, x_noisy[None], np.zeros((1, model.hidden_dim)),
                             solver or _precise_solver())
        z_star = result.z[0]

    grads = batch_gradients(model, x_noisy[None], [label], np.asarray(z_star)[None],
                            adjoint_iters=adjoint_iters, adjoint_tol=adjoint_tol, loss_scale=loss_scale)
    return replace(grads, x=grads.x[0])


def apply_gradients(model, grads, lr):
    cell = replace(model.cell, W=model.cell.W - lr * grads.W, U=model.cell.U - lr * grads.U,
                   b=model.cell.b - lr * grads.b)
    readout = replace(model.readout, V=model.readout.V - lr * grads.V, c=model.readout.c - lr * grads.c)
    return replace(model, cell=rescale_to_contraction(cell), readout=readout)


def _augment(data, indices, sigma, seed, step):
    X = data.inputs[indices]
    if sigma == 0:
        return X
    # one fresh draw per example per step, keyed by (example, step) on its own stream
    noise = np.vstack([gaussian_batch(seed, int(index), step, 1, data.dim, sigma, stream=AUGMENT_STREAM)
                       for index in indices])
    return X + noise


def train(model, data, cfg):
    """
    Minibatch SGD on the Gaussian-augmented cross-entropy.

    Returns the trained model and a list of LossRecord, one per step.
    """
    if data.dim != model.input_dim or data.num_classes != model.num_classes:
        raise DimensionError('Model ({0} inputs, {1} classes) does not match dataset ({2}, {3})'.format(
            model.input_dim, model.num_classes, data.dim, data.num_classes))

    trace = []
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(data))
        epoch_losses = []

        for start in range(0, len(data), cfg.batch_size):
            indices = order[start:start + cfg.batch_size]
            X = _augment(data, indices, cfg.sigma, cfg.seed, step)

            result = solve_batch(model.cell, X, np.zeros((len(indices), model.hidden_dim)), cfg.solver)
            grads = batch_gradients(model, X, data.labels[indices], result.z,
                                    adjoint_iters=cfg.adjoint_iters, adjoint_tol=cfg.adjoint_tol)

            if not np.isfinite(grads.loss):
                raise TrainingDiverged('Loss became {0} at step {1}'.format(grads.loss, step), step=step)

            model = apply_gradients(model, grads, cfg.lr)
            trace.append(LossRecord(epoch, step, grads.loss, not grads.adjoint_converged))
            epoch_losses.append(grads.loss)
            step += 1

        log.info('Epoch %d: mean loss %.6f', epoch, float(np.mean(epoch_losses)))

    return replace(model, sigma_train=float(cfg.sigma)), trace


def predict(model, X, solver):
    result = solve_batch(model.cell, X, np.zeros((len(X), model.hidden_dim)), solver)
    return classify(logits(model, result.z)), result


def clean_accuracy(model, data, solver=None):
    labels, _ = predict(model, data.inputs, solver or _default_train_solver())
    return float(np.mean(labels == data.labels))
