"""
Standard randomized smoothing over a base classifier.

Every Monte Carlo sample is solved from a cold start, so samples are
independent and may be evaluated in any order; the noise for sample i of a
point comes from the counter-based stream and does not depend on batching.
"""

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from deqcert.deqcore import DeqModel, classify, logits
from deqcert.exceptions import ArgumentError, CertificationFailed, NumericalError
from deqcert.solvers import solve_batch
from deqcert.stats import ConfidenceSpec, gaussian_batch, inv_norm_cdf, lower_conf_bound


log = logging.getLogger(__name__)

# to abstain, certification reports this class
ABSTAIN = -1


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = 0.5
    n_samples: int = 10000
    batch_size: int = 1000
    confidence: ConfidenceSpec = field(default_factory=ConfidenceSpec)
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ArgumentError('sigma must be > 0, got {0}'.format(self.sigma))
        if not self.n_samples >= self.batch_size >= 1:
            raise ArgumentError('Need n_samples >= batch_size >= 1, got {0} and {1}'.format(
                self.n_samples, self.batch_size))

    def batches(self):
        """(start, count) pairs covering the samples; the last batch may be short."""
        for start in range(0, self.n_samples, self.batch_size):
            yield start, min(self.batch_size, self.n_samples - start)


@dataclass(frozen=True)
class CertifyOutcome:
    predicted: int
    radius: float
    p_a_lower: float
    counts: np.ndarray
    top_class: int
    runner_up: int
    wall_time: float
    total_solver_iters: int

    @property
    def abstained(self):
        return self.predicted == ABSTAIN


@dataclass(frozen=True)
class BatchPrediction:
    labels: np.ndarray
    z: np.ndarray
    iters: np.ndarray
    residual: np.ndarray


class DeqClassifier(object):
    """The DEQ as a base classifier: solve for z*, read out, take the argmax."""

    def __init__(self, model):
        self.model = model

    @property
    def num_classes(self):
        return self.model.num_classes

    @property
    def input_dim(self):
        return self.model.input_dim

    @property
    def state_dim(self):
        return self.model.hidden_dim

    def classify_batch(self, X, Z0, solver):
        result = solve_batch(self.model.cell, X, Z0, solver)
        labels = classify(logits(self.model, result.z))
        return BatchPrediction(labels=labels, z=result.z, iters=result.iters, residual=result.residual)


class LinearClassifier(object):
    """
    Affine base classifier argmax(V x + c) with no fixed point to solve.

    Its smoothed version is known in closed form for two classes, which makes
    it the reference surrogate for checking certified radii.
    """

    def __init__(self, V, c):
        self.V = np.atleast_2d(np.asarray(V, dtype=np.float64))
        self.c = np.asarray(c, dtype=np.float64)

    @classmethod
    def halfspace(cls, w, b):
        """Predicts class 1 where w·x + b > 0 and class 0 elsewhere."""
        w = np.asarray(w, dtype=np.float64)
        return cls(np.vstack([np.zeros_like(w), w]), [0.0, float(b)])

    @property
    def num_classes(self):
        return self.V.shape[0]

    @property
    def input_dim(self):
        return self.V.shape[1]

    @property
    def state_dim(self):
        return 0

    def classify_batch(self, X, Z0, solver):
        lanes = len(X)
        return BatchPrediction(
            labels=classify(X @ self.V.T + self.c),
            z=np.zeros((lanes, 0)),
            iters=np.zeros(lanes, dtype=np.int64),
            residual=np.zeros(lanes),
        )


def as_classifier(model):
    if isinstance(model, DeqModel):
        return DeqClassifier(model)
    return model


def warn_on_sigma_mismatch(model, sigma):
    sigma_train = getattr(model, 'sigma_train', None)
    if sigma_train is not None and not np.isclose(sigma_train, sigma):
        log.warning('Certifying with sigma=%g but the model was trained with sigma=%g', sigma, sigma_train)


def noisy_batch(x, cfg, point_index, start, count):
    return x[None, :] + gaussian_batch(cfg.seed, point_index, start, count, len(x), cfg.sigma)


def sample_predictions(model, x, cfg, solver, point_index=0):
    """
    Base-classifier predictions for all N noisy samples of `x`, each solved from zero.

    Returns the labels in sample order and the total solver iterations.
    """
    classifier = as_classifier(model)
    x = np.asarray(x, dtype=np.float64)
    labels = np.empty(cfg.n_samples, dtype=np.int64)
    total_iters = 0

    try:
        for start, count in cfg.batches():
            X = noisy_batch(x, cfg, point_index, start, count)
            prediction = classifier.classify_batch(X, np.zeros((count, classifier.state_dim)), solver)
            labels[start:start + count] = prediction.labels
            total_iters += int(np.sum(prediction.iters))
    except NumericalError as e:
        raise CertificationFailed('Point {0}: {1}'.format(point_index, e), point_index=point_index)

    return labels, total_iters


def mc_counts(model, x, cfg, solver, point_index=0):
    labels, _ = sample_predictions(model, x, cfg, solver, point_index)
    return np.bincount(labels, minlength=as_classifier(model).num_classes)


def top_two(counts):
    """Most and second most frequent classes; ties go to the lowest index."""
    order = np.argsort(-np.asarray(counts), kind='stable')
    top = int(order[0])
    runner_up = int(order[1]) if len(order) > 1 else top
    return top, runner_up


def certified_radius(p_a_lower, sigma):
    if p_a_lower <= 0.5:
        return 0.0
    if p_a_lower >= 1.0:
        return float('inf')
    return sigma * inv_norm_cdf(p_a_lower)


def outcome_from_counts(counts, cfg, n_a=None, wall_time=0.0, total_solver_iters=0):
    """
    Certify from class counts. `n_a` overrides the top-class count fed to the bound.
    """
    counts = np.asarray(counts, dtype=np.int64)
    top, runner_up = top_two(counts)
    if n_a is None:
        n_a = int(counts[top])

    p_a_lower = lower_conf_bound(n_a, int(np.sum(counts)), cfg.confidence.confidence)
    radius = certified_radius(p_a_lower, cfg.sigma)
    predicted = top if radius > 0 else ABSTAIN

    return CertifyOutcome(
        predicted=predicted,
        radius=radius,
        p_a_lower=p_a_lower,
        counts=counts,
        top_class=top,
        runner_up=runner_up,
        wall_time=wall_time,
        total_solver_iters=total_solver_iters,
    )


def certify_standard(model, x, cfg, solver, point_index=0):
    """
    Cold-start randomized smoothing certification of one point.

    The top-class bound uses the split budget alpha/2 so that the outcome is
    comparable with serialized certification at the same alpha.
    """
    started = time.perf_counter()
    labels, total_iters = sample_predictions(model, x, cfg, solver, point_index)
    counts = np.bincount(labels, minlength=as_classifier(model).num_classes)
    return outcome_from_counts(counts, cfg, wall_time=time.perf_counter() - started,
                               total_solver_iters=total_iters)


def radius_two_sided(p_a_lower, p_b_upper, sigma):
    if not 0.0 < p_b_upper <= p_a_lower < 1.0:
        raise ArgumentError('Need 0 < p_b_upper <= p_a_lower < 1, got {0} and {1}'.format(p_b_upper, p_a_lower))
    return 0.5 * sigma * (inv_norm_cdf(p_a_lower) - inv_norm_cdf(p_b_upper))


def majority_vote(model, x, cfg, solver, point_index=0):
    """Most frequent base prediction over N fresh noisy samples (no abstention)."""
    counts = mc_counts(model, x, cfg, solver, point_index)
    return top_two(counts)[0]
