"""
Serialized randomized smoothing (SRS).

Monte Carlo batches are solved one after another, each lane starting from
the fixed point its predecessor reached in the previous batch, with a small
per-batch iteration cap. The speed-up breaks the independence of the samples,
so certification is corrected afterwards: K samples picked uniformly at
random are re-predicted by the full-budget reference solver, the rate p_m at
which SRS claims the top class wrongly is bounded from above, and only
N_A·(1 - p̄_m) top-class votes are fed to the confidence bound. Both stages
spend alpha/2 of the failure budget.
"""

from dataclasses import dataclass, field, replace
import logging
import math
import time

import numpy as np

from deqcert.exceptions import ArgumentError, CertificationFailed, NumericalError
from deqcert.smoothing import (
    ABSTAIN, CertifyOutcome, SmoothingConfig, as_classifier, certified_radius, noisy_batch, top_two,
)
from deqcert.solvers import SolverConfig
from deqcert.stats import ConfidenceSpec, lower_conf_bound, selection_rng


log = logging.getLogger(__name__)

# Expected cut-off radii for N=10,000, K=1,000, alpha=0.001 at an unknown sigma.
# They cannot be reproduced from those values alone; logged for comparison only.
CUTOFF_REFERENCE_TABLE = {
    0.75: (0.332, 0.331),
    0.80: (0.415, 0.414),
    0.85: (0.512, 0.511),
    0.90: (0.634, 0.633),
    0.95: (0.814, 0.812),
    0.99: (1.148, 1.139),
    1.00: (1.860, 1.594),
}


def _default_reference_solver():
    return SolverConfig(method='anderson', tol=1e-3, max_iters=30)


@dataclass(frozen=True)
class SrsConfig:
    base: SmoothingConfig = field(default_factory=SmoothingConfig)
    srs_steps: int = 3
    warmup_steps: int = 30
    restart_interval: int = 10
    holdout_k: int = 1000
    reference_solver: SolverConfig = field(default_factory=_default_reference_solver)
    # solver used for serialized batches; its max_iters is replaced by the step caps
    solver: SolverConfig = None
    warmup_solver: SolverConfig = None
    start_from_clean: bool = False

    def __post_init__(self):
        if self.srs_steps < 1:
            raise ArgumentError('srs_steps must be >= 1')
        if self.warmup_steps < self.srs_steps:
            raise ArgumentError('warmup_steps must be >= srs_steps')
        if self.restart_interval < 0:
            raise ArgumentError('restart_interval must be >= 0')
        if not 1 <= self.holdout_k <= self.base.n_samples:
            raise ArgumentError('holdout_k must be in [1, n_samples], got {0}'.format(self.holdout_k))

    @property
    def serial_solver(self):
        return (self.solver or self.reference_solver).with_max_iters(self.srs_steps)

    @property
    def warm_solver(self):
        return (self.warmup_solver or self.solver or self.reference_solver).with_max_iters(self.warmup_steps)

    def is_warmup(self, batch_index):
        if batch_index == 0:
            return True
        return bool(self.restart_interval) and batch_index % self.restart_interval == 0


@dataclass
class SrsState:
    prev_z_batch: np.ndarray
    batches_done: int = 0

    @classmethod
    def cold(cls, lanes, dim):
        return cls(prev_z_batch=np.zeros((lanes, dim)))

    @property
    def lanes(self):
        return self.prev_z_batch.shape[0]

    def reset(self, start=None):
        self.prev_z_batch = np.zeros_like(self.prev_z_batch) if start is None else np.tile(
            start, (self.lanes, 1))


@dataclass(frozen=True)
class HoldoutRecord:
    x_m: np.ndarray
    y_m: np.ndarray
    y_g: np.ndarray
    indices: np.ndarray
    n1: int = 0
    n2: int = 0
    pm_upper: float = 1.0

    @property
    def k(self):
        return len(self.y_m)


@dataclass(frozen=True)
class SrsOutcome(CertifyOutcome):
    n_a: int = 0
    n_a_effective: int = 0
    pm_upper: float = 1.0
    holdout: HoldoutRecord = None
    iters_saved: int = 0
    sample_predictions: np.ndarray = None
    reference_predictions: np.ndarray = None


class Reservoir(object):
    """Uniform sample of K items from a stream of unknown length (Algorithm R)."""

    def __init__(self, k, dim, rng):
        self.k = k
        self.rng = rng
        self.seen = 0
        self.x = np.zeros((k, dim))
        self.y = np.zeros(k, dtype=np.int64)
        self.indices = np.full(k, -1, dtype=np.int64)

    def offer(self, X, labels):
        count = len(labels)
        positions = np.arange(self.seen, self.seen + count)
        slots = np.where(positions < self.k, positions, self.rng.integers(0, positions + 1))

        kept = np.flatnonzero(slots < self.k)
        # the last item offered to a slot is the one it keeps
        _, last = np.unique(slots[kept][::-1], return_index=True)
        kept = kept[::-1][last]
        self.x[slots[kept]] = X[kept]
        self.y[slots[kept]] = np.asarray(labels)[kept]
        self.indices[slots[kept]] = positions[kept]
        self.seen += count

    def record(self):
        filled = min(self.k, self.seen)
        return HoldoutRecord(
            x_m=self.x[:filled].copy(),
            y_m=self.y[:filled].copy(),
            y_g=np.full(filled, ABSTAIN, dtype=np.int64),
            indices=self.indices[:filled].copy(),
        )


def warm_start_solve_batch(model, noisy_batch_x, state, steps, solver):
    """
    Classify a batch, solving each lane from the carried fixed point of the same lane.

    `model` is a DeqModel or a base classifier. A short final batch uses the
    leading lanes. The state is updated in place.
    """
    classifier = as_classifier(model)
    lanes = len(noisy_batch_x)
    if lanes > state.lanes:
        raise ArgumentError('Batch has {0} lanes but the state carries {1}'.format(lanes, state.lanes))

    prediction = classifier.classify_batch(noisy_batch_x, state.prev_z_batch[:lanes], solver.with_max_iters(steps))
    state.prev_z_batch[:lanes] = prediction.z
    state.batches_done += 1
    return prediction


def estimate_pm_upper(record, c_a, conf):
    """
    Upper confidence bound on the rate of wrong top-class claims by SRS.

    N₁ counts holdout samples where both predictions are c_A, N₂ those where
    SRS predicted c_A. With no SRS claims of c_A there is no evidence, and the
    bound is 1.
    """
    n1 = int(np.sum((record.y_m == record.y_g) & (record.y_g == c_a)))
    n2 = int(np.sum(record.y_m == c_a))
    if n2 == 0:
        return 1.0, n1, n2
    return 1.0 - lower_conf_bound(n1, n2, conf.confidence), n1, n2


def effective_count(n_a, pm_upper):
    if n_a < 0 or not 0.0 <= pm_upper <= 1.0:
        raise ArgumentError('Need n_a >= 0 and pm_upper in [0, 1]')
    # rounding down keeps the bound conservative
    return int(math.floor(n_a * (1.0 - pm_upper)))


def _serialized_predictions(classifier, x, cfg, point_index, reservoir):
    base = cfg.base
    labels = np.empty(base.n_samples, dtype=np.int64)
    total_iters = 0

    state = SrsState.cold(base.batch_size, classifier.state_dim)
    clean_start = None
    if cfg.start_from_clean:
        clean = classifier.classify_batch(x[None], np.zeros((1, classifier.state_dim)), cfg.reference_solver)
        clean_start = clean.z[0]
        total_iters += int(np.sum(clean.iters))

    for batch_index, (start, count) in enumerate(base.batches()):
        X = noisy_batch(x, base, point_index, start, count)

        if clean_start is not None:
            state.reset(clean_start)
            solver = cfg.serial_solver
        elif cfg.is_warmup(batch_index):
            state.reset()
            solver = cfg.warm_solver
        else:
            solver = cfg.serial_solver

        prediction = warm_start_solve_batch(classifier, X, state, solver.max_iters, solver)

        labels[start:start + count] = prediction.labels
        total_iters += int(np.sum(prediction.iters))
        reservoir.offer(X, prediction.labels)

    return labels, total_iters


def _reference_predictions(classifier, X, solver, batch_size):
    labels = np.empty(len(X), dtype=np.int64)
    total_iters = 0
    for start in range(0, len(X), batch_size):
        chunk = X[start:start + batch_size]
        prediction = classifier.classify_batch(chunk, np.zeros((len(chunk), classifier.state_dim)), solver)
        labels[start:start + len(chunk)] = prediction.labels
        total_iters += int(np.sum(prediction.iters))
    return labels, total_iters


def srs_certify(model, x, cfg, point_index=0, diagnostic=False):
    """
    Certify one point with serialized sampling and correlation elimination.

    With `diagnostic`, every sample is also re-predicted by the reference
    solver and both prediction vectors are kept on the outcome.
    """
    started = time.perf_counter()
    classifier = as_classifier(model)
    x = np.asarray(x, dtype=np.float64)
    base = cfg.base

    reservoir = Reservoir(cfg.holdout_k, len(x), selection_rng(base.seed, point_index))
    try:
        labels, total_iters = _serialized_predictions(classifier, x, cfg, point_index, reservoir)

        record = reservoir.record()
        y_g, holdout_iters = _reference_predictions(classifier, record.x_m, cfg.reference_solver, base.batch_size)
        total_iters += holdout_iters

        reference = None
        if diagnostic:
            reference, _ = _reference_predictions(
                classifier, np.vstack([noisy_batch(x, base, point_index, start, count)
                                       for start, count in base.batches()]),
                cfg.reference_solver, base.batch_size)
    except NumericalError as e:
        raise CertificationFailed('Point {0}: {1}'.format(point_index, e), point_index=point_index)

    counts = np.bincount(labels, minlength=classifier.num_classes)
    top, runner_up = top_two(counts)

    record = replace(record, y_g=y_g)
    pm_upper, n1, n2 = estimate_pm_upper(record, top, base.confidence)
    record = replace(record, n1=n1, n2=n2, pm_upper=pm_upper)

    n_a = int(counts[top])
    n_a_effective = effective_count(n_a, pm_upper)
    p_a_lower = lower_conf_bound(n_a_effective, base.n_samples, base.confidence.confidence)
    radius = certified_radius(p_a_lower, base.sigma)

    budget = base.n_samples * cfg.reference_solver.max_iters if classifier.state_dim else 0

    outcome = SrsOutcome(
        predicted=top if radius > 0 else ABSTAIN,
        radius=radius,
        p_a_lower=p_a_lower,
        counts=counts,
        top_class=top,
        runner_up=runner_up,
        wall_time=time.perf_counter() - started,
        total_solver_iters=total_iters,
        n_a=n_a,
        n_a_effective=n_a_effective,
        pm_upper=pm_upper,
        holdout=record,
        iters_saved=max(0, budget - total_iters),
        sample_predictions=labels if diagnostic else None,
        reference_predictions=reference,
    )
    log.debug('Point %d: N_A=%d, N_A^E=%d, pm_upper=%.5f, radius=%.4f',
              point_index, n_a, n_a_effective, pm_upper, radius)
    return outcome


def cutoff_radius(ratio, n, k_holdout, alpha, sigma):
    """
    Largest radius certifiable when a fraction `ratio` of N samples is the top class.

    Returns (r_base, r_srs); the SRS value assumes a holdout of K samples that
    all agree with the reference solver.
    """
    if not 0.0 < ratio <= 1.0:
        raise ArgumentError('ratio must be in (0, 1]')
    if n < 1 or k_holdout < 1:
        raise ArgumentError('n and k_holdout must be >= 1')

    conf = ConfidenceSpec(alpha)
    n_a = int(round(n * ratio))
    r_base = certified_radius(lower_conf_bound(n_a, n, conf.confidence), sigma)

    pm_upper = 1.0 - lower_conf_bound(k_holdout, k_holdout, conf.confidence)
    n_a_effective = int(math.floor((1.0 - pm_upper) * n * ratio))
    r_srs = certified_radius(lower_conf_bound(n_a_effective, n, conf.confidence), sigma)

    return r_base, r_srs


def cutoff_table(ratios=None, n=10000, k_holdout=1000, alpha=0.001, sigma=0.5):
    ratios = sorted(CUTOFF_REFERENCE_TABLE) if ratios is None else ratios
    log.info('Expected cut-off radii (unverified, sigma unknown): %s', CUTOFF_REFERENCE_TABLE)
    return [(ratio,) + cutoff_radius(ratio, n, k_holdout, alpha, sigma) for ratio in ratios]
