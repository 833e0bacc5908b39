"""
Metrics over certification reports and an empirical PGD check.

ACR is the mean over all rows of radius·1{correct}: abstentions and wrong
predictions add zero to the sum but still count in the denominator.
"""

from dataclasses import dataclass
import logging

import numpy as np

from deqcert.exceptions import AlignmentError, ArgumentError
from deqcert.smoothing import ABSTAIN
from deqcert.training import grad_via_ift


log = logging.getLogger(__name__)

MODES = ('standard', 'srs')

DEFAULT_THRESHOLDS = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5)

RRD_BINS = 20
PM_BINS = 10
GAP_BINS = 10

PGD_STEPS = 20
PGD_STEP_SIZE = 0.1


@dataclass(frozen=True)
class ReportRow:
    point_index: int
    true_label: int
    predicted: int
    radius: float
    mode: str
    counts: tuple = ()
    top_class: int = ABSTAIN
    p_a_lower: float = 0.0
    pm_upper: float = None
    n_a: int = None
    n_a_effective: int = None
    wall_time: float = 0.0
    iters_total: int = 0
    iters_saved: int = None
    status: str = 'ok'
    error: str = ''

    def __post_init__(self):
        if self.mode not in MODES:
            raise ArgumentError('Unknown mode {0!r}'.format(self.mode))
        if self.radius < 0:
            raise ArgumentError('radius must be >= 0')
        if self.predicted == ABSTAIN and self.radius != 0:
            raise ArgumentError('An abstained row must have radius 0')

    @property
    def correct(self):
        return self.predicted != ABSTAIN and self.predicted == self.true_label

    @classmethod
    def from_outcome(cls, point_index, true_label, mode, outcome):
        extra = {}
        if mode == 'srs':
            extra = dict(pm_upper=outcome.pm_upper, n_a=outcome.n_a, n_a_effective=outcome.n_a_effective,
                         iters_saved=outcome.iters_saved)
        return cls(
            point_index=int(point_index),
            true_label=int(true_label),
            predicted=int(outcome.predicted),
            radius=float(outcome.radius),
            mode=mode,
            counts=tuple(int(c) for c in outcome.counts),
            top_class=int(outcome.top_class),
            p_a_lower=float(outcome.p_a_lower),
            wall_time=float(outcome.wall_time),
            iters_total=int(outcome.total_solver_iters),
            **extra
        )

    @classmethod
    def failed(cls, point_index, true_label, mode, error):
        return cls(point_index=int(point_index), true_label=int(true_label), predicted=ABSTAIN, radius=0.0,
                   mode=mode, status='failed', error=str(error))


def certified_accuracy(rows, thresholds):
    if not rows:
        raise ArgumentError('certified_accuracy needs at least one row')
    radii = np.array([row.radius if row.correct else -1.0 for row in rows])
    return [float(np.mean(radii > threshold)) for threshold in thresholds]


def acr(rows):
    if not rows:
        raise ArgumentError('acr needs at least one row')
    return float(np.mean([row.radius if row.correct else 0.0 for row in rows]))


def rrd(r_base, r_srs):
    if not r_base > 0:
        raise ArgumentError('RRD is defined for a positive baseline radius, got {0}'.format(r_base))
    return abs(r_base - r_srs) / r_base


def paired_rrd(base_rows, srs_rows):
    """RRD of every point with a positive baseline radius, in point order."""
    check_rows_aligned(base_rows, srs_rows)
    return [rrd(base.radius, srs.radius) for base, srs in zip(base_rows, srs_rows) if base.radius > 0]


def pm_gap(row, per_sample_ref_preds, per_sample_srs_preds):
    """
    p̄_m minus the observed rate of SRS top-class claims the reference solver rejects.
    """
    if row.mode != 'srs':
        raise ArgumentError('pm_gap needs an SRS row')
    reference = np.asarray(per_sample_ref_preds)
    serial = np.asarray(per_sample_srs_preds)
    if reference.shape != serial.shape:
        raise ArgumentError('Prediction vectors differ in length')

    claims = serial == row.top_class
    n_a = int(np.sum(claims))
    if n_a == 0:
        raise ArgumentError('No sample was predicted as the top class')
    misaligned = int(np.sum(claims & (reference != serial)))
    return row.pm_upper - misaligned / n_a


def histogram(values, bins, value_range=None):
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=value_range)
    return [{'lower': float(lo), 'upper': float(hi), 'count': int(n)}
            for lo, hi, n in zip(edges[:-1], edges[1:], counts)]


def rrd_histogram(values):
    # RRD above 1 is folded into the last bin
    return histogram(np.minimum(values, 1.0), RRD_BINS, (0.0, 1.0))


def pm_histogram(values):
    return histogram(values, PM_BINS, (0.0, 1.0))


def gap_histogram(values):
    return histogram(values, GAP_BINS)


def check_rows_aligned(rows_a, rows_b):
    if [row.point_index for row in rows_a] != [row.point_index for row in rows_b]:
        raise AlignmentError('Reports cover different points')
    for a, b in zip(rows_a, rows_b):
        if a.true_label != b.true_label:
            raise AlignmentError('Point {0} has different labels in the two reports'.format(a.point_index))


def check_headers_aligned(header_a, header_b):
    """Two reports are sample-aligned when they share noise seed, sigma and sample count."""
    for key in ('seed', 'sigma', 'n_samples', 'dataset'):
        if header_a.get(key) != header_b.get(key):
            raise AlignmentError('Reports differ in {0}: {1!r} vs {2!r}'.format(
                key, header_a.get(key), header_b.get(key)))


def summarize(rows, thresholds=DEFAULT_THRESHOLDS):
    ok_rows = [row for row in rows if row.status == 'ok']
    summary = {
        'points': len(rows),
        'failed': len(rows) - len(ok_rows),
        'thresholds': list(thresholds),
        'certified_accuracy': certified_accuracy(rows, thresholds),
        'acr': acr(rows),
        'mean_wall_time': float(np.mean([row.wall_time for row in ok_rows])) if ok_rows else 0.0,
        'mean_iters': float(np.mean([row.iters_total for row in ok_rows])) if ok_rows else 0.0,
    }
    pm_values = [row.pm_upper for row in ok_rows if row.pm_upper is not None]
    if pm_values:
        summary['pm_histogram'] = pm_histogram(pm_values)
    return summary


def pgd_l2(model, solver, x, label, eps, steps=PGD_STEPS, step_size=PGD_STEP_SIZE):
    """
    ℓ2 PGD on the base DEQ's cross-entropy, gradients through the fixed point.

    Each step moves along the normalised input gradient and is projected back
    onto the eps-ball around x. Returns the iterate with the largest loss.
    """
    if eps < 0:
        raise ArgumentError('eps must be >= 0')
    x = np.asarray(x, dtype=np.float64)
    if eps == 0:
        return x.copy()

    candidate = x.copy()
    best, best_loss = candidate, -np.inf
    for step in range(steps + 1):
        grads = grad_via_ift(model, candidate, label, solver=solver)
        if grads.loss > best_loss:
            best, best_loss = candidate, grads.loss
        if step == steps:
            break

        norm = np.linalg.norm(grads.x)
        if norm == 0:
            break
        delta = candidate - x + step_size * grads.x / norm
        length = np.linalg.norm(delta)
        if length > eps:
            delta *= eps / length
        candidate = x + delta

    return best
