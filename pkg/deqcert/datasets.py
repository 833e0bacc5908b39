# pylint: disable=missing-docstring

"""
Synthetic point clouds used in place of image datasets.

Every generator is class-balanced (the first `n % k` classes get one extra
point) and deterministic given the seed. Dimensions beyond the second carry
only noise.
"""

import logging

import numpy as np

from deqcert.exceptions import ArgumentError
from deqcert.training import Dataset


log = logging.getLogger(__name__)

KINDS = ('blobs', 'two_moons', 'rings')

MIN_DIM = 2
MAX_DIM = 16


def class_sizes(n_points, num_classes):
    if n_points < 2 * num_classes:
        raise ArgumentError('Need at least {0} points for {1} classes'.format(2 * num_classes, num_classes))
    base, extra = divmod(n_points, num_classes)
    return [base + (1 if label < extra else 0) for label in range(num_classes)]


def blob_centers(num_classes, separation):
    """Centers evenly spaced on a circle, adjacent ones `separation` apart."""
    if num_classes == 1:
        return np.zeros((1, 2))
    radius = separation / (2.0 * np.sin(np.pi / num_classes))
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def _blobs(rng, sizes, noise, separation):
    centers = blob_centers(len(sizes), separation)
    return [centers[label] + noise * rng.standard_normal((size, 2)) for label, size in enumerate(sizes)]


def _two_moons(rng, sizes, noise, separation):
    if len(sizes) != 2:
        raise ArgumentError('two_moons has exactly two classes')
    t0 = np.pi * rng.random(sizes[0])
    t1 = np.pi * rng.random(sizes[1])
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    return [upper + noise * rng.standard_normal(upper.shape), lower + noise * rng.standard_normal(lower.shape)]


def _rings(rng, sizes, noise, separation):
    clouds = []
    for label, size in enumerate(sizes):
        angles = 2.0 * np.pi * rng.random(size)
        radius = separation * (label + 1)
        ring = radius * np.column_stack([np.cos(angles), np.sin(angles)])
        clouds.append(ring + noise * rng.standard_normal(ring.shape))
    return clouds


GENERATORS = {
    'blobs': _blobs,
    'two_moons': _two_moons,
    'rings': _rings,
}


def check_options(kind, n_points, noise=0.1, num_classes=2, dim=2):
    if kind not in GENERATORS:
        raise ArgumentError('Unknown dataset kind {0!r}, expected one of {1}'.format(kind, KINDS))
    if not MIN_DIM <= dim <= MAX_DIM:
        raise ArgumentError('dim must be in [{0}, {1}]'.format(MIN_DIM, MAX_DIM))
    if noise < 0:
        raise ArgumentError('noise must be >= 0')
    if kind == 'two_moons' and num_classes != 2:
        raise ArgumentError('two_moons has exactly two classes')
    class_sizes(n_points, num_classes)


def gen_data(kind, n_points, noise=0.1, seed=0, num_classes=2, dim=2, separation=4.0):
    check_options(kind, n_points, noise, num_classes, dim)

    rng = np.random.default_rng(seed)
    sizes = class_sizes(n_points, num_classes)
    clouds = GENERATORS[kind](rng, sizes, noise, separation)

    inputs = np.vstack(clouds)
    if dim > 2:
        inputs = np.hstack([inputs, noise * rng.standard_normal((len(inputs), dim - 2))])
    labels = np.concatenate([np.full(size, label, dtype=np.int64) for label, size in enumerate(sizes)])

    order = rng.permutation(len(labels))
    log.info('Generated %d %s points in %d dimensions', len(labels), kind, dim)
    return Dataset(inputs=inputs[order], labels=labels[order], num_classes=len(sizes))


def split_dataset(data, test_fraction):
    """
    Hold out the last `test_fraction` of the points.

    Generated datasets are already shuffled, so the tail is a uniform sample.
    Returns (train, test).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ArgumentError('test_fraction must be in (0, 1), got {0}'.format(test_fraction))
    n_test = int(round(len(data) * test_fraction))
    if not 1 <= n_test < len(data):
        raise ArgumentError('A test fraction of {0} leaves an empty split of {1} points'.format(
            test_fraction, len(data)))

    indices = np.arange(len(data))
    return data.subset(indices[:-n_test]), data.subset(indices[-n_test:])
