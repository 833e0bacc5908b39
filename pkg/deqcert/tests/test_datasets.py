import numpy as np
import pytest

from deqcert import datasets
from deqcert.exceptions import ArgumentError


@pytest.mark.parametrize('kind', datasets.KINDS)
def test_generation_is_deterministic(kind):
    first = datasets.gen_data(kind, 60, seed=4)
    second = datasets.gen_data(kind, 60, seed=4)
    assert np.array_equal(first.inputs, second.inputs)
    assert np.array_equal(first.labels, second.labels)
    assert not np.array_equal(first.inputs, datasets.gen_data(kind, 60, seed=5).inputs)


def test_two_moons_without_noise_lie_on_arcs():
    data = datasets.gen_data('two_moons', 200, noise=0.0, seed=1)
    upper = data.inputs[data.labels == 0]
    lower = data.inputs[data.labels == 1]

    assert np.allclose(np.sum(upper ** 2, axis=1), 1.0)
    assert np.all(upper[:, 1] >= 0)
    assert np.allclose((lower[:, 0] - 1.0) ** 2 + (lower[:, 1] - 0.5) ** 2, 1.0)
    assert np.all(lower[:, 1] <= 0.5)


def test_rings_without_noise_have_class_radius():
    data = datasets.gen_data('rings', 90, noise=0.0, num_classes=3, separation=2.0)
    radii = np.linalg.norm(data.inputs, axis=1)
    assert np.allclose(radii, 2.0 * (data.labels + 1))


@pytest.mark.parametrize('n_points, num_classes, expected', [
    (100, 2, [50, 50]),
    (10, 3, [4, 3, 3]),
    (11, 4, [3, 3, 3, 2]),
])
def test_class_sizes(n_points, num_classes, expected):
    assert datasets.class_sizes(n_points, num_classes) == expected


@pytest.mark.parametrize('kind, num_classes', [('blobs', 5), ('rings', 3), ('two_moons', 2)])
def test_classes_are_balanced(kind, num_classes):
    data = datasets.gen_data(kind, 101, num_classes=num_classes)
    counts = np.bincount(data.labels, minlength=num_classes)
    assert counts.max() - counts.min() <= 1
    assert data.num_classes == num_classes


def test_blob_centers_are_evenly_spaced():
    centers = datasets.blob_centers(6, 3.0)
    gaps = np.linalg.norm(centers - np.roll(centers, 1, axis=0), axis=1)
    assert np.allclose(gaps, 3.0)


def test_blobs_are_linearly_separable():
    data = datasets.gen_data('blobs', 400, noise=0.5, seed=2, separation=4.0)
    design = np.hstack([data.inputs, np.ones((len(data), 1))])
    target = np.where(data.labels == 1, 1.0, -1.0)
    weights, *_ = np.linalg.lstsq(design, target, rcond=None)
    accuracy = np.mean(np.sign(design @ weights) == target)
    assert accuracy >= 0.99


@pytest.mark.parametrize('dim', [2, 3, 8, 16])
def test_dimensions(dim):
    data = datasets.gen_data('blobs', 40, dim=dim)
    assert data.inputs.shape == (40, dim)
    assert data.dim == dim


@pytest.mark.parametrize('kwargs', [
    {'kind': 'spirals'},
    {'dim': 1},
    {'dim': 17},
    {'noise': -0.1},
    {'kind': 'two_moons', 'num_classes': 3},
    {'n_points': 3},
])
def test_generation_errors(kwargs):
    arguments = dict(kind='blobs', n_points=40)
    arguments.update(kwargs)
    with pytest.raises(ArgumentError):
        datasets.check_options(**arguments)
    with pytest.raises(ArgumentError):
        datasets.gen_data(**arguments)


def test_split_holds_out_the_tail():
    data = datasets.gen_data('blobs', 40, seed=2)
    train, test = datasets.split_dataset(data, 0.25)

    assert (len(train), len(test)) == (30, 10)
    assert np.array_equal(np.vstack([train.inputs, test.inputs]), data.inputs)
    assert np.array_equal(test.labels, data.labels[30:])
    assert test.num_classes == data.num_classes


@pytest.mark.parametrize('n_points, test_fraction', [
    (40, 0.0),
    (40, 1.0),
    (40, -0.2),
    (4, 0.05),
    (4, 0.95),
])
def test_split_errors(n_points, test_fraction):
    data = datasets.gen_data('blobs', n_points)
    with pytest.raises(ArgumentError):
        datasets.split_dataset(data, test_fraction)
