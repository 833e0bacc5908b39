import numpy as np
import pytest

from deqcert.deqcore import make_model
from deqcert.smoothing import LinearClassifier


def rotation_blocks(scale):
    """4x4 block rotation with spectral norm `scale`."""
    return scale * np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ])


def build_toy_model(scale=0.3, sigma_train=0.0):
    # class 1 wins where the first hidden unit settles above zero
    return make_model(
        W=rotation_blocks(scale),
        U=[[1.5, 0.0], [0.0, 1.5], [1.0, 1.0], [1.0, -1.0]],
        b=[0.0, 0.0, 0.0, 0.0],
        V=[[-1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
        c=[0.0, 0.0],
        gamma=0.9,
        sigma_train=sigma_train,
    )


@pytest.fixture
def toy_model():
    return build_toy_model()


@pytest.fixture
def slow_input_model():
    """Fixed point dominated by the bias, so nearby inputs share nearly the same z*."""
    return make_model(
        W=rotation_blocks(0.5),
        U=0.005 * np.ones((4, 2)),
        b=[1.0, -0.5, 0.8, 0.3],
        V=[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]],
        c=[0.0, 0.0],
        gamma=0.9,
    )


@pytest.fixture
def constant_model():
    """Readout ignores the state and always prefers class 0."""
    return make_model(
        W=rotation_blocks(0.3),
        U=np.ones((4, 2)),
        b=np.zeros(4),
        V=np.zeros((2, 4)),
        c=[1.0, 0.0],
        gamma=0.9,
    )


@pytest.fixture
def halfspace():
    return LinearClassifier.halfspace([1.0, 0.0], 0.0)
