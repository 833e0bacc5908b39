"""
Statistical primitives for certification.

Clopper–Pearson one-sided lower bounds, the inverse standard-normal CDF
and counter-based Gaussian noise. Noise for a (seed, point, sample) triple
is a pure function of that triple: batches may be cut anywhere and samples
evaluated in any order without changing a single draw.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.stats import norm
from statsmodels.stats.proportion import proportion_confint

from deqcert.exceptions import ArgumentError


# Philox4x64 emits four 64-bit words per counter step
WORDS_PER_BLOCK = 4

# independent Philox streams per (seed, point)
NOISE_STREAM = 0
SELECTION_STREAM = 1
AUGMENT_STREAM = 2


@dataclass(frozen=True)
class ConfidenceSpec:
    alpha: float = 0.001

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ArgumentError('alpha must be in (0, 1), got {0}'.format(self.alpha))

    @property
    def alpha_tilde(self):
        # the two-stage test splits the failure budget evenly
        return self.alpha / 2.0

    @property
    def confidence(self):
        return 1.0 - self.alpha_tilde


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    point_index: int
    sample_index: int = 0


def lower_conf_bound(k, n, confidence):
    """
    One-sided Clopper–Pearson lower bound on a binomial proportion.

    Returns the largest p such that P[Binomial(n, p) >= k] <= 1 - confidence.
    """
    if n < 1 or not 0 <= k <= n:
        raise ArgumentError('Need 0 <= k <= n and n >= 1, got k={0}, n={1}'.format(k, n))
    if not 0.0 < confidence < 1.0:
        raise ArgumentError('confidence must be in (0, 1), got {0}'.format(confidence))
    if k == 0:
        return 0.0

    # a two-sided interval at 2(1-c) has the one-sided bound at c as its lower end
    low, _ = proportion_confint(int(k), int(n), alpha=2.0 * (1.0 - confidence), method='beta')
    return float(min(low, k / n))


def inv_norm_cdf(p):
    if not 0.0 < p < 1.0:
        raise ArgumentError('inv_norm_cdf needs p in (0, 1), got {0}'.format(p))
    return float(norm.ppf(p))


def norm_cdf(z):
    return float(norm.cdf(z))


def _stream_key(seed, point_index, stream):
    seed_sequence = np.random.SeedSequence(int(seed), spawn_key=(int(point_index), stream))
    return seed_sequence.generate_state(2, dtype=np.uint64)


def _blocks_per_sample(dim):
    pairs = (dim + 1) // 2
    return max(1, math.ceil(2 * pairs / WORDS_PER_BLOCK))


def _uniforms(raw):
    # 53 random bits mapped to the open interval (0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def gaussian_batch(seed, point_index, start, count, dim, sigma, stream=NOISE_STREAM):
    """
    Draw `count` noise vectors for samples start .. start+count-1 of a point.

    Sample i reads the Philox blocks at counters i*b+1 .. i*b+b (b blocks per
    sample), so any batching of the sample range yields the same vectors.
    `stream` picks one of the independent streams of the point.
    """
    if sigma < 0:
        raise ArgumentError('sigma must be >= 0, got {0}'.format(sigma))
    if count <= 0 or dim <= 0:
        return np.zeros((max(count, 0), max(dim, 0)))
    if sigma == 0:
        return np.zeros((count, dim))

    blocks = _blocks_per_sample(dim)
    words = blocks * WORDS_PER_BLOCK
    bit_generator = np.random.Philox(key=_stream_key(seed, point_index, stream),
                                     counter=int(start) * blocks)
    raw = bit_generator.random_raw(count * words).reshape(count, words)

    pairs = (dim + 1) // 2
    u1 = _uniforms(raw[:, 0:2 * pairs:2])
    u2 = _uniforms(raw[:, 1:2 * pairs:2])
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    normals = np.empty((count, 2 * pairs))
    normals[:, 0::2] = radius * np.cos(theta)
    normals[:, 1::2] = radius * np.sin(theta)

    return sigma * normals[:, :dim]


def gaussian_draw(stream, dim, sigma):
    return gaussian_batch(stream.seed, stream.point_index, stream.sample_index, 1, dim, sigma)[0]


def selection_rng(seed, point_index):
    """Generator for sampling decisions of a point, independent of its noise."""
    return np.random.Generator(np.random.Philox(key=_stream_key(seed, point_index, SELECTION_STREAM)))
