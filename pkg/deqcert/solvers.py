"""
Fixed-point solvers for the DEQ cell: naive iteration, Anderson
acceleration and Broyden's method behind one `solve` entry point.

Solving is batched: a batch is a stack of independent problems (lanes)
sharing one configuration. Every lane stops at its own first iterate whose
relative residual is within tolerance, and every lane returns the
lowest-residual iterate it has seen, starting point included.
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from deqcert.deqcore import cell_forward
from deqcert.exceptions import ArgumentError, NumericalError


log = logging.getLogger(__name__)

METHODS = ('naive', 'anderson', 'broyden')

RESIDUAL_EPS = 1e-8

# Anderson falls back to a naive step above this condition number
MAX_CONDITION = 1e12

BROYDEN_MIN_DENOMINATOR = 1e-12
BROYDEN_FALLBACK_DAMPING = 0.5
# a quasi-Newton step may not exceed this multiple of (1 + ‖z‖)
BROYDEN_STEP_CAP = 10.0


@dataclass(frozen=True)
class SolverConfig:
    method: str = 'anderson'
    tol: float = 1e-3
    max_iters: int = 30
    anderson_memory: int = 5
    anderson_damping: float = 1.0
    anderson_ridge: float = 1e-4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ArgumentError('Unknown solver {0!r}, expected one of {1}'.format(self.method, METHODS))
        if not self.tol > 0:
            raise ArgumentError('tol must be > 0')
        if self.max_iters < 1:
            raise ArgumentError('max_iters must be >= 1')
        if self.anderson_memory < 1:
            raise ArgumentError('anderson_memory must be >= 1')
        if not 0.0 < self.anderson_damping <= 1.0:
            raise ArgumentError('anderson_damping must be in (0, 1]')
        if self.anderson_ridge < 0:
            raise ArgumentError('anderson_ridge must be >= 0')

    def with_max_iters(self, max_iters):
        return replace(self, max_iters=int(max_iters))


@dataclass(frozen=True)
class SolverResult:
    z: np.ndarray
    residual: float
    iters: int
    converged: bool
    residual_trace: tuple = ()
    fallbacks: int = 0


@dataclass(frozen=True)
class BatchSolverResult:
    z: np.ndarray
    residual: np.ndarray
    iters: np.ndarray
    converged: np.ndarray
    traces: list = field(default_factory=list, repr=False)
    fallbacks: np.ndarray = None

    @property
    def lanes(self):
        return self.z.shape[0]

    @property
    def all_converged(self):
        return bool(np.all(self.converged))

    @property
    def total_iters(self):
        return int(np.sum(self.iters))

    def lane(self, index):
        iters = int(self.iters[index])
        trace = tuple(float(residuals[index]) for residuals in self.traces[:iters])
        fallbacks = int(self.fallbacks[index]) if self.fallbacks is not None else 0
        return SolverResult(
            z=self.z[index].copy(),
            residual=float(self.residual[index]),
            iters=iters,
            converged=bool(self.converged[index]),
            residual_trace=trace,
            fallbacks=fallbacks,
        )


def relative_residual(z, fz):
    return np.linalg.norm(fz - z, axis=-1) / (np.linalg.norm(fz, axis=-1) + RESIDUAL_EPS)


# Single-step operators

def step_naive(cell, x, z):
    return cell_forward(cell, z, x)


def _anderson_mix(Z, F, cfg):
    """
    Type-II Anderson mixing over a history of iterates.

    `Z` and `F` hold (lanes, k, h) iterates and their images, oldest first.
    Returns the next iterates and a per-lane flag marking lanes that took a
    naive step because the least-squares system was ill-conditioned.
    """
    beta = cfg.anderson_damping
    z_last = Z[:, -1]
    g_last = F[:, -1] - z_last
    naive = F[:, -1] if beta == 1.0 else z_last + beta * g_last
    lanes, k, _ = Z.shape

    if k == 1:
        return naive, np.zeros(lanes, dtype=bool)

    G = F - Z
    dG = np.diff(G, axis=1)
    dZ = np.diff(Z, axis=1)

    gram = dG @ np.swapaxes(dG, 1, 2)
    trace = np.trace(gram, axis1=1, axis2=2)
    eye = np.eye(k - 1)
    gram = gram + cfg.anderson_ridge * trace[:, None, None] * eye
    rhs = dG @ g_last[:, :, None]

    with np.errstate(all='ignore'):
        condition = np.linalg.cond(gram)
    fallback = ~np.isfinite(condition) | (condition > MAX_CONDITION)

    safe_gram = np.where(fallback[:, None, None], eye, gram)
    gamma = np.linalg.solve(safe_gram, rhs)[:, :, 0]
    gamma[fallback] = 0.0

    mixed = z_last + beta * g_last - np.einsum('bk,bkh->bh', gamma, dZ + beta * dG)
    return np.where(fallback[:, None], naive, mixed), fallback


def step_anderson(history, cfg):
    """
    One Anderson step for a single problem.

    `history` is a sequence of (z, f(z)) pairs, oldest first; only the last
    `cfg.anderson_memory` pairs are used. With one pair this is exactly a
    (damped) naive step.
    """
    if not history:
        raise ArgumentError('Anderson needs at least one (z, f(z)) pair')
    history = list(history)[-cfg.anderson_memory:]
    Z = np.stack([np.asarray(z, dtype=np.float64) for z, _ in history])[None]
    F = np.stack([np.asarray(fz, dtype=np.float64) for _, fz in history])[None]
    z_new, _ = _anderson_mix(Z, F, cfg)
    return z_new[0]


@dataclass
class BroydenState:
    """Dense inverse-Jacobian estimate of g(z) = f(z) - z, one per lane."""
    inv_jacobian: np.ndarray
    prev_z: np.ndarray = None
    prev_g: np.ndarray = None
    skipped: np.ndarray = None

    @classmethod
    def initial(cls, dim, lanes=1):
        inv_jacobian = -np.broadcast_to(np.eye(dim), (lanes, dim, dim)).copy()
        return cls(inv_jacobian=inv_jacobian, skipped=np.zeros(lanes, dtype=bool))


def _broyden_update(state, z, g):
    dz = z - state.prev_z
    dg = g - state.prev_g
    H = state.inv_jacobian
    h_dg = np.einsum('bij,bj->bi', H, dg)
    dz_h = np.einsum('bi,bij->bj', dz, H)
    denominator = np.einsum('bi,bi->b', dz, h_dg)

    ok = np.abs(denominator) >= BROYDEN_MIN_DENOMINATOR
    safe = np.where(ok, denominator, 1.0)
    update = np.einsum('bi,bj->bij', dz - h_dg, dz_h) / safe[:, None, None]
    state.inv_jacobian = H + np.where(ok[:, None, None], update, 0.0)
    state.skipped = ~ok


def step_broyden(state, z, g):
    """
    One "good" Broyden step towards a root of g.

    The inverse Jacobian is first updated with the secant pair formed by the
    previous call, then the quasi-Newton step z - H g is taken. Lanes whose
    update was skipped take a damped naive step instead.
    """
    single = np.ndim(z) == 1
    z = np.atleast_2d(z)
    g = np.atleast_2d(g)

    if state.prev_z is not None:
        _broyden_update(state, z, g)

    step = -np.einsum('bij,bj->bi', state.inv_jacobian, g)
    step = np.where(state.skipped[:, None], BROYDEN_FALLBACK_DAMPING * g, step)

    cap = BROYDEN_STEP_CAP * (1.0 + np.linalg.norm(z, axis=-1))
    length = np.linalg.norm(step, axis=-1)
    step *= np.minimum(1.0, cap / np.maximum(length, 1e-300))[:, None]

    state.prev_z = z.copy()
    state.prev_g = g.copy()

    z_new = z + step
    return z_new[0] if single else z_new


# Iteration drivers

class _NaiveStepper(object):

    def __init__(self, z, fz, cfg):
        pass

    def step(self, z, fz):
        return fz, np.zeros(z.shape[0], dtype=bool)

    def observe(self, z, fz):
        pass


class _AndersonStepper(object):

    def __init__(self, z, fz, cfg):
        self.cfg = cfg
        self.Z = [z]
        self.F = [fz]

    def step(self, z, fz):
        return _anderson_mix(np.stack(self.Z, axis=1), np.stack(self.F, axis=1), self.cfg)

    def observe(self, z, fz):
        self.Z.append(z)
        self.F.append(fz)
        if len(self.Z) > self.cfg.anderson_memory:
            del self.Z[0]
            del self.F[0]


class _BroydenStepper(object):

    def __init__(self, z, fz, cfg):
        self.state = BroydenState.initial(z.shape[1], lanes=z.shape[0])

    def step(self, z, fz):
        z_new = step_broyden(self.state, z, fz - z)
        return z_new, self.state.skipped.copy()

    def observe(self, z, fz):
        pass


STEPPERS = {
    'naive': _NaiveStepper,
    'anderson': _AndersonStepper,
    'broyden': _BroydenStepper,
}


def _evaluate(fn, z, iteration):
    fz = np.asarray(fn(z), dtype=np.float64)
    bad = ~np.all(np.isfinite(fz), axis=-1)
    if np.any(bad):
        lane = int(np.flatnonzero(bad)[0])
        raise NumericalError('Non-finite value at iteration {0} in lane {1}'.format(iteration, lane),
                             iteration=iteration, lane=lane)
    return fz


def fixed_point(fn, z0, cfg):
    """
    Iterate towards z = fn(z) for a batch of states.

    `fn` maps a (lanes, hidden) array to the row-wise image. Lanes that
    reach tolerance are frozen while the others keep iterating.
    """
    z = np.array(np.atleast_2d(z0), dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericalError('Initial state is not finite', iteration=0)

    fz = _evaluate(fn, z, 0)
    residual = relative_residual(z, fz)
    lanes = z.shape[0]

    best_z = z.copy()
    best_residual = residual.copy()
    iters = np.zeros(lanes, dtype=np.int64)
    fallbacks = np.zeros(lanes, dtype=np.int64)
    traces = []
    active = residual > cfg.tol

    stepper = STEPPERS[cfg.method](z, fz, cfg)

    for iteration in range(1, cfg.max_iters + 1):
        if not np.any(active):
            break

        proposal, fell_back = stepper.step(z, fz)
        z_new = np.where(active[:, None], proposal, z)
        if not np.all(np.isfinite(z_new)):
            lane = int(np.flatnonzero(~np.all(np.isfinite(z_new), axis=-1))[0])
            raise NumericalError('Non-finite iterate at iteration {0} in lane {1}'.format(iteration, lane),
                                 iteration=iteration, lane=lane)

        fz_new = np.where(active[:, None], _evaluate(fn, z_new, iteration), fz)
        residual_new = relative_residual(z_new, fz_new)

        traces.append(np.where(active, residual_new, np.nan))
        iters += active
        fallbacks += active & fell_back

        improved = active & (residual_new < best_residual)
        best_z[improved] = z_new[improved]
        best_residual[improved] = residual_new[improved]

        stepper.observe(z_new, fz_new)
        z, fz = z_new, fz_new
        active = active & (residual_new > cfg.tol)

    if np.any(fallbacks):
        log.debug('%s solver fell back to naive steps %d times', cfg.method, int(np.sum(fallbacks)))

    return BatchSolverResult(
        z=best_z,
        residual=best_residual,
        iters=iters,
        converged=best_residual <= cfg.tol,
        traces=traces,
        fallbacks=fallbacks,
    )


def solve_batch(cell, X, Z0, cfg):
    X = np.atleast_2d(X)
    return fixed_point(lambda Z: cell_forward(cell, Z, X), Z0, cfg)


def solve(cell, x, z0, cfg):
    return solve_batch(cell, np.asarray(x)[None], np.asarray(z0)[None], cfg).lane(0)
