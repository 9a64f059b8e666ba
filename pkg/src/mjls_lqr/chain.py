"""Continuous-time Markov chain utilities.

Generator checks, reachability of modes from the initial distribution,
forward Kolmogorov occupation probabilities and exact path sampling.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDistributionError, ShapeError
from .grid import TimeGrid
from .model import TOL_GEN, TOL_PROB, TOL_RATE, VisitedSet


@dataclass(frozen=True)
class GeneratorDiagnostics:
    ok: bool
    negative_rates: tuple = ()
    row_sums: tuple = ()
    absorbing: tuple = ()
    non_finite: bool = False

    def messages(self):
        out = []
        if self.non_finite:
            out.append("generator has non-finite entries")
        for i, j, v in self.negative_rates:
            out.append(f"negative rate {v:g} at ({i + 1},{j + 1})")
        for i, s in self.row_sums:
            out.append(f"row {i + 1} sums to {s:g}")
        return out


def validate_generator(generator):
    """Check that ``generator`` is a transition-rate matrix.

    Never raises on bad values; the returned diagnostics list every
    offending entry with 0-based indices. Modes with no outgoing rate
    above ``TOL_RATE`` are reported as absorbing.
    """
    lam = np.asarray(generator, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise ShapeError(f"generator must be square, got {lam.shape}")
    if not np.all(np.isfinite(lam)):
        return GeneratorDiagnostics(ok=False, non_finite=True)
    N = lam.shape[0]
    off = ~np.eye(N, dtype=bool)
    negative = tuple(
        (int(i), int(j), float(lam[i, j])) for i, j in np.argwhere((lam < 0) & off)
    )
    sums = lam.sum(axis=1)
    rows = tuple((int(i), float(sums[i])) for i in np.flatnonzero(np.abs(sums) > TOL_GEN))
    outflow = np.where(off, lam, 0.0).sum(axis=1)
    absorbing = tuple(int(i) for i in np.flatnonzero(outflow <= TOL_RATE))
    return GeneratorDiagnostics(
        ok=not negative and not rows,
        negative_rates=negative,
        row_sums=rows,
        absorbing=absorbing,
    )


def support(phi):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or not np.any(phi > TOL_PROB):
        raise InvalidDistributionError("initial distribution has no positive entry", field="phi")
    return np.flatnonzero(phi > TOL_PROB)


def visited_states(generator, phi):
    """Modes reachable from the support of ``phi`` along positive-rate edges."""
    lam = np.asarray(generator, dtype=float)
    N = lam.shape[0]
    if np.shape(phi) != (N,):
        raise ShapeError(f"phi has shape {np.shape(phi)}, expected ({N},)")
    start = support(phi)
    seen = np.zeros(N, dtype=bool)
    seen[start] = True
    queue = deque(int(i) for i in start)
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(lam[i] > TOL_RATE):
            if j != i and not seen[j]:
                seen[j] = True
                queue.append(int(j))
    return VisitedSet(tuple(np.flatnonzero(seen)), N)


@dataclass(frozen=True)
class ModeProbabilities:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def at(self, t):
        return self.values[self.grid.index_at(t)]


def mode_probabilities(generator, phi, grid):
    """Integrate d(pi)/dt = pi @ generator with classical RK4 on ``grid``."""
    lam = np.asarray(generator, dtype=float)
    pi = np.asarray(phi, dtype=float).copy()
    h = grid.step
    out = np.empty((grid.num_steps + 1, lam.shape[0]))
    out[0] = pi
    for k in range(grid.num_steps):
        k1 = pi @ lam
        k2 = (pi + 0.5 * h * k1) @ lam
        k3 = (pi + 0.5 * h * k2) @ lam
        k4 = (pi + h * k3) @ lam
        pi = pi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        pi /= pi.sum()
        out[k + 1] = pi
    out.setflags(write=False)
    return ModeProbabilities(grid, out)


@dataclass(frozen=True)
class JumpPath:
    """Piecewise-constant chain realization on [0, horizon].

    ``starts[k]`` is the time the chain entered ``modes[k]``; ``starts[0] == 0``.
    """

    starts: tuple
    modes: tuple
    horizon: float

    @property
    def segments(self):
        return tuple(zip(self.starts, self.modes))

    @property
    def num_jumps(self):
        return len(self.modes) - 1

    def mode_at(self, t):
        k = int(np.searchsorted(self.starts, t, side="right")) - 1
        return self.modes[max(k, 0)]

    def node_starts(self, grid):
        """Segment start indices snapped to the last grid node at or before each jump."""
        s = np.floor(np.asarray(self.starts) / grid.step + 1e-9).astype(np.int64)
        return np.minimum(s, grid.num_steps)


def path_rng(path_seed):
    """Counter-based generator keyed on an int or a sequence of ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(path_seed)))


def _jump_tables(generator, phi):
    lam = np.asarray(generator, dtype=float)
    N = lam.shape[0]
    p0 = np.where(np.asarray(phi, dtype=float) > TOL_PROB, phi, 0.0)
    p0 = np.cumsum(p0 / p0.sum())
    rates = np.where(lam > TOL_RATE, lam, 0.0)
    np.fill_diagonal(rates, 0.0)
    exit_rate = rates.sum(axis=1)
    cum = np.zeros((N, N))
    for i in range(N):
        if exit_rate[i] > TOL_RATE:
            cum[i] = np.cumsum(rates[i] / exit_rate[i])
    return p0, exit_rate, cum


def _draw(cum, u):
    return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)


def _sample_path(tables, horizon, rng):
    p0, exit_rate, cum = tables
    mode = _draw(p0, rng.random())
    starts, modes = [0.0], [mode]
    t = 0.0
    while exit_rate[mode] > TOL_RATE:
        t += rng.exponential(1.0 / exit_rate[mode])
        if t >= horizon:
            break
        mode = _draw(cum[mode], rng.random())
        starts.append(t)
        modes.append(mode)
    return JumpPath(tuple(starts), tuple(modes), float(horizon))


def sample_path(generator, phi, horizon, path_seed):
    """Sample one chain path; identical output for identical ``path_seed``."""
    return _sample_path(_jump_tables(generator, phi), horizon, path_rng(path_seed))
