"""Deterministic, stream-splittable random sources.

Every sampler in the package draws through an :class:`RngState`, a thin
wrapper around numpy's counter-based Philox generator.  The (seed, stream)
pair fully determines the variate sequence, and distinct streams are
statistically independent, so Monte-Carlo replicas can be enumerated by
stream index and re-merged deterministically regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngState",
    "BrownianPath",
    "sample_gaussian",
    "sample_chi",
    "sample_brownian_path",
]


@dataclass
class RngState:
    """Counter-based generator state.

    ``seed`` selects the experiment, ``stream`` the independent substream
    (replica index), and ``counter`` the starting block within the stream.
    Reconstructing an RngState with the same triple replays the exact same
    variates.
    """

    seed: int
    stream: int = 0
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        ctr = np.array([self.counter % 2**64, 0, 0, 0], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(counter=ctr, key=key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def substream(self, index: int) -> "RngState":
        """Independent stream for replica ``index`` (same seed, counter 0)."""
        return RngState(self.seed, stream=index)

    def reset(self) -> "RngState":
        """Fresh state replaying this state's sequence from the start."""
        return RngState(self.seed, self.stream, self.counter)


@dataclass(frozen=True)
class BrownianPath:
    """Brownian increments on a uniform grid, reusable across consumers.

    ``increments[j]`` is B((j+1)dt) - B(j dt) ~ N(0, dt).  The array is
    frozen after construction: shared-noise coupling across spectral
    parameters relies on every consumer seeing identical noise.
    """

    dt: float
    increments: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        self.increments.setflags(write=False)
        if len(self.increments) * self.dt != self.horizon:
            raise ValueError("horizon must equal len(increments) * dt exactly")

    def __len__(self) -> int:
        return len(self.increments)

    def cumulative(self) -> np.ndarray:
        """B at grid times dt, 2dt, ..., horizon."""
        return np.cumsum(self.increments)


def sample_gaussian(rng: RngState, size: int | None = None):
    """Standard normal variate(s); advances ``rng``."""
    return rng.generator.standard_normal(size)


def sample_chi(rng: RngState, t, size: int | None = None):
    """Chi variate(s) with ``t`` degrees of freedom (any real t > 0).

    Drawn as the square root of a Gamma(t/2, scale=2) variate, which is
    valid for shapes below and above 1; E[X^2] = t.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("degrees of freedom t must be > 0")
    if size is None and t.ndim > 0:
        size = t.shape
    return np.sqrt(2.0 * rng.generator.standard_gamma(t / 2.0, size=size))


def sample_brownian_path(rng: RngState, dt: float, horizon: float) -> BrownianPath:
    """Brownian path with N(0, dt) increments covering ``horizon``.

    A horizon that is not a multiple of dt is rounded up to the next
    multiple; the effective horizon is recorded on the returned path.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < dt:
        raise ValueError("horizon must be at least dt")
    n = math.ceil(horizon / dt - 1e-12)
    increments = rng.generator.standard_normal(n) * math.sqrt(dt)
    return BrownianPath(dt=dt, increments=increments, horizon=n * dt)
