"""Airy operator spectrum and stochastic Airy operator sampling.

The Airy operator -f'' + xf on the half line (Dirichlet at 0) has a
discrete spectrum gamma_1 < gamma_2 < ... whose levels follow the
asymptotic formula (3 pi (i - 1/4) / 2)^(2/3) up to an O(1/i) remainder.
The stochastic version adds white noise of amplitude 2/sqrt(beta); its
ordered eigenvalues lambda_1 < lambda_2 < ... form the beta-Airy point
process, and the number of eigenvalues below lam equals the number of
blow-ups of the Riccati flow at spectral parameter lam.  That identity
turns eigenvalue sampling into bisection on path-wise blow-up counts with
one shared noise path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import BrownianPath, RngState, sample_brownian_path
from .riccati import RiccatiConfig, integrate_ode, integrate_sde

__all__ = [
    "AirySpectrum",
    "SaoSample",
    "airy_eigenvalue_formula",
    "airy_eigenvalue_ode",
    "count_levels",
    "sao_horizon",
    "sample_sao_eigenvalues",
    "smallest_eigenvalue_tail",
    "wilson_interval",
]

#: eigenvalue-count cap for one SAO sample; guards runaway bisection
DEFAULT_COUNT_CAP = 64


@dataclass(frozen=True)
class AirySpectrum:
    """Increasing Airy operator levels with their provenance."""

    gammas: np.ndarray
    source: str  # "formula" | "ode"

    def __post_init__(self) -> None:
        self.gammas.setflags(write=False)
        if np.any(np.diff(self.gammas) <= 0):
            raise ValueError("levels must be strictly increasing")


@dataclass(frozen=True)
class SaoSample:
    """Eigenvalues of one stochastic Airy operator realization below lambda_max."""

    beta: float
    eigenvalues: np.ndarray
    lambda_max: float
    noise_id: str

    def __post_init__(self) -> None:
        self.eigenvalues.setflags(write=False)
        if np.any(np.diff(self.eigenvalues) <= 0):
            raise ValueError("eigenvalues must be strictly increasing")
        if np.any(self.eigenvalues >= self.lambda_max):
            raise ValueError("eigenvalues must lie below lambda_max")

    def to_json(self, seed: int | None = None, dt: float | None = None,
                horizon: float | None = None) -> dict:
        out = {
            "beta": self.beta,
            "lambda_max": self.lambda_max,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "noise_id": self.noise_id,
        }
        if seed is not None:
            out["seed"] = seed
        if dt is not None:
            out["dt"] = dt
        if horizon is not None:
            out["L"] = horizon
        return out


def airy_eigenvalue_formula(i: int) -> float:
    """Asymptotic i-th Airy level (3 pi (i - 1/4) / 2)^(2/3), remainder dropped."""
    if i < 1:
        raise ValueError("level index must be >= 1")
    return (3.0 * math.pi * (i - 0.25) / 2.0) ** (2.0 / 3.0)


def _ode_count(lam: float, horizon_pad: float, cfg: RiccatiConfig) -> int:
    if lam <= 0:
        return 0
    return integrate_ode(lam, 0.0, lam + horizon_pad, cfg).count


def airy_eigenvalue_ode(i: int, cfg: RiccatiConfig = RiccatiConfig(),
                        tol: float = 1e-4, horizon_pad: float = 5.0) -> float:
    """i-th Airy level located by bisection on deterministic blow-up counts.

    The count of blow-ups on [0, lam + horizon_pad] is a step function of
    lam jumping at the levels; bisection finds where it reaches i.  The
    horizon pad only needs to cover the logarithmically slow appearance of
    the marginal blow-up near the threshold.
    """
    if i < 1:
        raise ValueError("level index must be >= 1")
    lo, hi = 0.0, airy_eigenvalue_formula(i) + 0.5
    if _ode_count(hi, horizon_pad, cfg) < i:
        lo, hi = hi, hi + 2.0  # widen once, then trust the bracket
        if _ode_count(hi, horizon_pad, cfg) < i:
            raise RuntimeError(f"bisection bracket failure for level {i}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _ode_count(mid, horizon_pad, cfg) >= i:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def count_levels(x: float, source: str = "formula",
                 cfg: RiccatiConfig = RiccatiConfig()) -> int:
    """Number of Airy levels <= x.

    The formula source inverts the closed form; the ode source counts
    deterministic blow-ups directly.
    """
    if x < airy_eigenvalue_formula(1):
        return 0
    if source == "formula":
        # gamma_i <= x  iff  i <= 1/4 + (2/(3 pi)) x^{3/2}
        return int(math.floor(0.25 + (2.0 / (3.0 * math.pi)) * x ** 1.5 + 1e-12))
    if source == "ode":
        return _ode_count(x, 5.0, cfg)
    raise ValueError("source must be 'formula' or 'ode'")


def airy_spectrum(n: int, source: str = "formula",
                  cfg: RiccatiConfig = RiccatiConfig()) -> AirySpectrum:
    """First n levels from the requested source."""
    if source == "formula":
        g = np.array([airy_eigenvalue_formula(i) for i in range(1, n + 1)])
    elif source == "ode":
        g = np.array([airy_eigenvalue_ode(i, cfg) for i in range(1, n + 1)])
    else:
        raise ValueError("source must be 'formula' or 'ode'")
    return AirySpectrum(gammas=g, source=source)


def sao_horizon(lambda_max: float) -> float:
    """Default half-line truncation: past lam the drift x - lam suppresses
    further blow-ups, so a fixed pad beyond the search ceiling suffices."""
    return max(10.0, 2.0 * lambda_max + 10.0)


def sample_sao_eigenvalues(beta: float, lambda_max: float, noise: BrownianPath,
                           cfg: RiccatiConfig = RiccatiConfig(),
                           tol: float = 1e-3,
                           count_cap: int = DEFAULT_COUNT_CAP,
                           noise_id: str = "",
                           lambda_floor: float = -64.0) -> SaoSample:
    """All eigenvalues below lambda_max along one noise path, by bisection.

    With the noise fixed, the blow-up count N(lam) on (0, horizon] is a
    nondecreasing step function of lam; the i-th eigenvalue is where it
    reaches i.  Each eigenvalue is located to ``tol``.
    """
    if not math.isinf(beta):
        if beta <= 0:
            raise ValueError("beta must be positive")
        if float(beta) != int(beta):
            warnings.warn("non-integer beta is experimental", stacklevel=2)
    horizon = len(noise) * noise.dt

    def count(lam: float) -> int:
        return integrate_sde(lam, 0.0, horizon, noise, beta, cfg).count

    n_top = count(lambda_max)
    if n_top > count_cap:
        raise RuntimeError(
            f"{n_top} eigenvalues below lambda_max={lambda_max} exceeds cap "
            f"{count_cap}; raise the cap or lower lambda_max / enlarge the horizon"
        )
    # lower pin: extend until no eigenvalue lies below
    lo_all = min(-4.0, lambda_max - 4.0)
    while count(lo_all) > 0:
        lo_all *= 2.0
        if lo_all < lambda_floor:
            raise RuntimeError("no eigenvalue-free lower pin found above lambda_floor")
    eigs = np.empty(n_top)
    lo = lo_all
    for i in range(1, n_top + 1):
        a, b = lo, lambda_max
        while b - a > tol:
            mid = 0.5 * (a + b)
            if count(mid) >= i:
                b = mid
            else:
                a = mid
        eigs[i - 1] = 0.5 * (a + b)
        lo = a  # eigenvalue i+1 cannot lie below the i-th lower bracket
    return SaoSample(beta=beta, eigenvalues=eigs, lambda_max=lambda_max,
                     noise_id=noise_id)


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = hits / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def smallest_eigenvalue_tail(beta: float, t: float, reps: int, rng: RngState,
                             cfg: RiccatiConfig = RiccatiConfig(),
                             horizon: float = 10.0, threads: int = 1) -> dict:
    """Monte-Carlo estimate of P(lambda_1 < -t) with a Wilson interval.

    The event is one blow-up of the diffusion at spectral parameter -t
    before the (truncated) horizon; paths integrate until their first
    blow-up.  Noise is drawn in per-stream chunks for throughput.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if reps < 1000:
        raise ValueError("need at least 1e3 replicas")
    from .riccati import batch_blowup_fraction

    hits = batch_blowup_fraction(-t, beta, reps, rng, horizon, cfg,
                                 threads=threads)
    lo, hi = wilson_interval(hits, reps)
    out = {
        "beta": beta,
        "t": t,
        "reps": reps,
        "hits": hits,
        "p_hat": hits / reps,
        "wilson_low": lo,
        "wilson_high": hi,
        "bound": math.exp(-(2.0 / 3.0) * beta * t ** 1.5),
        "horizon": horizon,
    }
    if hits == 0:
        out["note"] = "zero hits; only the Wilson upper bound is informative"
    return out
