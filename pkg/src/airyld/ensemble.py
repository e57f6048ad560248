"""Gaussian beta-ensemble via the tridiagonal model and its edge scaling.

The symmetric tridiagonal matrix with N(0, 2/beta) diagonal and
chi_{(n-1)beta}, chi_{(n-2)beta}, ..., chi_beta off-diagonal entries (all
divided by sqrt(beta)) has the beta-ensemble joint eigenvalue density.
Eigenvalues are computed by LAPACK's tridiagonal solvers and certified by
Sturm negative-inertia counts, which give exact eigenvalue-below-shift
semantics independently of the solver.  The edge maps
lam -> n^{1/6} (lam - 2 sqrt(n)) and its k-rescaling, together with the
finite-n reference density mu0, feed the counting functions used by the
empirical-measure machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.integrate import quad
from scipy.linalg import eigh_tridiagonal

from .measures import SignedMeasure
from .rng import RngState, sample_chi, sample_gaussian

__all__ = [
    "TridiagonalMatrix",
    "EdgeScaledSpectrum",
    "ReferenceDensity",
    "CountingTriple",
    "sample_tridiagonal",
    "eigenvalues_tridiagonal",
    "top_eigenvalues",
    "eigenvalues_in_range",
    "sturm_count_below",
    "edge_rescale",
    "counting_triple",
    "edge_centered_measure",
]


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix with positive off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "diag", np.ascontiguousarray(self.diag, dtype=float))
        object.__setattr__(self, "offdiag", np.ascontiguousarray(self.offdiag, dtype=float))
        if self.offdiag.size != max(self.diag.size - 1, 0):
            raise ValueError("offdiag must have length n - 1")
        if self.offdiag.size and np.min(self.offdiag) <= 0:
            raise ValueError("off-diagonal entries must be strictly positive")
        self.diag.setflags(write=False)
        self.offdiag.setflags(write=False)

    @property
    def n(self) -> int:
        return self.diag.size

    def gershgorin(self) -> tuple[float, float]:
        off = float(self.offdiag.max()) if self.offdiag.size else 0.0
        return float(self.diag.min()) - 2 * off, float(self.diag.max()) + 2 * off


def sample_tridiagonal(beta: int, n: int, rng: RngState) -> TridiagonalMatrix:
    """One draw of the beta-ensemble tridiagonal model of size n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    diag = math.sqrt(2.0 / beta) * sample_gaussian(rng, n)
    if n == 1:
        return TridiagonalMatrix(diag=diag, offdiag=np.zeros(0))
    dof = beta * np.arange(n - 1, 0, -1, dtype=float)  # chi_{(n-1)b}, ..., chi_b
    offdiag = sample_chi(rng, dof) / math.sqrt(beta)
    return TridiagonalMatrix(diag=diag, offdiag=offdiag)


@njit(cache=True, nogil=True)
def _sturm_count(diag, off2, x):
    n = diag.shape[0]
    count = 0
    d = diag[0] - x
    if d < 0.0:
        count += 1
    for i in range(1, n):
        if d == 0.0:
            d = 1e-300
        d = (diag[i] - x) - off2[i - 1] / d
        if d < 0.0:
            count += 1
    return count


def sturm_count_below(m: TridiagonalMatrix, x: float) -> int:
    """Exact number of eigenvalues strictly below x (negative inertia of
    the shifted matrix, via the stabilized pivot recurrence)."""
    return int(_sturm_count(m.diag, m.offdiag ** 2, float(x)))


def eigenvalues_tridiagonal(m: TridiagonalMatrix, tol: float = 1e-10) -> np.ndarray:
    """All eigenvalues, sorted decreasing, each accurate to ``tol``.

    LAPACK does the root finding; ``sturm_count_below`` at value +- tol
    certifies each reported eigenvalue's index when needed.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if m.n == 1:
        return m.diag.copy()
    vals = eigh_tridiagonal(m.diag, m.offdiag, eigvals_only=True)
    return vals[::-1].copy()


def top_eigenvalues(m: TridiagonalMatrix, count: int) -> np.ndarray:
    """Largest ``count`` eigenvalues, sorted decreasing."""
    count = min(count, m.n)
    if m.n == 1:
        return m.diag.copy()
    vals = eigh_tridiagonal(m.diag, m.offdiag, eigvals_only=True,
                            select="i", select_range=(m.n - count, m.n - 1))
    return vals[::-1].copy()


def eigenvalues_in_range(m: TridiagonalMatrix, lo: float, hi: float) -> np.ndarray:
    """Eigenvalues in (lo, hi], sorted decreasing."""
    if m.n == 1:
        v = m.diag[(m.diag > lo) & (m.diag <= hi)]
        return v.copy()
    vals = eigh_tridiagonal(m.diag, m.offdiag, eigvals_only=True,
                            select="v", select_range=(lo, hi))
    return vals[::-1].copy()


@dataclass(frozen=True)
class EdgeScaledSpectrum:
    """Edge-rescaled eigenvalues: tildes = n^{1/6}(lam - 2 sqrt(n)) and the
    k-scale flip bs = -k^{-2/3} tildes.  May carry only the top block."""

    n: int
    k: int
    lambdas: np.ndarray
    tildes: np.ndarray
    bs: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.lambdas, self.tildes, self.bs):
            arr.setflags(write=False)
        if np.any(np.diff(self.lambdas) >= 0):
            raise ValueError("lambdas must be strictly decreasing")

    def to_json(self, blocks=("lambdas", "tildes", "bs")) -> dict:
        out = {"n": self.n, "k": self.k}
        for name in blocks:
            out[name] = [float(v) for v in getattr(self, name)]
        return out


def edge_rescale(lambdas, n: int, k: int) -> EdgeScaledSpectrum:
    """Apply the two affine edge maps to a decreasing eigenvalue array."""
    if k < 1 or k > n:
        raise ValueError("require 1 <= k <= n")
    lambdas = np.ascontiguousarray(lambdas, dtype=float)
    if lambdas.size > 1 and np.any(np.diff(lambdas) >= 0):
        raise ValueError("eigenvalues must be sorted decreasing")
    tildes = n ** (1.0 / 6.0) * (lambdas - 2.0 * math.sqrt(n))
    bs = -float(k) ** (-2.0 / 3.0) * tildes
    return EdgeScaledSpectrum(n=n, k=k, lambdas=lambdas, tildes=tildes, bs=bs)


@dataclass(frozen=True)
class ReferenceDensity:
    """Finite-n reference density sqrt(x) (1 - (k/n)^{2/3} x / 4)^{1/2} / pi
    supported on [0, 4 (n/k)^{2/3}]; k times its total mass is n."""

    n: int
    k: int

    def __post_init__(self) -> None:
        if self.k < 1 or self.k > self.n:
            raise ValueError("require 1 <= k <= n")

    @property
    def support_hi(self) -> float:
        return 4.0 * (self.n / self.k) ** (2.0 / 3.0)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        c = (self.k / self.n) ** (2.0 / 3.0)
        inside = (x >= 0) & (x <= self.support_hi)
        xi = np.where(inside, x, 0.0)
        out = np.where(inside, np.sqrt(xi) * np.sqrt(np.maximum(1.0 - 0.25 * c * xi, 0.0)) / math.pi, 0.0)
        return out if out.ndim else float(out)

    def mass(self, a: float, b: float) -> float:
        """Reference mass of [a, b] by adaptive quadrature (abs tol 1e-10)."""
        a = max(a, 0.0)
        b = min(b, self.support_hi)
        if b <= a:
            return 0.0
        val, _ = quad(self.density, a, b, epsabs=1e-10, epsrel=1e-12, limit=200)
        return val


@dataclass(frozen=True)
class CountingTriple:
    """Step count of the bs against the integrated reference, on a grid."""

    grid: np.ndarray
    counts: np.ndarray      # integer step function, nondecreasing
    reference: np.ndarray   # k * mu0([0, x]), continuous nondecreasing
    psi: np.ndarray         # counts - reference

    def __post_init__(self) -> None:
        for arr in (self.grid, self.counts, self.reference, self.psi):
            arr.setflags(write=False)


def counting_triple(spec: EdgeScaledSpectrum, grid) -> CountingTriple:
    """Evaluate the empirical count of bs, the reference count, and their
    difference on a sorted grid."""
    grid = np.ascontiguousarray(grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    bs_sorted = np.sort(spec.bs)
    counts = np.searchsorted(bs_sorted, grid, side="right").astype(np.int64)
    ref = ReferenceDensity(spec.n, spec.k)
    reference = np.array([spec.k * ref.mass(0.0, x) if x >= 0 else 0.0 for x in grid])
    return CountingTriple(grid=grid, counts=counts, reference=reference,
                          psi=counts - reference)


@lru_cache(maxsize=32)
def _reference_cells(n: int, k: int, R: float, n_cells: int) -> tuple:
    ref = ReferenceDensity(n, k)
    hi = min(R, ref.support_hi)
    breaks = np.linspace(0.0, hi, n_cells + 1)
    masses = np.array([ref.mass(a, b) for a, b in zip(breaks[:-1], breaks[1:])])
    values = masses / np.diff(breaks)
    breaks.setflags(write=False)
    values.setflags(write=False)
    return breaks, values


def edge_centered_measure(spec: EdgeScaledSpectrum, R: float,
                          n_cells: int | None = None) -> SignedMeasure:
    """Empirical bs measure (atoms 1/k) minus the reference density, both
    restricted to [-R, R]."""
    if R < 10:
        raise ValueError("R must be at least 10")
    pts = spec.bs[(spec.bs >= -R) & (spec.bs <= R)]
    if n_cells is None:
        hi = min(R, ReferenceDensity(spec.n, spec.k).support_hi)
        n_cells = max(8, int(round(32 * hi)))
    breaks, values = _reference_cells(spec.n, spec.k, float(R), n_cells)
    return SignedMeasure(pts, np.full(pts.size, 1.0 / spec.k), breaks, -values,
                         (-R, R))
