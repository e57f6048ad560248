"""Signed measures on the line: atoms plus piecewise-constant density.

This is the carrier type for every empirical and reference measure in the
package.  Densities are stored as exact cell masses (piecewise-constant
values on a breakpoint grid), with sqrt-type reference cells integrated in
closed form so admissibility checks involve no quadrature error.  The
bounded-Lipschitz (Kantorovich-Rubinshtein) distance is computed as a
finite linear program over witness potentials on a uniform node grid; the
returned witness certifies the value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import brentq, linprog

__all__ = [
    "SignedMeasure",
    "KrResult",
    "reference_measure",
    "reference_cell_mass",
    "restrict",
    "restrict_complement",
    "centered_empirical_measure",
    "is_admissible",
    "kr_distance",
    "smooth_atoms",
    "quantile_grid",
]

_EMPTY = np.zeros(0)


def _asarray(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SignedMeasure:
    """Finite signed measure: atoms + piecewise-constant density on [lo, hi].

    Canonical form (enforced on construction): atoms sorted with equal
    locations merged and zero masses pruned; zero-valued cells trimmed from
    both ends of the density grid.
    """

    atom_locs: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    atom_masses: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    breaks: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    values: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    support: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        locs, masses = _asarray(self.atom_locs), _asarray(self.atom_masses)
        if locs.shape != masses.shape:
            raise ValueError("atom locations and masses must align")
        if locs.size:
            order = np.argsort(locs, kind="stable")
            locs, masses = locs[order], masses[order]
            uniq, inv = np.unique(locs, return_inverse=True)
            merged = np.zeros_like(uniq)
            np.add.at(merged, inv, masses)
            keep = merged != 0.0
            locs, masses = uniq[keep], merged[keep]
        breaks, values = _asarray(self.breaks), _asarray(self.values)
        if breaks.size:
            if breaks.size != values.size + 1:
                raise ValueError("need len(breaks) == len(values) + 1")
            if np.any(np.diff(breaks) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
            nz = np.nonzero(values)[0]
            if nz.size == 0:
                breaks, values = _EMPTY.copy(), _EMPTY.copy()
            else:
                lo_i, hi_i = nz[0], nz[-1] + 1
                breaks, values = breaks[lo_i:hi_i + 1], values[lo_i:hi_i]
        else:
            values = _EMPTY.copy()
        if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(masses))
                and np.all(np.isfinite(breaks)) and np.all(np.isfinite(values))):
            raise ValueError("measure data must be finite")
        sup = self.support
        if sup is None:
            pieces = []
            if locs.size:
                pieces += [locs[0], locs[-1]]
            if breaks.size:
                pieces += [breaks[0], breaks[-1]]
            sup = (min(pieces), max(pieces)) if pieces else (0.0, 0.0)
        sup = (float(sup[0]), float(sup[1]))
        if locs.size and (locs[0] < sup[0] - 1e-12 or locs[-1] > sup[1] + 1e-12):
            raise ValueError("atoms must lie within the support interval")
        for name, arr in (("atom_locs", locs), ("atom_masses", masses),
                          ("breaks", breaks), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "support", sup)

    # -- queries ---------------------------------------------------------

    @property
    def cell_masses(self) -> np.ndarray:
        if not self.breaks.size:
            return _EMPTY
        return self.values * np.diff(self.breaks)

    def total_mass(self) -> float:
        return float(self.atom_masses.sum() + self.cell_masses.sum())

    def total_variation(self) -> float:
        return float(np.abs(self.atom_masses).sum() + np.abs(self.cell_masses).sum())

    def is_zero(self) -> bool:
        return self.atom_masses.size == 0 and self.values.size == 0

    # -- algebra ---------------------------------------------------------

    def scaled(self, c: float) -> "SignedMeasure":
        return SignedMeasure(self.atom_locs, c * self.atom_masses,
                             self.breaks, c * self.values, self.support)

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        locs = np.concatenate([self.atom_locs, other.atom_locs])
        masses = np.concatenate([self.atom_masses, other.atom_masses])
        if self.breaks.size and other.breaks.size:
            grid = np.unique(np.concatenate([self.breaks, other.breaks]))
            mid = 0.5 * (grid[:-1] + grid[1:])
            vals = self.density_at(mid) + other.density_at(mid)
            breaks, values = grid, vals
        elif self.breaks.size:
            breaks, values = self.breaks, self.values
        else:
            breaks, values = other.breaks, other.values
        lo = min(self.support[0], other.support[0])
        hi = max(self.support[1], other.support[1])
        return SignedMeasure(locs, masses, breaks, values, (lo, hi))

    def __neg__(self) -> "SignedMeasure":
        return self.scaled(-1.0)

    def density_at(self, x) -> np.ndarray:
        """Piecewise-constant density value (atoms excluded)."""
        x = np.asarray(x, dtype=float)
        if not self.breaks.size:
            return np.zeros_like(x)
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.values.size) & (x <= self.breaks[-1])
        out = np.zeros_like(x)
        out[inside] = self.values[idx[inside]]
        return out

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        return {
            "support": [self.support[0], self.support[1]],
            "atoms": [{"x": float(x), "mass": float(m)}
                      for x, m in zip(self.atom_locs, self.atom_masses)],
            "density": {
                "breaks": [float(b) for b in self.breaks],
                "values": [float(v) for v in self.values],
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SignedMeasure":
        atoms = obj.get("atoms", [])
        density = obj.get("density", {})
        return cls(
            atom_locs=np.array([a["x"] for a in atoms], dtype=float),
            atom_masses=np.array([a["mass"] for a in atoms], dtype=float),
            breaks=np.array(density.get("breaks", []), dtype=float),
            values=np.array(density.get("values", []), dtype=float),
            support=tuple(obj["support"]) if obj.get("support") else None,
        )


def reference_cell_mass(a: float, b: float) -> float:
    """Exact mass of the sqrt(x)/pi reference density on [a, b]."""
    a2, b2 = max(a, 0.0), max(b, 0.0)
    return (2.0 / (3.0 * math.pi)) * (b2 ** 1.5 - a2 ** 1.5)


def reference_measure(R: float, n_cells: int | None = None) -> SignedMeasure:
    """The sqrt(x)/pi reference density restricted to [-R, R].

    Cells carry their analytic mass, so sums over cells reproduce the
    (2/(3 pi)) R^{3/2} total exactly up to float rounding.
    """
    if R < 0:
        raise ValueError("R must be nonnegative")
    if R == 0:
        return SignedMeasure(support=(0.0, 0.0))
    if n_cells is None:
        n_cells = max(8, int(round(32 * R)))
    breaks = np.linspace(0.0, R, n_cells + 1)
    masses = (2.0 / (3.0 * math.pi)) * np.diff(breaks ** 1.5)
    values = masses / np.diff(breaks)
    return SignedMeasure(breaks=breaks, values=values, support=(-R, R))


def restrict(mu: SignedMeasure, R: float) -> SignedMeasure:
    """Restriction to the closed interval [-R, R]; boundary atoms survive."""
    keep = (mu.atom_locs >= -R) & (mu.atom_locs <= R)
    locs, masses = mu.atom_locs[keep], mu.atom_masses[keep]
    breaks, values = mu.breaks, mu.values
    if breaks.size:
        pts = np.unique(np.concatenate([breaks, [-R, R]]))
        pts = pts[(pts >= breaks[0]) & (pts <= breaks[-1])]
        mid = 0.5 * (pts[:-1] + pts[1:])
        vals = mu.density_at(mid)
        inside = (pts[:-1] >= -R) & (pts[1:] <= R)
        vals = np.where(inside, vals, 0.0)
        breaks, values = pts, vals
    return SignedMeasure(locs, masses, breaks, values, (-R, R))


def restrict_complement(mu: SignedMeasure, R: float) -> SignedMeasure:
    """Everything ``restrict`` drops; restrict + complement carries mu's mass."""
    keep = (mu.atom_locs < -R) | (mu.atom_locs > R)
    locs, masses = mu.atom_locs[keep], mu.atom_masses[keep]
    breaks, values = mu.breaks, mu.values
    if breaks.size:
        pts = np.unique(np.concatenate([breaks, [-R, R]]))
        pts = pts[(pts >= breaks[0]) & (pts <= breaks[-1])]
        mid = 0.5 * (pts[:-1] + pts[1:])
        vals = mu.density_at(mid)
        inside = (pts[:-1] >= -R) & (pts[1:] <= R)
        vals = np.where(inside, 0.0, vals)
        breaks, values = pts, vals
    return SignedMeasure(locs, masses, breaks, values, mu.support)


def centered_empirical_measure(eigs, k: int, R: float,
                               n_cells: int | None = None) -> SignedMeasure:
    """Scaled empirical measure minus the reference: atoms of mass 1/k at
    k^{-2/3} * eig within [-R, R], minus the restricted reference density."""
    if R < 10:
        raise ValueError("R must be at least 10")
    if k < 1:
        raise ValueError("k must be a positive integer")
    eigs = _asarray(eigs)
    if eigs.size > 1 and np.any(np.diff(eigs) <= 0):
        raise ValueError("eigenvalues must be increasing")
    pts = eigs * k ** (-2.0 / 3.0)
    pts = pts[(pts >= -R) & (pts <= R)]
    ref = reference_measure(R, n_cells)
    return SignedMeasure(pts, np.full(pts.size, 1.0 / k),
                         ref.breaks, -ref.values, (-R, R))


def is_admissible(mu: SignedMeasure, zero_mass: bool = False,
                  tol: float = 1e-10) -> bool:
    """Whether mu + reference is a positive measure (and optionally mass 0).

    Cellwise check: every atom mass nonnegative, and every density cell's
    mass at least minus the reference's exact mass on that cell.
    """
    if mu.atom_masses.size and np.min(mu.atom_masses) < -tol:
        return False
    if mu.breaks.size:
        a, b = mu.breaks[:-1], mu.breaks[1:]
        ref_mass = (2.0 / (3.0 * math.pi)) * (np.maximum(b, 0.0) ** 1.5
                                              - np.maximum(a, 0.0) ** 1.5)
        if np.min(mu.cell_masses + ref_mass) < -tol:
            return False
    if zero_mass and abs(mu.total_mass()) > 1e-10:
        return False
    return True


@dataclass(frozen=True)
class KrResult:
    """Bounded-Lipschitz distance value with its certifying witness."""

    value: float
    witness: np.ndarray
    nodes: np.ndarray
    grid_step: float

    def __post_init__(self) -> None:
        self.witness.setflags(write=False)
        self.nodes.setflags(write=False)


def node_weights(mu: SignedMeasure, nodes: np.ndarray) -> np.ndarray:
    """Lump mu onto the node grid through the piecewise-linear hat basis.

    For any witness that is piecewise linear between nodes, the integral of
    the witness against mu equals the dot product of the node values with
    these weights: atoms evaluate the hats, density cells integrate them.
    """
    h = nodes[1] - nodes[0]
    lo, hi = nodes[0], nodes[-1]
    w = np.zeros(nodes.size)
    if mu.atom_locs.size:
        x = np.clip(mu.atom_locs, lo, hi)
        pos = (x - lo) / h
        j = np.minimum(pos.astype(int), nodes.size - 2)
        frac = pos - j
        np.add.at(w, j, mu.atom_masses * (1.0 - frac))
        np.add.at(w, j + 1, mu.atom_masses * frac)
    for a, b, v in zip(mu.breaks[:-1], mu.breaks[1:], mu.values):
        if v == 0.0:
            continue
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            continue
        j0 = min(int((a - lo) / h), nodes.size - 2)
        j1 = min(int((b - lo) / h - 1e-12), nodes.size - 2)
        for j in range(j0, j1 + 1):
            s, t = max(a, nodes[j]), min(b, nodes[j + 1])
            if t <= s:
                continue
            # integral of the two hats over [s, t]
            mid = 0.5 * (s + t)
            length = t - s
            w[j] += v * length * (nodes[j + 1] - mid) / h
            w[j + 1] += v * length * (mid - nodes[j]) / h
    return w


def kr_distance(a: SignedMeasure, b: SignedMeasure, R: float,
                grid_step: float) -> KrResult:
    """Kantorovich-Rubinshtein distance on [-R, R] by witness LP.

    Maximizes the integral of f against (a - b) over node potentials with
    |f| <= 1 and |f_{j+1} - f_j| <= node spacing.  Exact for measures whose
    atoms sit on the nodes; otherwise accurate to O(grid_step * TV).
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if R <= 0:
        raise ValueError("R must be positive")
    m = max(1, math.ceil(2.0 * R / grid_step - 1e-9))
    nodes = np.linspace(-R, R, m + 1)
    h = nodes[1] - nodes[0]
    w = node_weights(restrict(a, R), nodes) - node_weights(restrict(b, R), nodes)
    if not np.any(w):
        return KrResult(0.0, np.zeros(nodes.size), nodes, h)
    n = nodes.size
    D = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1],
                     shape=(n - 1, n), format="csr")
    A = sparse.vstack([D, -D], format="csr")
    rhs = np.full(2 * (n - 1), h)
    res = linprog(-w, A_ub=A, b_ub=rhs, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"witness LP failed: {res.message}")
    f = res.x
    # f = 0 is feasible, so the max is nonnegative; clamp solver slack
    return KrResult(max(float(w @ f), 0.0), f, nodes, h)


def smooth_atoms(points, half_width: float, mass_each: float) -> SignedMeasure:
    """Replace each point by a uniform box of total mass ``mass_each`` on
    [x - h, x + h]; overlapping boxes stack."""
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    points = _asarray(points)
    if points.size == 0:
        return SignedMeasure()
    edges = np.unique(np.concatenate([points - half_width, points + half_width]))
    level = mass_each / (2.0 * half_width)
    vals = np.zeros(edges.size - 1)
    starts = np.searchsorted(edges, points - half_width)
    stops = np.searchsorted(edges, points + half_width)
    bump = np.zeros(edges.size)
    np.add.at(bump, starts, level)
    np.add.at(bump, stops, -level)
    vals = np.cumsum(bump[:-1])
    return SignedMeasure(breaks=edges, values=vals,
                         support=(float(edges[0]), float(edges[-1])))


def quantile_grid(n0: int, r0: float, ref, r_top: float) -> np.ndarray:
    """Two-regime quantile grid of the finite-n reference density.

    Below r0 the n0 - m0 inner points split the reference mass of [0, r0]
    evenly; above r0 the m0 outer points step by exactly 1/k of reference
    mass, the first sitting at r0 itself.  Returns the n0 + 2 points
    rho_0 = 0 < rho_1 < ... < rho_{n0} <= rho_{n0+1} = r_top.
    """
    if not 1.0 <= r0 <= 10.0:
        raise ValueError("r0 must lie in [1, 10]")
    if r_top <= r0:
        raise ValueError("r_top must exceed r0")
    k = ref.k
    top_mass = k * ref.mass(r0, r_top)
    m0 = int(math.floor(top_mass + 1e-12)) + 1
    m0p = n0 - m0
    if m0p < 0:
        raise ValueError(
            f"infeasible grid: k*mass([r0, r_top]) = {top_mass:.6g} forces "
            f"{m0} outer points but only n0 = {n0} requested"
        )
    inner_total = ref.mass(0.0, r0)
    rho = np.empty(n0 + 2)
    rho[0] = 0.0
    for i in range(1, m0p + 1):
        target = (i / (m0p + 1)) * inner_total
        rho[i] = brentq(lambda x: ref.mass(0.0, x) - target, 0.0, r0, xtol=1e-13)
    rho[m0p + 1] = r0
    for i in range(2, m0 + 1):
        target = (i - 1) / k
        rho[m0p + i] = brentq(lambda x: ref.mass(r0, x) - target, r0, r_top,
                              xtol=1e-13)
    rho[n0 + 1] = r_top
    if np.any(np.diff(rho[:n0 + 1]) <= 0):
        raise RuntimeError("quantile grid failed to be strictly increasing")
    return rho
