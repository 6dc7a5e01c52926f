"""Quantities of interest evaluated on conformers.

Geometric quantities (solvent-accessible area by sphere-point counting,
enclosed volume by voxel counting), pairwise energies (12-6 Lennard-Jones,
Coulomb with constant or distance-dependent dielectric), implicit-solvent
polarization energy from effective Born radii, binding-induced deltas
f(A+B) - f(A) - f(B), and per-surface-point deviation statistics over an
ensemble.

All evaluators are pure and deterministic; pairwise sums use a fixed order
so results do not depend on how work is scheduled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from moluq.molio import Structure, bonded_exclusions
from moluq.conformers import Conformer, Ensemble

COULOMB_CONSTANT = 332.0636  # kcal mol^-1 A e^-2


class QOIKind(str, enum.Enum):
    AREA = "area"
    VOLUME = "volume"
    LJ = "lj"
    COULOMB = "coulomb"
    GB = "gb"
    DELTA_AREA = "delta_area"
    DELTA_VOLUME = "delta_volume"
    DELTA_LJ = "delta_lj"
    DELTA_COULOMB = "delta_coulomb"
    DELTA_GB = "delta_gb"

    @property
    def is_delta(self) -> bool:
        return self.value.startswith("delta_")

    @property
    def base(self) -> "QOIKind":
        return QOIKind(self.value.removeprefix("delta_"))


@dataclass(frozen=True)
class CoulombModel:
    """Dielectric model: constant eps0 or distance-dependent eps(r) = k*r."""

    mode: str = "constant"
    value: float = 1.0
    coulomb_constant: float = COULOMB_CONSTANT

    def __post_init__(self):
        if self.mode not in ("constant", "distance_dependent"):
            raise ValueError(f"unknown dielectric mode {self.mode!r}")
        if self.value <= 0:
            raise ValueError("dielectric parameter must be positive")

    def epsilon(self, r: np.ndarray) -> np.ndarray:
        if self.mode == "constant":
            return np.full_like(np.asarray(r, dtype=float), self.value)
        return self.value * np.asarray(r, dtype=float)


@dataclass(frozen=True)
class QOIConfig:
    """Shared evaluation parameters for the scalar QOIs."""

    probe: float = 1.4
    n_points: int = 960
    spacing: float = 0.5
    coulomb: CoulombModel = CoulombModel()
    solvent_dielectric: float = 80.0


@dataclass(frozen=True)
class AtomSet:
    """Flat parameter arrays for one group of atoms (a chain, a ligand, ...)."""

    positions: np.ndarray
    radii: np.ndarray
    charges: np.ndarray
    lj_a: np.ndarray
    lj_b: np.ndarray
    serials: tuple[int, ...]
    exclusions: frozenset[tuple[int, int]]

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def from_structure(cls, s: Structure, positions: np.ndarray | None = None) -> "AtomSet":
        pos = s.positions() if positions is None else np.asarray(positions, dtype=float)
        if pos.shape != (s.n_atoms, 3):
            raise ValueError("positions shape does not match structure")
        return cls(
            positions=pos,
            radii=np.array([a.vdw_radius for a in s.atoms]),
            charges=np.array([a.charge for a in s.atoms]),
            lj_a=np.array([a.lj_a for a in s.atoms]),
            lj_b=np.array([a.lj_b for a in s.atoms]),
            serials=tuple(a.serial for a in s.atoms),
            exclusions=bonded_exclusions(s),
        )

    def union(self, other: "AtomSet") -> "AtomSet":
        overlap = set(self.serials) & set(other.serials)
        if overlap:
            raise ValueError(f"atom serials overlap between groups: {sorted(overlap)[:5]}")
        off = self.n
        shifted = frozenset((i + off, j + off) for i, j in other.exclusions)
        return AtomSet(
            positions=np.vstack([self.positions, other.positions]),
            radii=np.concatenate([self.radii, other.radii]),
            charges=np.concatenate([self.charges, other.charges]),
            lj_a=np.concatenate([self.lj_a, other.lj_a]),
            lj_b=np.concatenate([self.lj_b, other.lj_b]),
            serials=self.serials + other.serials,
            exclusions=self.exclusions | shifted,
        )


def _pair_arrays(n: int, exclusions, cross=None):
    """Index arrays of the unordered pairs an intra/cross sum runs over."""
    if cross is not None:
        ga, gb = (np.asarray(g, dtype=int) for g in cross)
        ii = np.repeat(ga, len(gb))
        jj = np.tile(gb, len(ga))
        return ii, jj
    ii, jj = np.triu_indices(n, k=1)
    if exclusions:
        keep = np.array([(int(i), int(j)) not in exclusions for i, j in zip(ii, jj)])
        ii, jj = ii[keep], jj[keep]
    return ii, jj


def _pair_distances(positions, ii, jj, context: str) -> np.ndarray:
    d = np.sqrt(((positions[ii] - positions[jj]) ** 2).sum(axis=1))
    if np.any(d == 0.0):
        bad = int(np.argmax(d == 0.0))
        raise ValueError(
            f"{context}: coincident atoms at pair ({int(ii[bad])}, {int(jj[bad])})"
        )
    return d


def combine_lj(a_i, b_i, a_j, b_j) -> tuple[np.ndarray, np.ndarray]:
    """Pair 12-6 coefficients from per-atom ones.

    Per-atom coefficients encode a well depth eps = b^2/(4a) at distance
    rmin = (2a/b)^(1/6); pairs combine with geometric-mean depth and
    arithmetic-mean minimum distance.
    """
    a_i, b_i, a_j, b_j = (np.asarray(x, dtype=float) for x in (a_i, b_i, a_j, b_j))
    eps_i = np.divide(b_i**2, 4.0 * a_i, out=np.zeros_like(b_i), where=a_i > 0)
    eps_j = np.divide(b_j**2, 4.0 * a_j, out=np.zeros_like(b_j), where=a_j > 0)
    rmin_i = np.where(b_i > 0, np.divide(2.0 * a_i, b_i, out=np.ones_like(a_i),
                                         where=b_i > 0) ** (1.0 / 6.0), 0.0)
    rmin_j = np.where(b_j > 0, np.divide(2.0 * a_j, b_j, out=np.ones_like(a_j),
                                         where=b_j > 0) ** (1.0 / 6.0), 0.0)
    eps = np.sqrt(eps_i * eps_j)
    rmin = 0.5 * (rmin_i + rmin_j)
    return eps * rmin**12, 2.0 * eps * rmin**6


def lj_energy(positions, lj_a, lj_b, exclusions=frozenset(), cross=None) -> float:
    """12-6 energy sum a_ij/r^12 - b_ij/r^6 over unordered pairs (kcal/mol).

    ``cross=(idx_a, idx_b)`` restricts to inter-group pairs; otherwise all
    intra pairs except the bonded ``exclusions`` contribute.
    """
    positions = np.asarray(positions, dtype=float)
    ii, jj = _pair_arrays(positions.shape[0], exclusions, cross)
    if len(ii) == 0:
        return 0.0
    r = _pair_distances(positions, ii, jj, "lj_energy")
    a_ij, b_ij = combine_lj(np.asarray(lj_a)[ii], np.asarray(lj_b)[ii],
                            np.asarray(lj_a)[jj], np.asarray(lj_b)[jj])
    r6 = r**6
    return float(np.sum(a_ij / r6**2 - b_ij / r6))


def coulomb_energy(positions, charges, model: CoulombModel = CoulombModel(),
                   exclusions=frozenset(), cross=None) -> float:
    """Pairwise electrostatic sum C q_i q_j / (eps(r) r) (kcal/mol)."""
    positions = np.asarray(positions, dtype=float)
    charges = np.asarray(charges, dtype=float)
    ii, jj = _pair_arrays(positions.shape[0], exclusions, cross)
    if len(ii) == 0:
        return 0.0
    r = _pair_distances(positions, ii, jj, "coulomb_energy")
    return float(np.sum(model.coulomb_constant * charges[ii] * charges[jj]
                        / (model.epsilon(r) * r)))


def born_radii(positions, vdw_radii) -> np.ndarray:
    """Effective Born radii by pairwise volume descreening (Angstrom).

    1/R_i = 1/rho_i - sum_j V_j / (4 pi r_ij^4) with V_j the sphere volume of
    atom j, clamped so R_i >= rho_i / 2 (deep burial would otherwise drive
    the inverse radius negative).
    """
    positions = np.asarray(positions, dtype=float)
    rho = np.asarray(vdw_radii, dtype=float)
    n = positions.shape[0]
    if n == 0:
        return np.zeros(0)
    if np.any(rho <= 0):
        raise ValueError("van der Waals radii must be positive")
    inv = 1.0 / rho
    if n > 1:
        diff = positions[:, None, :] - positions[None, :, :]
        r2 = (diff**2).sum(axis=2)
        off = ~np.eye(n, dtype=bool)
        if np.any(r2[off] == 0.0):
            i, j = divmod(int(np.argmax((r2 == 0.0) & off)), n)
            raise ValueError(f"born_radii: coincident atoms at pair ({i}, {j})")
        descreen = np.where(off, (rho[None, :] ** 3) / (3.0 * np.where(off, r2**2, 1.0)), 0.0)
        inv = inv - descreen.sum(axis=1)
    raw = np.where(inv != 0.0, 1.0 / np.where(inv != 0.0, inv, 1.0), np.inf)
    return np.maximum(raw, rho / 2.0)


def gb_polarization(positions, charges, radii_born, solvent_dielectric: float = 80.0) -> float:
    """Polarization energy of the analytic implicit-solvent form (kcal/mol).

    -(tau/2) C sum_{i,j} q_i q_j / sqrt(r^2 + R_i R_j exp(-r^2/(4 R_i R_j)))
    over all ordered pairs including i = j; tau = 1 - 1/eps.
    """
    positions = np.asarray(positions, dtype=float)
    charges = np.asarray(charges, dtype=float)
    rb = np.asarray(radii_born, dtype=float)
    if positions.shape[0] == 0:
        return 0.0
    if np.any(rb <= 0):
        raise ValueError("Born radii must be positive")
    tau = 1.0 - 1.0 / solvent_dielectric
    diff = positions[:, None, :] - positions[None, :, :]
    r2 = (diff**2).sum(axis=2)
    rr = rb[:, None] * rb[None, :]
    denom = np.sqrt(r2 + rr * np.exp(-r2 / (4.0 * rr)))
    qq = charges[:, None] * charges[None, :]
    return float(-(tau / 2.0) * COULOMB_CONSTANT * np.sum(qq / denom))


def sphere_points(n: int) -> np.ndarray:
    """Deterministic quasi-uniform points on the unit sphere (golden spiral)."""
    if n < 1:
        raise ValueError("need at least one sphere point")
    k = np.arange(n)
    z = 1.0 - 2.0 * (k + 0.5) / n
    golden = math.pi * (3.0 - math.sqrt(5.0))
    theta = golden * k
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])


def _exposure_mask(positions, radii, probe, n_points):
    """Boolean (n, n_points) exposure of each atom's inflated-sphere points."""
    positions = np.asarray(positions, dtype=float)
    radii = np.asarray(radii, dtype=float)
    n = positions.shape[0]
    unit = sphere_points(n_points)
    inflated = radii + probe
    masks = np.ones((n, n_points), dtype=bool)
    if n > 1:
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        for i in range(n):
            nbr = np.nonzero((dist[i] < inflated[i] + inflated) & (np.arange(n) != i))[0]
            if nbr.size == 0:
                continue
            pts = positions[i] + inflated[i] * unit
            d2 = ((pts[:, None, :] - positions[nbr][None, :, :]) ** 2).sum(axis=2)
            masks[i] = ~np.any(d2 < inflated[nbr][None, :] ** 2, axis=1)
    return masks, inflated, unit


def sasa(positions, radii, probe: float = 1.4, n_points: int = 960) -> tuple[float, np.ndarray]:
    """Solvent-accessible surface area by sphere-point counting.

    Each atom's sphere of radius r + probe carries ``n_points`` quasi-uniform
    points; the exposed fraction times 4 pi (r+probe)^2 is its area.  Returns
    (total, per-atom areas) in Angstrom^2.
    """
    if probe < 0:
        raise ValueError("probe radius must be >= 0")
    if n_points < 32:
        raise ValueError("n_points must be >= 32")
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] == 0:
        return 0.0, np.zeros(0)
    masks, inflated, _unit = _exposure_mask(positions, radii, probe, n_points)
    frac = masks.mean(axis=1)
    per_atom = frac * 4.0 * math.pi * inflated**2
    return float(per_atom.sum()), per_atom


def sasa_point_cloud(positions, radii, probe: float = 1.4, n_points: int = 960) -> np.ndarray:
    """Coordinates of all exposed surface points, concatenated across atoms."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] == 0:
        return np.zeros((0, 3))
    masks, inflated, unit = _exposure_mask(positions, radii, probe, n_points)
    clouds = []
    for i in range(positions.shape[0]):
        if masks[i].any():
            clouds.append(positions[i] + inflated[i] * unit[masks[i]])
    if not clouds:
        return np.zeros((0, 3))
    return np.vstack(clouds)


def volume(positions, radii, spacing: float) -> float:
    """Occupied volume by voxel-center counting (Angstrom^3).

    The grid covers the bounding box padded by max radius + spacing; a voxel
    counts when its center lies inside any atom sphere.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] == 0:
        return 0.0
    radii = np.asarray(radii, dtype=float)
    pad = float(radii.max()) + spacing
    lo = positions.min(axis=0) - pad
    hi = positions.max(axis=0) + pad
    dims = np.maximum(np.ceil((hi - lo) / spacing).astype(int), 1)
    occupied = np.zeros(dims, dtype=bool)
    for p, r in zip(positions, radii):
        i_lo = np.maximum(np.floor((p - r - lo) / spacing - 0.5).astype(int), 0)
        i_hi = np.minimum(np.ceil((p + r - lo) / spacing + 0.5).astype(int), dims - 1)
        ranges = [np.arange(i_lo[ax], i_hi[ax] + 1) for ax in range(3)]
        centers = [lo[ax] + (ranges[ax] + 0.5) * spacing - p[ax] for ax in range(3)]
        d2 = (
            centers[0][:, None, None] ** 2
            + centers[1][None, :, None] ** 2
            + centers[2][None, None, :] ** 2
        )
        sub = occupied[i_lo[0]:i_hi[0] + 1, i_lo[1]:i_hi[1] + 1, i_lo[2]:i_hi[2] + 1]
        occupied[i_lo[0]:i_hi[0] + 1, i_lo[1]:i_hi[1] + 1, i_lo[2]:i_hi[2] + 1] = (
            sub | (d2 <= r * r)
        )
    return float(occupied.sum()) * spacing**3


def evaluate_qoi(kind: QOIKind, a: AtomSet, b: AtomSet | None = None,
                 config: QOIConfig = QOIConfig()) -> float:
    """Evaluate one scalar QOI on a group (or a pair of groups for deltas)."""
    kind = QOIKind(kind)
    if kind.is_delta:
        if b is None:
            raise ValueError(f"{kind.value} requires two atom groups")
        return delta_qoi(kind.base, a, b, config)
    if kind is QOIKind.AREA:
        return sasa(a.positions, a.radii, config.probe, config.n_points)[0]
    if kind is QOIKind.VOLUME:
        return volume(a.positions, a.radii, config.spacing)
    if kind is QOIKind.LJ:
        return lj_energy(a.positions, a.lj_a, a.lj_b, exclusions=a.exclusions)
    if kind is QOIKind.COULOMB:
        return coulomb_energy(a.positions, a.charges, config.coulomb,
                              exclusions=a.exclusions)
    if kind is QOIKind.GB:
        rb = born_radii(a.positions, a.radii)
        return gb_polarization(a.positions, a.charges, rb, config.solvent_dielectric)
    raise ValueError(f"unhandled QOI kind {kind}")


def delta_qoi(kind: QOIKind, a: AtomSet, b: AtomSet, config: QOIConfig = QOIConfig()) -> float:
    """Binding-induced change f(A+B) - f(A) - f(B) of a non-delta QOI.

    For pairwise-additive energies this equals the cross-pair interaction sum
    exactly; for area/volume/GB it captures occlusion and descreening.
    """
    kind = QOIKind(kind)
    if kind.is_delta:
        raise ValueError("delta_qoi expects a base (non-delta) QOI kind")
    if b.n == 0:
        return 0.0
    if a.n == 0:
        return 0.0
    both = a.union(b)
    return (evaluate_qoi(kind, both, config=config)
            - evaluate_qoi(kind, a, config=config)
            - evaluate_qoi(kind, b, config=config))


def surface_deviation(reference_points, e: Ensemble, probe: float = 1.4,
                      n_points: int = 960) -> np.ndarray:
    """Mean distance from each reference surface point to each member's surface.

    For every accepted conformer the member surface is its exposed point
    cloud; the statistic per reference point is the average nearest-point
    distance across members.  A member with an empty surface raises.
    """
    reference_points = np.asarray(reference_points, dtype=float)
    accepted = e.accepted()
    if not accepted:
        raise ValueError("ensemble has no accepted conformers")
    radii = np.array([atom.vdw_radius for atom in e.source.atoms])
    total = np.zeros(reference_points.shape[0])
    for c in accepted:
        cloud = sasa_point_cloud(c.positions, radii, probe, n_points)
        if cloud.shape[0] == 0:
            raise ValueError(f"conformer {c.sample_index} has an empty surface")
        dist, _ = cKDTree(cloud).query(reference_points)
        total += dist
    return total / len(accepted)
