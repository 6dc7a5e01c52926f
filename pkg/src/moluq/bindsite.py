"""Probabilistic binding-site maps from ranked docked poses.

A receptor atom's binding-site probability is the fraction of top-ranked
poses in which some ligand atom sits within the contact cutoff.  Maps can be
aggregated across a ligand conformer ensemble, scored against a known site
(inhibitor overlap), and used to score individual poses by how much of the
probable site they touch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from moluq.molio import Atom, Structure
from moluq.conformers import Conformer, Ensemble


@dataclass(frozen=True)
class Pose:
    """A rigid placement of the ligand: y -> rotation @ y + translation."""

    rotation: np.ndarray
    translation: np.ndarray
    rank: int = 0
    source_conformer: int | None = None

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        tr = np.asarray(self.translation, dtype=float)
        if rot.shape != (3, 3) or tr.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation must be orthonormal to 1e-9")
        if np.linalg.det(rot) < 0:
            raise ValueError("rotation must be proper (det +1)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls, rank: int = 0) -> "Pose":
        return cls(rotation=np.eye(3), translation=np.zeros(3), rank=rank)

    def apply(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(positions, dtype=float) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class ContactModel:
    """Distance cutoff (Angstrom, inclusive) defining atom-ligand contact."""

    cutoff: float = 5.0

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("contact cutoff must be positive")


@dataclass(frozen=True)
class BindingSiteMap:
    """Per-receptor-atom contact probabilities with provenance metadata."""

    probabilities: np.ndarray
    serials: tuple[int, ...]
    cutoff: float
    k: int
    n_configs: int = 1

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if p.shape != (len(self.serials),):
            raise ValueError("one probability per receptor atom required")
        object.__setattr__(self, "probabilities", p)


def contact(a: Atom, ligand: Conformer, pose: Pose, m: ContactModel = ContactModel()) -> int:
    """1 when any posed ligand atom lies within the cutoff of atom ``a``."""
    placed = pose.apply(ligand.positions)
    d = np.sqrt(((placed - a.position) ** 2).sum(axis=1))
    return int(d.min() <= m.cutoff) if d.size else 0


def _contact_rows(receptor_positions, ligand_positions, pose, cutoff) -> np.ndarray:
    placed = pose.apply(ligand_positions)
    d2 = ((receptor_positions[:, None, :] - placed[None, :, :]) ** 2).sum(axis=2)
    return (d2.min(axis=1) <= cutoff * cutoff).astype(float)


def binding_site_prob(A: Structure, B: Conformer, poses,
                      m: ContactModel = ContactModel()) -> BindingSiteMap:
    """Fraction of poses contacting each receptor atom (single ligand config)."""
    poses = list(poses)
    if not poses:
        raise ValueError("need at least one pose")
    rec = A.positions()
    hits = np.zeros(A.n_atoms)
    for pose in poses:
        hits += _contact_rows(rec, B.positions, pose, m.cutoff)
    return BindingSiteMap(probabilities=hits / len(poses),
                          serials=tuple(a.serial for a in A.atoms),
                          cutoff=m.cutoff, k=len(poses), n_configs=1)


def binding_site_prob_multi(A: Structure, ensemble_b: Ensemble, poses_per_conformer,
                            m: ContactModel = ContactModel()) -> BindingSiteMap:
    """Contact probability averaged over N ligand configurations x k poses each.

    ``poses_per_conformer`` pairs positionally with ``ensemble_b.conformers``
    and every conformer must carry the same number of poses.
    """
    confs = ensemble_b.conformers
    pose_lists = [list(p) for p in poses_per_conformer]
    if len(pose_lists) != len(confs):
        raise ValueError("need one pose list per conformer")
    if not pose_lists:
        raise ValueError("need at least one conformer")
    k = len(pose_lists[0])
    if k == 0 or any(len(p) != k for p in pose_lists):
        raise ValueError("every conformer must have the same positive pose count")
    rec = A.positions()
    hits = np.zeros(A.n_atoms)
    for conf, poses in zip(confs, pose_lists):
        for pose in poses:
            hits += _contact_rows(rec, conf.positions, pose, m.cutoff)
    return BindingSiteMap(probabilities=hits / (k * len(confs)),
                          serials=tuple(a.serial for a in A.atoms),
                          cutoff=m.cutoff, k=k, n_configs=len(confs))


def inhibit_score(known_site, candidate: BindingSiteMap) -> float:
    """Expected blocking overlap: sum over atoms of known(a) * p_candidate(a).

    ``known_site`` is a 0/1 vector over the same atom set (a k = 1 map's
    probabilities work directly).
    """
    known = np.asarray(known_site, dtype=float)
    if known.shape != candidate.probabilities.shape:
        raise ValueError("known site and candidate map cover different atom sets")
    return float(np.dot(known, candidate.probabilities))


def binding_score(s_b: Conformer, pose: Pose, site_map: BindingSiteMap, A: Structure,
                  m: ContactModel = ContactModel()) -> float:
    """Reward a pose by the site probability mass it touches.

    sum over receptor atoms of p_BS(a) * contact(a, pose(s_b)).
    """
    if len(site_map.serials) != A.n_atoms:
        raise ValueError("site map does not cover the receptor's atoms")
    rows = _contact_rows(A.positions(), s_b.positions, pose, m.cutoff)
    return float(np.dot(site_map.probabilities, rows))


def residue_site_probabilities(A: Structure, site_map: BindingSiteMap):
    """Aggregate an atom map to residues: max over each residue's atoms.

    Returns a list of ((chain_id, residue_seq, residue_name), probability) in
    first-seen residue order.  Max is used so a residue counts as interface
    whenever any of its atoms does.
    """
    if len(site_map.serials) != A.n_atoms:
        raise ValueError("site map does not cover the receptor's atoms")
    order: list[tuple[str, int, str]] = []
    best: dict[tuple[str, int, str], float] = {}
    for atom, p in zip(A.atoms, site_map.probabilities):
        key = (atom.chain_id, atom.residue_seq, atom.residue_name)
        if key not in best:
            order.append(key)
            best[key] = float(p)
        else:
            best[key] = max(best[key], float(p))
    return [(key, best[key]) for key in order]
