import math

import numpy as np
import pytest

from moluq.molio import Atom, Structure


def make_atom(serial, position, element="C", b_iso=0.0, b_aniso=None, chain="A",
              residue_seq=1, residue_name="LIG", name=None, charge=0.0,
              vdw_radius=1.7, lj_a=0.0, lj_b=0.0):
    return Atom(
        serial=serial, name=name or element, element=element,
        residue_name=residue_name, residue_seq=residue_seq, chain_id=chain,
        position=np.asarray(position, dtype=float), b_iso=b_iso, b_aniso=b_aniso,
        charge=charge, vdw_radius=vdw_radius, lj_a=lj_a, lj_b=lj_b,
    )


def make_structure(positions, bonds=(), **atom_kwargs):
    atoms = tuple(
        make_atom(i + 1, p, **atom_kwargs) for i, p in enumerate(positions)
    )
    return Structure(atoms=atoms, bonds=tuple(bonds))


@pytest.fixture
def chain4():
    """Four-atom bonded chain with a single rotatable dihedral."""
    positions = [
        [0.0, 0.0, 0.0],
        [1.5, 0.0, 0.0],
        [2.25, 1.3, 0.0],
        [3.75, 1.35, 0.4],
    ]
    return make_structure(positions, bonds=((0, 1), (1, 2), (2, 3)))


def zigzag_chain(n_atoms, bond_length=1.5, angle=1.911):
    """Planar zigzag polymer chain coordinates (tetrahedral-ish bond angle).

    Every bond tilts alternately +-(pi - angle)/2 off the chain axis, which
    makes each vertex angle exactly ``angle``.
    """
    half = (math.pi - angle) / 2.0
    positions = [np.zeros(3)]
    sign = 1.0
    for _ in range(n_atoms - 1):
        step = np.array([
            bond_length * math.cos(half),
            bond_length * math.sin(half) * sign,
            0.0,
        ])
        positions.append(positions[-1] + step)
        sign = -sign
    return np.array(positions)
