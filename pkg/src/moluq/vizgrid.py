"""Visualization data products: occupancy grids, grid statistics, colormaps.

Grids go out as OpenDX general-array text so external molecular viewers can
load them directly; per-atom/per-point scalars go out as color CSVs plus a
viewer command script.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from moluq.conformers import Ensemble


class GridFormatError(ValueError):
    """Malformed OpenDX grid text."""


@dataclass(frozen=True)
class ScalarGrid:
    """A regular scalar field: voxel values stored flat in x-fastest order.

    ``origin`` is the center of voxel (0, 0, 0); the value at (ix, iy, iz)
    sits at flat index ix + nx * (iy + ny * iz).
    """

    origin: np.ndarray
    spacing: float
    dims: tuple[int, int, int]
    values: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        nx, ny, nz = self.dims
        if values.shape != (nx * ny * nz,):
            raise ValueError("value count must equal nx*ny*nz")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dims", (int(nx), int(ny), int(nz)))

    def value_at(self, ix: int, iy: int, iz: int) -> float:
        nx, ny, _nz = self.dims
        return float(self.values[ix + nx * (iy + ny * iz)])

    def as_3d(self) -> np.ndarray:
        """(nx, ny, nz) view of the values."""
        nx, ny, nz = self.dims
        return self.values.reshape(nz, ny, nx).transpose(2, 1, 0)


def _grid_geometry(lo, hi, spacing):
    dims = np.maximum(np.ceil((hi - lo) / spacing).astype(int), 1)
    origin = lo + 0.5 * spacing
    return origin, dims


def occupancy_map(e: Ensemble, spacing: float, radius_mode="vdw") -> ScalarGrid:
    """Pseudo-electron-cloud: per voxel, the fraction of conformers covering it.

    A conformer covers a voxel when any of its atom spheres contains the
    voxel center.  ``radius_mode`` is "vdw" (per-atom radii from the source
    structure) or a fixed radius in Angstrom.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    accepted = e.accepted()
    if not accepted:
        raise ValueError("ensemble has no accepted conformers")
    if e.source.n_atoms == 0:
        raise ValueError("ensemble structure has no atoms")
    if radius_mode == "vdw":
        radii = np.array([a.vdw_radius for a in e.source.atoms])
    else:
        radii = np.full(e.source.n_atoms, float(radius_mode))
        if radii.size and radii[0] <= 0:
            raise ValueError("fixed radius must be positive")
    stack = np.stack([c.positions for c in accepted])
    pad = (float(radii.max()) if radii.size else 0.0) + spacing
    lo = stack.reshape(-1, 3).min(axis=0) - pad
    hi = stack.reshape(-1, 3).max(axis=0) + pad
    origin, dims = _grid_geometry(lo, hi, spacing)
    counts = np.zeros(tuple(dims), dtype=np.int64)
    for c in accepted:
        covered = np.zeros(tuple(dims), dtype=bool)
        for p, r in zip(c.positions, radii):
            i_lo = np.maximum(np.floor((p - r - lo) / spacing - 0.5).astype(int), 0)
            i_hi = np.minimum(np.ceil((p + r - lo) / spacing + 0.5).astype(int), dims - 1)
            axes = [np.arange(i_lo[ax], i_hi[ax] + 1) for ax in range(3)]
            cts = [origin[ax] + axes[ax] * spacing - p[ax] for ax in range(3)]
            d2 = cts[0][:, None, None] ** 2 + cts[1][None, :, None] ** 2 + cts[2][None, None, :] ** 2
            sub = covered[i_lo[0]:i_hi[0] + 1, i_lo[1]:i_hi[1] + 1, i_lo[2]:i_hi[2] + 1]
            covered[i_lo[0]:i_hi[0] + 1, i_lo[1]:i_hi[1] + 1, i_lo[2]:i_hi[2] + 1] = (
                sub | (d2 <= r * r)
            )
        counts += covered
    frac = counts.astype(float) / len(accepted)
    # store x-fastest: transpose to (z, y, x) then flatten C-order
    flat = frac.transpose(2, 1, 0).reshape(-1)
    return ScalarGrid(origin=origin, spacing=spacing, dims=tuple(int(d) for d in dims),
                      values=flat)


def grid_statistics(grids) -> tuple[ScalarGrid, ScalarGrid]:
    """Voxelwise mean and population standard deviation of matching grids."""
    grids = list(grids)
    if not grids:
        raise ValueError("need at least one grid")
    first = grids[0]
    for g in grids[1:]:
        if (g.dims != first.dims or g.spacing != first.spacing
                or np.any(g.origin != first.origin)):
            raise ValueError("grids must share origin, spacing, and dims")
    stack = np.stack([g.values for g in grids])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    make = lambda v: ScalarGrid(origin=first.origin, spacing=first.spacing,
                                dims=first.dims, values=v)
    return make(mean), make(std)


def write_grid(g: ScalarGrid) -> str:
    """Render a grid as OpenDX general-array text.

    Uses the conventional z-fastest data order with 3 values per line, 6
    significant digits.  Byte-deterministic for a fixed grid.
    """
    nx, ny, nz = g.dims
    lines = [
        f"object 1 class gridpositions counts {nx} {ny} {nz}",
        f"origin {g.origin[0]:.6g} {g.origin[1]:.6g} {g.origin[2]:.6g}",
        f"delta {g.spacing:.6g} 0 0",
        f"delta 0 {g.spacing:.6g} 0",
        f"delta 0 0 {g.spacing:.6g}",
        f"object 2 class gridconnections counts {nx} {ny} {nz}",
        f"object 3 class array type double rank 0 items {nx * ny * nz} data follows",
    ]
    # file order: x slowest, z fastest
    data = g.as_3d().reshape(-1)
    for start in range(0, data.size, 3):
        lines.append(" ".join(f"{v:.6g}" for v in data[start:start + 3]))
    lines.append('attribute "dep" string "positions"')
    return "\n".join(lines) + "\n"


def read_grid(text: str) -> ScalarGrid:
    """Parse grid text produced by :func:`write_grid`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        head = next(ln for ln in lines if ln.startswith("object 1 class gridpositions"))
        nx, ny, nz = (int(x) for x in head.split("counts")[1].split())
        origin_line = next(ln for ln in lines if ln.startswith("origin"))
        origin = np.array([float(x) for x in origin_line.split()[1:4]])
        deltas = [ln for ln in lines if ln.startswith("delta")]
        spacing = float(deltas[0].split()[1])
        items_line = next(ln for ln in lines if "data follows" in ln)
        n_items = int(items_line.split("items")[1].split()[0])
    except (StopIteration, ValueError, IndexError) as exc:
        raise GridFormatError(f"malformed grid header: {exc}") from None
    if n_items != nx * ny * nz:
        raise GridFormatError(f"dims {nx}x{ny}x{nz} disagree with item count {n_items}")
    start = lines.index(items_line) + 1
    values: list[float] = []
    for ln in lines[start:]:
        if ln.startswith("attribute") or ln.startswith("object"):
            break
        try:
            values.extend(float(x) for x in ln.split())
        except ValueError:
            raise GridFormatError(f"non-numeric grid data line: {ln!r}") from None
    if len(values) != n_items:
        raise GridFormatError(f"expected {n_items} values, found {len(values)}")
    # back from file order (z fastest) to x-fastest storage
    cube = np.array(values).reshape(nx, ny, nz)
    flat = cube.transpose(2, 1, 0).reshape(-1)
    return ScalarGrid(origin=origin, spacing=spacing, dims=(nx, ny, nz), values=flat)


PALETTES = {
    "green_white_red": ((0, 255, 0), (255, 255, 255), (255, 0, 0)),
    # low -> high runs red -> blue so that blue marks high values
    "rainbow": ((255, 0, 0), (255, 165, 0), (255, 255, 0), (0, 255, 0), (0, 0, 255)),
}


def _interpolate(anchors, fraction: float) -> tuple[int, int, int]:
    n_seg = len(anchors) - 1
    x = fraction * n_seg
    seg = min(int(x), n_seg - 1)
    t = x - seg
    a, b = anchors[seg], anchors[seg + 1]
    return tuple(int(round(a[ch] + t * (b[ch] - a[ch]))) for ch in range(3))


def colormap_export(keys, values, palette: str = "green_white_red") -> tuple[str, str]:
    """CSV color rows plus a viewer command script for per-atom coloring.

    Values map linearly onto the palette over [min, max]; a constant value
    list maps everything to the palette midpoint.  Returns (csv_text,
    script_text); the script uses PyMOL command syntax.
    """
    if palette not in PALETTES:
        raise ValueError(f"unknown palette {palette!r}")
    keys = list(keys)
    vals = np.asarray(values, dtype=float)
    if len(keys) != vals.size:
        raise ValueError("keys and values must have the same length")
    if vals.size and not np.all(np.isfinite(vals)):
        raise ValueError("values must be finite")
    anchors = PALETTES[palette]
    lo = float(vals.min()) if vals.size else 0.0
    hi = float(vals.max()) if vals.size else 0.0
    csv_lines = ["key,value,r,g,b"]
    script_lines = []
    for row, (key, v) in enumerate(zip(keys, vals)):
        frac = 0.5 if hi == lo else (float(v) - lo) / (hi - lo)
        r, g, b = _interpolate(anchors, frac)
        csv_lines.append(f"{key},{v!r},{r},{g},{b}")
        script_lines.append(
            f"set_color moluq_c{row}, [{r / 255:.4f}, {g / 255:.4f}, {b / 255:.4f}]"
        )
        script_lines.append(f"color moluq_c{row}, id {key}")
    return "\n".join(csv_lines) + "\n", "\n".join(script_lines) + "\n"
