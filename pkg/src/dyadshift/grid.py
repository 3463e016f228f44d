"""Truncated dyadic grids on the torus and the Haar calculus over them.

An axis carries the standard dyadic cubes of [0,1)^n for levels
0..max_level; fields are resolved on the finest cells, each of measure
2^{-max_level * n}.  Multi-parameter fields take one grid axis per
parameter and store their values as a dense array with one position per
axis plus a trailing lattice dimension.

Cells along an axis are linearised row-major over the n coordinates, so
every per-axis operation reduces to reshape/mean tricks that leave any
trailing dimensions (lattice coordinates, batch columns) untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from functools import reduce
from typing import Iterator, Optional, Sequence

import numpy as np

from .lattice import (
    LatticeSpec,
    MixedNormSpec,
    mixed_dual_array,
    mixed_norm_array,
    scalar_lattice,
)


class DepthOverflowError(ValueError):
    """Raised when an operation needs resolution below the finest level."""


@dataclass(frozen=True)
class GridAxis:
    """One parameter axis: dyadic cubes of [0,1)^n down to ``max_level``."""

    axis_id: str
    n: int = 1
    max_level: int = 3

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("axis dimension n must be >= 1")
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        if self.cell_count > 65536:
            raise ValueError("axis resolution too large for dense storage")

    @property
    def side_cells(self) -> int:
        return 2 ** self.max_level

    @property
    def cell_count(self) -> int:
        return 2 ** (self.max_level * self.n)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.max_level * self.n)

    def to_json(self) -> dict:
        return {"axis_id": self.axis_id, "n": self.n, "max_level": self.max_level}

    @staticmethod
    def from_json(data: dict) -> "GridAxis":
        return GridAxis(data["axis_id"], data["n"], data["max_level"])


@dataclass(frozen=True)
class DyadicCube:
    """Dyadic cube at ``level`` with per-coordinate index in [0, 2^level)."""

    level: int
    index: tuple

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        if self.level < 0:
            raise ValueError("cube level must be >= 0")
        for i in self.index:
            if not (0 <= i < 2 ** self.level):
                raise ValueError(f"cube index {self.index} invalid at level {self.level}")

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def side_length(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.level * self.n)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise ValueError("the root cube has no parent")
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def ancestor(self, generations: int) -> "DyadicCube":
        """The unique cube ``generations`` levels up containing this one."""
        if generations < 0 or generations > self.level:
            raise ValueError("invalid ancestor depth")
        return DyadicCube(self.level - generations, tuple(i >> generations for i in self.index))

    def children(self) -> list:
        out = []
        for corner in range(2 ** self.n):
            offs = tuple((corner >> (self.n - 1 - k)) & 1 for k in range(self.n))
            out.append(DyadicCube(self.level + 1, tuple(2 * i + o for i, o in zip(self.index, offs))))
        return out

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level or other.n != self.n:
            return False
        shift = other.level - self.level
        return all((oi >> shift) == si for oi, si in zip(other.index, self.index))

    def to_json(self) -> dict:
        return {"level": self.level, "index": list(self.index)}

    @staticmethod
    def from_json(data: dict) -> "DyadicCube":
        return DyadicCube(data["level"], tuple(data["index"]))


def root_cube(axis: GridAxis) -> DyadicCube:
    return DyadicCube(0, (0,) * axis.n)


def cubes_at_level(axis: GridAxis, level: int) -> Iterator[DyadicCube]:
    if not (0 <= level <= axis.max_level):
        raise ValueError(f"level {level} outside 0..{axis.max_level}")
    side = 2 ** level
    for flat in range(side ** axis.n):
        idx = []
        rem = flat
        for k in range(axis.n):
            idx.append(rem // side ** (axis.n - 1 - k))
            rem %= side ** (axis.n - 1 - k)
        yield DyadicCube(level, tuple(idx))


def all_cubes(axis: GridAxis, min_level: int = 0, max_level: Optional[int] = None) -> Iterator[DyadicCube]:
    top = axis.max_level if max_level is None else max_level
    for level in range(min_level, top + 1):
        yield from cubes_at_level(axis, level)


def cell_to_cube(axis: GridAxis, cell: int, level: int) -> DyadicCube:
    """The level-``level`` cube containing the given finest cell."""
    side = axis.side_cells
    coords = []
    rem = int(cell)
    for k in range(axis.n):
        coords.append(rem // side ** (axis.n - 1 - k))
        rem %= side ** (axis.n - 1 - k)
    shift = axis.max_level - level
    return DyadicCube(level, tuple(c >> shift for c in coords))


def cell_selector(axis: GridAxis, cube: DyadicCube):
    """Finest-cell positions of a cube: a slice for n=1, an index array otherwise."""
    if cube.level > axis.max_level:
        raise DepthOverflowError(f"cube level {cube.level} below finest level {axis.max_level}")
    span = 2 ** (axis.max_level - cube.level)
    if axis.n == 1:
        start = cube.index[0] * span
        return slice(start, start + span)
    side = axis.side_cells
    ranges = [np.arange(i * span, (i + 1) * span) for i in cube.index]
    linear = ranges[0]
    for r in ranges[1:]:
        linear = (linear[:, None] * side + r[None, :]).ravel()
    return linear


def cell_indices(axis: GridAxis, cube: DyadicCube) -> np.ndarray:
    sel = cell_selector(axis, cube)
    if isinstance(sel, slice):
        return np.arange(sel.start, sel.stop)
    return sel


# ---------------------------------------------------------------------------
# averaging engines

def _avg_interleaved(v: np.ndarray, n: int, side_levels: int, level: int) -> np.ndarray:
    """Cube averages at ``level`` of an array whose axis 0 holds 2^{side_levels*n}
    row-major cells; all remaining axes pass through."""
    if level == side_levels:
        return v
    lead = 2 ** level
    sub = 2 ** (side_levels - level)
    rest = v.shape[1:]
    shaped = v.reshape((lead, sub) * n + rest)
    mean_axes = tuple(2 * k + 1 for k in range(n))
    m = shaped.mean(axis=mean_axes, keepdims=True)
    return np.broadcast_to(m, shaped.shape).reshape(v.shape)


def level_average_values(values: np.ndarray, pos: int, axis: GridAxis, level: int) -> np.ndarray:
    """Conditional expectation onto level-``level`` cubes along axis position ``pos``."""
    if not (0 <= level <= axis.max_level):
        raise ValueError(f"level {level} outside 0..{axis.max_level}")
    v = np.moveaxis(values, pos, 0)
    out = _avg_interleaved(v, axis.n, axis.max_level, level)
    return np.moveaxis(out, 0, pos)


def local_block_values(vsub: np.ndarray, pos: int, axis: GridAxis, cube_level: int, depth: int) -> np.ndarray:
    """Martingale block at relative ``depth`` inside a cube, on the cube's own cells.

    ``vsub`` carries the cube's cells (local row-major order) along ``pos``.
    Equals the level cube_level+depth+1 averages minus the cube_level+depth
    averages, all computed within the cube.
    """
    if cube_level + depth + 1 > axis.max_level:
        raise DepthOverflowError(
            f"block at level {cube_level}+{depth} needs resolution below max_level {axis.max_level}"
        )
    rel_levels = axis.max_level - cube_level
    v = np.moveaxis(vsub, pos, 0)
    fine = _avg_interleaved(v, axis.n, rel_levels, depth + 1)
    coarse = _avg_interleaved(v, axis.n, rel_levels, depth)
    return np.moveaxis(fine - coarse, 0, pos)


# ---------------------------------------------------------------------------
# fields

@dataclass
class DiscreteField:
    """A lattice-valued function resolved on the finest cells of its axes.

    ``values`` has shape (cells_0, ..., cells_{k-1}, lattice.dim).
    """

    axes: tuple
    lattice: LatticeSpec
    values: np.ndarray

    def __post_init__(self):
        self.axes = tuple(self.axes)
        if self.lattice is None:
            self.lattice = scalar_lattice()
        ids = [a.axis_id for a in self.axes]
        if len(set(ids)) != len(ids):
            raise ValueError("axis identifiers must be distinct")
        expected = tuple(a.cell_count for a in self.axes) + (self.lattice.dim,)
        self.values = np.asarray(self.values, float)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} does not match {expected}")

    @property
    def k(self) -> int:
        return len(self.axes)

    def axis_pos(self, axis_id: str) -> int:
        for i, a in enumerate(self.axes):
            if a.axis_id == axis_id:
                return i
        raise KeyError(f"no axis {axis_id!r} on this field")

    def axis(self, axis_id: str) -> GridAxis:
        return self.axes[self.axis_pos(axis_id)]

    def copy(self) -> "DiscreteField":
        return DiscreteField(self.axes, self.lattice, self.values.copy())

    @staticmethod
    def zeros(axes: Sequence[GridAxis], lattice: Optional[LatticeSpec] = None) -> "DiscreteField":
        lattice = lattice or scalar_lattice()
        shape = tuple(a.cell_count for a in axes) + (lattice.dim,)
        return DiscreteField(tuple(axes), lattice, np.zeros(shape))

    @staticmethod
    def random(axes: Sequence[GridAxis], lattice: Optional[LatticeSpec], rng: np.random.Generator) -> "DiscreteField":
        lattice = lattice or scalar_lattice()
        shape = tuple(a.cell_count for a in axes) + (lattice.dim,)
        return DiscreteField(tuple(axes), lattice, rng.standard_normal(shape))

    def integral(self) -> np.ndarray:
        """Integrate over all axes; returns a lattice vector."""
        mu = float(np.prod([a.cell_measure for a in self.axes])) if self.axes else 1.0
        return self.values.sum(axis=tuple(range(self.k))) * mu


def field_pairing(f: DiscreteField, g: DiscreteField) -> float:
    """Bilinear pairing <f, g> = integral of the pointwise lattice pairing."""
    if tuple(a.axis_id for a in f.axes) != tuple(a.axis_id for a in g.axes):
        raise ValueError("pairing requires identical axes in identical order")
    if f.values.shape != g.values.shape:
        raise ValueError("pairing requires matching lattice dimensions")
    mu = float(np.prod([a.cell_measure for a in f.axes])) if f.axes else 1.0
    return float(np.sum(f.values * g.values) * mu)


MAX_DENSE_DIM = 4096


def dense_operator_matrix(apply_values, axes: Sequence[GridAxis], dim: int) -> np.ndarray:
    """Assemble a linear operator as a matrix by one batched application.

    ``apply_values`` must accept a values array of shape (cells..., dim, batch)
    and act only on the cell and lattice axes; the basis columns ride along in
    the trailing batch axis.  Total dimension is capped at MAX_DENSE_DIM.
    """
    shape = tuple(a.cell_count for a in axes) + (dim,)
    total = int(np.prod(shape))
    if total > MAX_DENSE_DIM:
        raise ValueError(f"dense assembly capped at {MAX_DENSE_DIM}, got {total}")
    basis = np.eye(total).reshape(shape + (total,))
    return np.asarray(apply_values(basis)).reshape(total, total)


def mixed_norm(field: DiscreteField, spec: MixedNormSpec) -> float:
    """Iterated mixed norm of a field under ``spec`` (must cover every axis)."""
    if set(spec.axis_order) != {a.axis_id for a in field.axes}:
        raise ValueError("mixed norm spec must name exactly the field's axes")
    perm = [field.axis_pos(a) for a in spec.axis_order] + [field.k]
    v = np.transpose(field.values, perm)
    measures = [field.axis(a).cell_measure for a in spec.axis_order]
    return float(mixed_norm_array(v, spec.exponents, measures, spec.lattice))


def mixed_dual_field(field: DiscreteField, spec: MixedNormSpec):
    """Return (norm, dual field) where the dual field is the norming functional."""
    perm = [field.axis_pos(a) for a in spec.axis_order] + [field.k]
    v = np.transpose(field.values, perm)
    measures = [field.axis(a).cell_measure for a in spec.axis_order]
    norm, g = mixed_dual_array(v, spec.exponents, measures, spec.lattice)
    inv = np.argsort(perm)
    return float(norm), DiscreteField(field.axes, spec.lattice, np.transpose(g, inv))


# ---------------------------------------------------------------------------
# Haar functions

@dataclass(frozen=True)
class HaarIndex:
    """A cube together with a sign pattern eta in {0,1}^n.

    eta_k = 1 selects the cancellative factor along coordinate k, eta_k = 0
    the normalised indicator.  The all-zero pattern is the non-cancellative
    tensor used by averaging pairings.
    """

    cube: DyadicCube
    eta: tuple

    def __post_init__(self):
        object.__setattr__(self, "eta", tuple(int(e) for e in self.eta))
        if len(self.eta) != self.cube.n:
            raise ValueError("eta length must equal the cube dimension")
        if any(e not in (0, 1) for e in self.eta):
            raise ValueError("eta entries must be 0 or 1")

    @property
    def cancellative(self) -> bool:
        return any(e == 1 for e in self.eta)


def haar_values(axis: GridAxis, cube: DyadicCube, eta: Sequence[int]) -> np.ndarray:
    """Finest-cell values of the Haar function h_I^eta on one axis.

    Each coordinate contributes |I|^{-1/2} times an indicator (eta=0) or
    the left-minus-right split (eta=1); the tensor is flattened row-major.
    """
    if cube.n != axis.n:
        raise ValueError("cube dimension does not match the axis")
    if cube.level > axis.max_level:
        raise DepthOverflowError("cube below the finest level")
    eta = tuple(int(e) for e in eta)
    if any(e == 1 for e in eta) and cube.level >= axis.max_level:
        raise DepthOverflowError("cancellative Haar factor needs one level of headroom")
    L = axis.max_level
    span = 2 ** (L - cube.level)
    scale = 2.0 ** (cube.level / 2.0)
    factors = []
    for i, e in zip(cube.index, eta):
        arr = np.zeros(2 ** L)
        start = i * span
        if e == 0:
            arr[start:start + span] = scale
        else:
            half = span // 2
            arr[start:start + half] = scale
            arr[start + half:start + span] = -scale
        factors.append(arr)
    return reduce(np.multiply.outer, factors).ravel()


def haar_function(axis: GridAxis, index: HaarIndex, lattice: Optional[LatticeSpec] = None) -> DiscreteField:
    vals = haar_values(axis, index.cube, index.eta)
    lattice = lattice or scalar_lattice()
    if lattice.dim != 1:
        raise ValueError("haar_function produces scalar fields")
    return DiscreteField((axis,), lattice, vals[:, None])


def haar_pairing(field: DiscreteField, axis_id: str, index: HaarIndex) -> DiscreteField:
    """<f, h_I^eta> along one axis; the result lives on the remaining axes."""
    pos = field.axis_pos(axis_id)
    axis = field.axes[pos]
    h = haar_values(axis, index.cube, index.eta)
    vals = np.tensordot(field.values, h, axes=(pos, 0)) * axis.cell_measure
    rest = field.axes[:pos] + field.axes[pos + 1:]
    return DiscreteField(rest, field.lattice, vals)


# ---------------------------------------------------------------------------
# martingale calculus

def martingale_difference(field: DiscreteField, axis_id: str, cube: DyadicCube) -> DiscreteField:
    """Delta_I f: children averages minus the cube average, supported on I."""
    pos = field.axis_pos(axis_id)
    axis = field.axes[pos]
    if cube.level + 1 > axis.max_level:
        raise DepthOverflowError("martingale difference needs one level of headroom")
    fine = level_average_values(field.values, pos, axis, cube.level + 1)
    coarse = level_average_values(field.values, pos, axis, cube.level)
    out = np.zeros_like(field.values)
    sel = cell_selector(axis, cube)
    idx = (slice(None),) * pos + (sel,)
    out[idx] = (fine - coarse)[idx]
    return DiscreteField(field.axes, field.lattice, out)


def martingale_block(field: DiscreteField, axis_id: str, cube: DyadicCube, depth: int) -> DiscreteField:
    """Delta_K^i f = sum of Delta_I f over descendants I of K at relative depth i."""
    if depth < 0:
        raise ValueError("block depth must be >= 0")
    pos = field.axis_pos(axis_id)
    axis = field.axes[pos]
    if cube.level + depth + 1 > axis.max_level:
        raise DepthOverflowError(
            f"block depth {depth} under a level-{cube.level} cube exceeds max_level {axis.max_level}"
        )
    fine = level_average_values(field.values, pos, axis, cube.level + depth + 1)
    coarse = level_average_values(field.values, pos, axis, cube.level + depth)
    out = np.zeros_like(field.values)
    sel = cell_selector(axis, cube)
    idx = (slice(None),) * pos + (sel,)
    out[idx] = (fine - coarse)[idx]
    return DiscreteField(field.axes, field.lattice, out)


def biparam_block(field: DiscreteField, axis_id_1: str, cube_1: DyadicCube, depth_1: int,
                  axis_id_2: str, cube_2: DyadicCube, depth_2: int) -> DiscreteField:
    """Rectangle block Delta^{i,j}_{K x V}: the per-axis blocks composed."""
    return martingale_block(
        martingale_block(field, axis_id_2, cube_2, depth_2),
        axis_id_1, cube_1, depth_1,
    )


def decoupling_subgrid(axis: GridAxis, i: int, j: int) -> list:
    """Cubes whose level is congruent to -j modulo i+1, for 0 <= j <= i.

    These are the truncated-grid levels of side length 2^{k(i+1)+j}; the
    coarsest admitted level is the smallest such value >= 0.
    """
    if i < 0:
        raise ValueError("i must be >= 0")
    if not (0 <= j <= i):
        raise ValueError("decoupling subgrid needs 0 <= j <= i")
    levels = [lev for lev in range(axis.max_level + 1) if lev % (i + 1) == (-j) % (i + 1)]
    out = []
    for lev in levels:
        out.extend(cubes_at_level(axis, lev))
    return out


def subgrid_levels(axis: GridAxis, i: int, j: int) -> list:
    if i < 0 or not (0 <= j <= i):
        raise ValueError("decoupling subgrid needs 0 <= j <= i")
    return [lev for lev in range(axis.max_level + 1) if lev % (i + 1) == (-j) % (i + 1)]


# ---------------------------------------------------------------------------
# serialization

def field_to_json(field: DiscreteField) -> dict:
    return {
        "axes": [a.to_json() for a in field.axes],
        "lattice": field.lattice.to_json(),
        "values": field.values.ravel().tolist(),
    }


def field_from_json(data: dict) -> DiscreteField:
    axes = tuple(GridAxis.from_json(a) for a in data["axes"])
    lattice = LatticeSpec.from_json(data["lattice"])
    shape = tuple(a.cell_count for a in axes) + (lattice.dim,)
    values = np.asarray(data["values"], float).reshape(shape)
    return DiscreteField(axes, lattice, values)


def field_to_bytes(field: DiscreteField) -> bytes:
    header = json.dumps({
        "axes": [a.to_json() for a in field.axes],
        "lattice": field.lattice.to_json(),
    }, sort_keys=True)
    return header.encode() + b"\n" + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def field_from_bytes(blob: bytes) -> DiscreteField:
    head, _, raw = blob.partition(b"\n")
    meta = json.loads(head.decode())
    axes = tuple(GridAxis.from_json(a) for a in meta["axes"])
    lattice = LatticeSpec.from_json(meta["lattice"])
    shape = tuple(a.cell_count for a in axes) + (lattice.dim,)
    values = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return DiscreteField(axes, lattice, values)
