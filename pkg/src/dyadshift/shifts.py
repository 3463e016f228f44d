"""Operator-valued averaging operators and dyadic shifts in one and two parameters.

A shift is a sum over cubes K of block-average-block sandwiches
Delta_K^{i2} A_K Delta_K^{i1}, where A_K averages against a piecewise
constant kernel supported on K x K.  Kernels are stored densely on
finest-cell pairs; a partition-of-rectangles constructor is provided for
fixtures.  The two-parameter variant runs over pairs of cubes (K, V) with
rectangle kernels on (K x V) x (K x V).

Model operators act coefficient-wise on Haar pairings; matrix-valued
coefficient maps convert exactly to shift kernels, and bi-parameter shifts
admit a nested evaluation path (an outer one-parameter shift whose kernel
values are inner one-parameter shifts) that reproduces the direct sum.

All engines tolerate extra trailing batch axes after the lattice axis and
touch only cell and lattice positions, which keeps dense assembly a single
batched application.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lattice import LatticeSpec
from .grid import (
    DepthOverflowError,
    DiscreteField,
    DyadicCube,
    GridAxis,
    HaarIndex,
    all_cubes,
    cell_indices,
    cell_selector,
    haar_pairing,
    haar_values,
    local_block_values,
)

__all__ = [
    "KernelFamily1P",
    "KernelFamily2P",
    "ShiftSpec1P",
    "ShiftSpec2P",
    "ModelEntry",
    "ModelOperatorSpec",
    "apply_averaging",
    "apply_shift_1p",
    "apply_shift_2p",
    "adjoint_shift",
    "nest_biparameter",
    "apply_model",
    "model_to_shift",
    "random_kernel_family_1p",
    "random_kernel_family_2p",
    "shift_values_1p",
    "shift_values_2p",
    "kernel_family_to_json",
    "kernel_family_from_json",
]


# ---------------------------------------------------------------------------
# gather / scatter on selected cell axes

def _gather(values: np.ndarray, pos_sels) -> np.ndarray:
    """Restrict ``values`` to selected cells along each (position, selector)."""
    if all(isinstance(sel, slice) for _, sel in pos_sels):
        idx = [slice(None)] * values.ndim
        for pos, sel in pos_sels:
            idx[pos] = sel
        return values[tuple(idx)]
    positions = [pos for pos, _ in pos_sels]
    moved = np.moveaxis(values, positions, range(len(positions)))
    arrays = []
    for k, (pos, sel) in enumerate(pos_sels):
        if isinstance(sel, slice):
            arrays.append(np.arange(*sel.indices(moved.shape[k])))
        else:
            arrays.append(np.asarray(sel))
    sub = moved[np.ix_(*arrays)]
    return np.moveaxis(sub, range(len(positions)), positions)


def _scatter_add(values: np.ndarray, pos_sels, update: np.ndarray) -> None:
    if all(isinstance(sel, slice) for _, sel in pos_sels):
        idx = [slice(None)] * values.ndim
        for pos, sel in pos_sels:
            idx[pos] = sel
        values[tuple(idx)] += update
        return
    positions = [pos for pos, _ in pos_sels]
    moved = np.moveaxis(values, positions, range(len(positions)))
    arrays = []
    for k, (pos, sel) in enumerate(pos_sels):
        if isinstance(sel, slice):
            arrays.append(np.arange(*sel.indices(moved.shape[k])))
        else:
            arrays.append(np.asarray(sel))
    moved[np.ix_(*arrays)] += np.moveaxis(update, positions, range(len(positions)))


# ---------------------------------------------------------------------------
# kernel families

def _local_cells(axis: GridAxis, cube: DyadicCube) -> int:
    return 2 ** ((axis.max_level - cube.level) * axis.n)


def _check_kernel_shape(arr: np.ndarray, m_shape, d: Optional[int], where: str) -> None:
    m_shape = tuple(m_shape)
    if d is None:
        if arr.shape != m_shape + m_shape:
            raise ValueError(f"{where}: scalar kernel must have shape {m_shape + m_shape}, got {arr.shape}")
    else:
        if arr.shape != m_shape + m_shape + (d, d):
            raise ValueError(f"{where}: matrix kernel must have shape {m_shape + m_shape + (d, d)}, got {arr.shape}")


class KernelFamily1P:
    """A map from cubes K to piecewise-constant kernels on K x K.

    Each kernel is stored densely on finest-cell pairs: shape (m, m) for
    scalar values or (m, m, d, d) for matrix values, where m is the number
    of finest cells in K.  ``d`` is None for scalar families.
    """

    def __init__(self, axis: GridAxis, entries: dict, d: Optional[int] = None):
        self.axis = axis
        self.d = d
        normalized = {}
        for cube, arr in entries.items():
            arr = np.asarray(arr, float)
            m = _local_cells(axis, cube)
            _check_kernel_shape(arr, (m,), d, f"kernel at {cube}")
            normalized[cube] = arr
        self.entries = normalized
        self._order = sorted(normalized, key=lambda c: (c.level, c.index))

    @property
    def axis_id(self) -> str:
        return self.axis.axis_id

    def items(self):
        for cube in self._order:
            yield cube, self.entries[cube]

    def get(self, cube: DyadicCube) -> np.ndarray:
        return self.entries[cube]

    def max_level(self) -> int:
        return max((c.level for c in self._order), default=0)

    def pointwise_sup(self) -> float:
        """Largest pointwise operator norm over all cubes and cell pairs."""
        sup = 0.0
        for _, arr in self.items():
            if self.d is None:
                sup = max(sup, float(np.max(np.abs(arr))) if arr.size else 0.0)
            else:
                flat = arr.reshape(-1, self.d, self.d)
                if flat.size:
                    sup = max(sup, float(np.linalg.svd(flat, compute_uv=False)[:, 0].max()))
        return sup

    @staticmethod
    def from_pieces(axis: GridAxis, cube_pieces: dict, d: Optional[int] = None) -> "KernelFamily1P":
        """Build a family from per-cube partitions of K x K into cell-range rectangles.

        ``cube_pieces`` maps each cube to a list of pieces
        (x_range, y_range, value) with half-open local finest-cell ranges.
        The rectangles must tile K x K exactly.
        """
        entries = {}
        for cube, pieces in cube_pieces.items():
            m = _local_cells(axis, cube)
            shape = (m, m) if d is None else (m, m, d, d)
            arr = np.zeros(shape)
            cover = np.zeros((m, m), dtype=int)
            for (x_lo, x_hi), (y_lo, y_hi), value in pieces:
                if not (0 <= x_lo < x_hi <= m and 0 <= y_lo < y_hi <= m):
                    raise ValueError(f"piece [{x_lo},{x_hi})x[{y_lo},{y_hi}) leaves the {m}-cell cube")
                cover[x_lo:x_hi, y_lo:y_hi] += 1
                value = np.asarray(value, float)
                if d is None:
                    if value.shape != ():
                        raise ValueError("scalar family pieces need scalar values")
                    arr[x_lo:x_hi, y_lo:y_hi] = value
                else:
                    if value.shape != (d, d):
                        raise ValueError(f"matrix family pieces need ({d},{d}) values")
                    arr[x_lo:x_hi, y_lo:y_hi] = value
            if not np.all(cover == 1):
                raise ValueError(f"pieces do not partition the cube exactly at {cube}")
            entries[cube] = arr
        return KernelFamily1P(axis, entries, d)


class KernelFamily2P:
    """A map from cube pairs (K, V) to kernels on (K x V) x (K x V).

    Dense storage indexed (x1, x2, y1, y2) on local finest cells, with an
    optional trailing (d, d) matrix block.
    """

    def __init__(self, axis_1: GridAxis, axis_2: GridAxis, entries: dict, d: Optional[int] = None):
        if axis_1.axis_id == axis_2.axis_id:
            raise ValueError("the two parameters must live on distinct axes")
        self.axis_1 = axis_1
        self.axis_2 = axis_2
        self.d = d
        normalized = {}
        for (cube_1, cube_2), arr in entries.items():
            arr = np.asarray(arr, float)
            m1 = _local_cells(axis_1, cube_1)
            m2 = _local_cells(axis_2, cube_2)
            _check_kernel_shape(arr, (m1, m2), d, f"kernel at ({cube_1}, {cube_2})")
            normalized[(cube_1, cube_2)] = arr
        self.entries = normalized
        self._order = sorted(normalized, key=lambda kv: (kv[0].level, kv[0].index, kv[1].level, kv[1].index))

    def items(self):
        for key in self._order:
            yield key, self.entries[key]

    def pointwise_sup(self) -> float:
        sup = 0.0
        for _, arr in self.items():
            if self.d is None:
                sup = max(sup, float(np.max(np.abs(arr))) if arr.size else 0.0)
            else:
                flat = arr.reshape(-1, self.d, self.d)
                if flat.size:
                    sup = max(sup, float(np.linalg.svd(flat, compute_uv=False)[:, 0].max()))
        return sup


# ---------------------------------------------------------------------------
# shift specifications

@dataclass(frozen=True, eq=False)
class ShiftSpec1P:
    """S^{i1,i2} f = sum over K of Delta_K^{i2} A_K Delta_K^{i1} f."""

    i1: int
    i2: int
    kernels: KernelFamily1P
    claimed_ca: float = 1.0

    def __post_init__(self):
        if self.i1 < 0 or self.i2 < 0:
            raise ValueError("shift complexities must be >= 0")
        if self.claimed_ca < 0:
            raise ValueError("claimed kernel budget must be nonnegative")
        top = self.kernels.axis.max_level - 1 - max(self.i1, self.i2)
        for cube in self.kernels.entries:
            if cube.level > top:
                raise DepthOverflowError(
                    f"cube at level {cube.level} leaves no room for depth {max(self.i1, self.i2)} blocks"
                )

    def admissible_levels(self) -> range:
        """Cube levels for which every block in the sandwich exists."""
        return range(0, self.kernels.axis.max_level - max(self.i1, self.i2))


@dataclass(frozen=True, eq=False)
class ShiftSpec2P:
    """Bi-parameter shift over cube pairs (K, V) with rectangle kernels."""

    i1: int
    i2: int
    j1: int
    j2: int
    kernels: KernelFamily2P
    claimed_ca: float = 1.0

    def __post_init__(self):
        if min(self.i1, self.i2, self.j1, self.j2) < 0:
            raise ValueError("shift complexities must be >= 0")
        if self.claimed_ca < 0:
            raise ValueError("claimed kernel budget must be nonnegative")
        top_1 = self.kernels.axis_1.max_level - 1 - max(self.i1, self.i2)
        top_2 = self.kernels.axis_2.max_level - 1 - max(self.j1, self.j2)
        for cube_1, cube_2 in self.kernels.entries:
            if cube_1.level > top_1 or cube_2.level > top_2:
                raise DepthOverflowError("cube pair leaves no room for the requested blocks")

    def admissible_levels(self):
        return (
            range(0, self.kernels.axis_1.max_level - max(self.i1, self.i2)),
            range(0, self.kernels.axis_2.max_level - max(self.j1, self.j2)),
        )


def adjoint_shift(spec):
    """Adjoint spec: complexities swapped, kernels transposed with arguments swapped."""
    if isinstance(spec, ShiftSpec1P):
        fam = spec.kernels
        if fam.d is None:
            entries = {cube: arr.T.copy() for cube, arr in fam.items()}
        else:
            entries = {cube: np.transpose(arr, (1, 0, 3, 2)).copy() for cube, arr in fam.items()}
        return ShiftSpec1P(spec.i2, spec.i1, KernelFamily1P(fam.axis, entries, fam.d), spec.claimed_ca)
    if isinstance(spec, ShiftSpec2P):
        fam = spec.kernels
        if fam.d is None:
            entries = {key: np.transpose(arr, (2, 3, 0, 1)).copy() for key, arr in fam.items()}
        else:
            entries = {key: np.transpose(arr, (2, 3, 0, 1, 5, 4)).copy() for key, arr in fam.items()}
        return ShiftSpec2P(
            spec.i2, spec.i1, spec.j2, spec.j1,
            KernelFamily2P(fam.axis_1, fam.axis_2, entries, fam.d),
            spec.claimed_ca,
        )
    raise TypeError(f"not a shift spec: {type(spec).__name__}")


# ---------------------------------------------------------------------------
# application engines (values level, batch tolerant)

def _kernel_average(arr: np.ndarray, vsub: np.ndarray, pos: int, dpos: int, weight: float) -> np.ndarray:
    """weight * integral of the kernel against vsub along cell position pos."""
    if arr.ndim == 2:
        out = np.tensordot(vsub, arr, axes=([pos], [1]))
        return weight * np.moveaxis(out, -1, pos)
    out = np.tensordot(vsub, arr, axes=([pos, dpos], [1, 3]))
    return weight * np.moveaxis(out, (-2, -1), (pos, dpos))


def _kernel_average_2p(arr: np.ndarray, vsub: np.ndarray, pos_1: int, pos_2: int,
                       dpos: int, weight: float) -> np.ndarray:
    if arr.ndim == 4:
        out = np.tensordot(vsub, arr, axes=([pos_1, pos_2], [2, 3]))
        return weight * np.moveaxis(out, (-2, -1), (pos_1, pos_2))
    out = np.tensordot(vsub, arr, axes=([pos_1, pos_2, dpos], [2, 3, 5]))
    return weight * np.moveaxis(out, (-3, -2, -1), (pos_1, pos_2, dpos))


def _check_field_against_family(field: DiscreteField, axis: GridAxis, d: Optional[int]) -> int:
    pos = field.axis_pos(axis.axis_id)
    if field.axes[pos] != axis:
        raise ValueError(f"field axis {axis.axis_id!r} does not match the kernel family's axis")
    if d is not None and field.lattice.dim != d:
        raise ValueError(f"matrix kernels of size {d} cannot act on lattice dimension {field.lattice.dim}")
    return pos


def shift_values_1p(spec: ShiftSpec1P, values: np.ndarray, pos: int, dpos: int) -> np.ndarray:
    """Apply the one-parameter shift to a raw values array.

    ``values`` carries finest cells along ``pos`` and the lattice axis at
    ``dpos``; any further trailing axes are treated as a batch.
    """
    axis = spec.kernels.axis
    out = np.zeros_like(values)
    for cube, arr in spec.kernels.items():
        sel = cell_selector(axis, cube)
        vsub = _gather(values, [(pos, sel)])
        blk = local_block_values(vsub, pos, axis, cube.level, spec.i1)
        avg = _kernel_average(arr, blk, pos, dpos, axis.cell_measure / cube.measure)
        blk = local_block_values(avg, pos, axis, cube.level, spec.i2)
        _scatter_add(out, [(pos, sel)], blk)
    return out


def shift_values_2p(spec: ShiftSpec2P, values: np.ndarray, pos_1: int, pos_2: int, dpos: int) -> np.ndarray:
    axis_1 = spec.kernels.axis_1
    axis_2 = spec.kernels.axis_2
    out = np.zeros_like(values)
    for (cube_1, cube_2), arr in spec.kernels.items():
        sel_1 = cell_selector(axis_1, cube_1)
        sel_2 = cell_selector(axis_2, cube_2)
        vsub = _gather(values, [(pos_1, sel_1), (pos_2, sel_2)])
        blk = local_block_values(vsub, pos_1, axis_1, cube_1.level, spec.i1)
        blk = local_block_values(blk, pos_2, axis_2, cube_2.level, spec.j1)
        weight = (axis_1.cell_measure / cube_1.measure) * (axis_2.cell_measure / cube_2.measure)
        avg = _kernel_average_2p(arr, blk, pos_1, pos_2, dpos, weight)
        blk = local_block_values(avg, pos_1, axis_1, cube_1.level, spec.i2)
        blk = local_block_values(blk, pos_2, axis_2, cube_2.level, spec.j2)
        _scatter_add(out, [(pos_1, sel_1), (pos_2, sel_2)], blk)
    return out


def apply_averaging(family: KernelFamily1P, cube: DyadicCube, field: DiscreteField) -> DiscreteField:
    """A_K f = (1_K / |K|) * integral over K of a_K(x, y) f(y) dy."""
    pos = _check_field_against_family(field, family.axis, family.d)
    if cube not in family.entries:
        raise KeyError(f"no kernel stored for {cube}")
    arr = family.entries[cube]
    sel = cell_selector(family.axis, cube)
    vsub = _gather(field.values, [(pos, sel)])
    avg = _kernel_average(arr, vsub, pos, field.k, family.axis.cell_measure / cube.measure)
    out = np.zeros_like(field.values)
    _scatter_add(out, [(pos, sel)], avg)
    return DiscreteField(field.axes, field.lattice, out)


def apply_shift_1p(spec: ShiftSpec1P, field: DiscreteField) -> DiscreteField:
    pos = _check_field_against_family(field, spec.kernels.axis, spec.kernels.d)
    out = shift_values_1p(spec, field.values, pos, field.k)
    return DiscreteField(field.axes, field.lattice, out)


def apply_shift_2p(spec: ShiftSpec2P, field: DiscreteField) -> DiscreteField:
    pos_1 = _check_field_against_family(field, spec.kernels.axis_1, spec.kernels.d)
    pos_2 = _check_field_against_family(field, spec.kernels.axis_2, spec.kernels.d)
    out = shift_values_2p(spec, field.values, pos_1, pos_2, field.k)
    return DiscreteField(field.axes, field.lattice, out)


def nest_values_2p(spec: ShiftSpec2P, values: np.ndarray, pos_1: int, pos_2: int, dpos: int) -> np.ndarray:
    """Nested evaluation: an outer shift on axis 1 whose kernel values are
    inner one-parameter shifts on axis 2, applied per (x1, y1) pair.

    The summation order differs from the direct rectangle sum, so agreement
    between the two paths is a genuine consistency check.
    """
    axis_1 = spec.kernels.axis_1
    axis_2 = spec.kernels.axis_2
    out = np.zeros_like(values)
    for (cube_1, cube_2), arr in spec.kernels.items():
        sel_1 = cell_selector(axis_1, cube_1)
        sel_2 = cell_selector(axis_2, cube_2)
        vsub = _gather(values, [(pos_1, sel_1), (pos_2, sel_2)])
        blk = local_block_values(vsub, pos_1, axis_1, cube_1.level, spec.i1)
        blk = local_block_values(blk, pos_2, axis_2, cube_2.level, spec.j1)
        if arr.ndim == 4:
            moved = np.moveaxis(blk, (pos_1, pos_2), (0, 1))
            z = np.einsum("cY...,aXcY->acX...", moved, arr)
        else:
            moved = np.moveaxis(blk, (pos_1, pos_2, dpos), (0, 1, 2))
            z = np.einsum("cYj...,aXcYij->acXi...", moved, arr)
        # inner averaging weight, then the inner output block per (x1, y1)
        z = z * (axis_2.cell_measure / cube_2.measure)
        z = local_block_values(z, 2, axis_2, cube_2.level, spec.j2)
        # outer averaging over y1, then the outer output block
        w = z.sum(axis=1) * (axis_1.cell_measure / cube_1.measure)
        if arr.ndim == 4:
            w = np.moveaxis(w, (0, 1), (pos_1, pos_2))
        else:
            w = np.moveaxis(w, (0, 1, 2), (pos_1, pos_2, dpos))
        w = local_block_values(w, pos_1, axis_1, cube_1.level, spec.i2)
        _scatter_add(out, [(pos_1, sel_1), (pos_2, sel_2)], w)
    return out


def nest_biparameter(spec: ShiftSpec2P, field: DiscreteField) -> DiscreteField:
    pos_1 = _check_field_against_family(field, spec.kernels.axis_1, spec.kernels.d)
    pos_2 = _check_field_against_family(field, spec.kernels.axis_2, spec.kernels.d)
    out = nest_values_2p(spec, field.values, pos_1, pos_2, field.k)
    return DiscreteField(field.axes, field.lattice, out)


# ---------------------------------------------------------------------------
# model operators

@dataclass(frozen=True, eq=False)
class ModelEntry:
    """One coefficient of a model operator: input Haar, output Haar, and the
    operator applied to the pairing.

    ``coeff`` is a float (a multiple of the identity), a (d, d) matrix, or a
    callable mapping the coefficient field on the remaining axes to a field
    on the same axes.
    """

    cube: DyadicCube
    h_in: HaarIndex
    h_out: HaarIndex
    coeff: object


@dataclass(frozen=True, eq=False)
class ModelOperatorSpec:
    """P f = sum of h_out * B(<f, h_in>) over stored entries.

    Every input cube sits i1 generations below its entry's cube and every
    output cube i2 generations below it.
    """

    axis: GridAxis
    i1: int
    i2: int
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.i1 < 0 or self.i2 < 0:
            raise ValueError("model complexities must be >= 0")
        for e in self.entries:
            if not e.h_in.cancellative or not e.h_out.cancellative:
                raise ValueError("model operators pair against cancellative Haar functions")
            if e.h_in.cube.ancestor(self.i1) != e.cube:
                raise ValueError(f"input cube {e.h_in.cube} is not {self.i1} generations below {e.cube}")
            if e.h_out.cube.ancestor(self.i2) != e.cube:
                raise ValueError(f"output cube {e.h_out.cube} is not {self.i2} generations below {e.cube}")
            if max(e.h_in.cube.level, e.h_out.cube.level) + 1 > self.axis.max_level:
                raise DepthOverflowError("model entry needs one level of headroom for its Haar factors")

    def entry_budget(self, entry: ModelEntry) -> float:
        """Coefficient size that keeps the equivalent kernel at unit sup norm."""
        return float(np.sqrt(entry.h_in.cube.measure * entry.h_out.cube.measure) / entry.cube.measure)


def apply_model(m: ModelOperatorSpec, field: DiscreteField) -> DiscreteField:
    pos = field.axis_pos(m.axis.axis_id)
    if field.axes[pos] != m.axis:
        raise ValueError("field axis does not match the model operator's axis")
    out = np.zeros_like(field.values)
    for e in m.entries:
        coeff = haar_pairing(field, m.axis.axis_id, e.h_in)
        if callable(e.coeff):
            if not coeff.axes:
                raise ValueError("operator-valued coefficients need at least one remaining axis")
            image = e.coeff(coeff)
            if tuple(a.axis_id for a in image.axes) != tuple(a.axis_id for a in coeff.axes):
                raise ValueError("coefficient operator must preserve the remaining axes")
            vals = image.values
        else:
            arr = np.asarray(e.coeff, float)
            if arr.shape == ():
                vals = coeff.values * float(arr)
            elif arr.shape == (field.lattice.dim, field.lattice.dim):
                vals = coeff.values @ arr.T
            else:
                raise ValueError(f"coefficient shape {arr.shape} does not act on dimension {field.lattice.dim}")
        h = haar_values(m.axis, e.h_out.cube, e.h_out.eta)
        shape = [1] * out.ndim
        shape[pos] = h.size
        out += h.reshape(shape) * np.expand_dims(vals, pos)
    return DiscreteField(field.axes, field.lattice, out)


def model_to_shift(m: ModelOperatorSpec) -> ShiftSpec1P:
    """Exact kernel form: a_K(x, y) = |K| * sum of h_in(y) h_out(x) B over entries in K."""
    axis = m.axis
    mats = [np.asarray(e.coeff, float) for e in m.entries if not callable(e.coeff)]
    if len(mats) < len(m.entries):
        raise TypeError("operator-valued coefficients have no kernel form; use apply_model")
    dims = {arr.shape[0] for arr in mats if arr.shape != ()}
    if len(dims) > 1:
        raise ValueError("matrix coefficients must share one dimension")
    d = dims.pop() if dims else None

    entries: dict = {}
    budget = 0.0
    for e in m.entries:
        measure = e.cube.measure
        cells = _local_cells(axis, e.cube)
        idx = cell_indices(axis, e.cube)
        h_in = haar_values(axis, e.h_in.cube, e.h_in.eta)[idx]
        h_out = haar_values(axis, e.h_out.cube, e.h_out.eta)[idx]
        plate = measure * np.multiply.outer(h_out, h_in)
        arr = np.asarray(e.coeff, float)
        if d is None:
            block = plate * float(arr)
            size = abs(float(arr))
        else:
            mat = arr if arr.shape == (d, d) else float(arr) * np.eye(d)
            block = plate[:, :, None, None] * mat
            size = float(np.linalg.svd(mat, compute_uv=False)[0])
        shape = (cells, cells) if d is None else (cells, cells, d, d)
        if e.cube not in entries:
            entries[e.cube] = np.zeros(shape)
        entries[e.cube] += block
        budget = max(budget, size / m.entry_budget(e))
    family = KernelFamily1P(axis, entries, d)
    return ShiftSpec1P(m.i1, m.i2, family, claimed_ca=budget)


# ---------------------------------------------------------------------------
# random families

def random_kernel_family_1p(axis: GridAxis, max_depth: int, rng: np.random.Generator,
                            d: Optional[int] = None, kind: str = "uniform") -> KernelFamily1P:
    """Kernels on every admissible cube for blocks of depth up to ``max_depth``.

    kind "uniform": scalar values i.i.d. uniform on [-1, 1] (unit sup norm).
    kind "sign_diagonal": diagonal matrices with independent +-1 entries.
    kind "gaussian": dense standard normal matrix values.
    """
    top = axis.max_level - 1 - max_depth
    if top < 0:
        raise DepthOverflowError(f"depth {max_depth} leaves no admissible cubes at max_level {axis.max_level}")
    entries = {}
    for cube in all_cubes(axis, 0, top):
        m = _local_cells(axis, cube)
        if kind == "uniform":
            if d is not None:
                raise ValueError("uniform kernels are scalar; pass d=None")
            entries[cube] = rng.uniform(-1.0, 1.0, (m, m))
        elif kind == "sign_diagonal":
            if d is None:
                raise ValueError("sign_diagonal kernels need a matrix dimension")
            arr = np.zeros((m, m, d, d))
            arr[..., np.arange(d), np.arange(d)] = rng.choice([-1.0, 1.0], (m, m, d))
            entries[cube] = arr
        elif kind == "gaussian":
            if d is None:
                raise ValueError("gaussian kernels need a matrix dimension")
            entries[cube] = rng.standard_normal((m, m, d, d))
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
    return KernelFamily1P(axis, entries, d)


def random_kernel_family_2p(axis_1: GridAxis, axis_2: GridAxis, max_depth_1: int, max_depth_2: int,
                            rng: np.random.Generator, d: Optional[int] = None,
                            kind: str = "uniform") -> KernelFamily2P:
    top_1 = axis_1.max_level - 1 - max_depth_1
    top_2 = axis_2.max_level - 1 - max_depth_2
    if top_1 < 0 or top_2 < 0:
        raise DepthOverflowError("requested depths leave no admissible cube pairs")
    entries = {}
    for cube_1 in all_cubes(axis_1, 0, top_1):
        m1 = _local_cells(axis_1, cube_1)
        for cube_2 in all_cubes(axis_2, 0, top_2):
            m2 = _local_cells(axis_2, cube_2)
            if kind == "uniform":
                if d is not None:
                    raise ValueError("uniform kernels are scalar; pass d=None")
                entries[(cube_1, cube_2)] = rng.uniform(-1.0, 1.0, (m1, m2, m1, m2))
            elif kind == "sign_diagonal":
                if d is None:
                    raise ValueError("sign_diagonal kernels need a matrix dimension")
                arr = np.zeros((m1, m2, m1, m2, d, d))
                arr[..., np.arange(d), np.arange(d)] = rng.choice([-1.0, 1.0], (m1, m2, m1, m2, d))
                entries[(cube_1, cube_2)] = arr
            elif kind == "gaussian":
                if d is None:
                    raise ValueError("gaussian kernels need a matrix dimension")
                entries[(cube_1, cube_2)] = rng.standard_normal((m1, m2, m1, m2, d, d))
            else:
                raise ValueError(f"unknown kernel kind {kind!r}")
    return KernelFamily2P(axis_1, axis_2, entries, d)


# ---------------------------------------------------------------------------
# kernel fixtures

def kernel_family_to_json(family: KernelFamily1P) -> dict:
    return {
        "axis": family.axis.to_json(),
        "d": family.d,
        "cubes": [
            {"cube": cube.to_json(), "values": arr.ravel().tolist()}
            for cube, arr in family.items()
        ],
    }


def kernel_family_from_json(data: dict) -> KernelFamily1P:
    """Load a kernel family from dense values or from partition pieces."""
    axis = GridAxis.from_json(data["axis"])
    d = data.get("d")
    dense = {}
    pieces = {}
    for item in data["cubes"]:
        cube = DyadicCube.from_json(item["cube"])
        if "values" in item:
            m = _local_cells(axis, cube)
            shape = (m, m) if d is None else (m, m, d, d)
            dense[cube] = np.asarray(item["values"], float).reshape(shape)
        else:
            pieces[cube] = [
                (tuple(p["x"]), tuple(p["y"]), p["value"]) for p in item["pieces"]
            ]
    if pieces and dense:
        raise ValueError("mixing dense and piecewise cube entries is not supported")
    if pieces:
        return KernelFamily1P.from_pieces(axis, pieces, d)
    return KernelFamily1P(axis, dense, d)
