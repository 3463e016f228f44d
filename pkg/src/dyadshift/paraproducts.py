"""Paraproducts in one, two, and three parameters.

Symbols are finitely supported Haar-coefficient maps; their fields are
derived.  Partial and tri-parameter symbols carry per-entry norm budgets
that are verified at construction: one-parameter entries in dyadic BMO,
bi-parameter entries in the (lower-bound) product-BMO estimate.

Application engines work on raw values arrays with explicit axis positions
and tolerate extra trailing batch axes; field-level wrappers validate and
delegate.  ``random_symbol`` draws i.i.d. coefficients and rescales so the
measured norm hits the requested budget exactly, deterministically per seed.
"""

from typing import Optional, Sequence

import numpy as np

from .grid import (
    DiscreteField,
    DyadicCube,
    GridAxis,
    HaarIndex,
    all_cubes,
    cell_selector,
    cubes_at_level,
    haar_values,
)
from .norms import bmo_norm, product_bmo_estimate

__all__ = [
    "Symbol1P",
    "Symbol2P",
    "PartialSymbol2P",
    "TriSymbolT1",
    "TriSymbolT2",
    "apply_pi",
    "apply_pi_adjoint",
    "apply_Pi_full",
    "apply_Pi_full_adjoint",
    "apply_Pi_mixed",
    "apply_Pi_mixed_adjoint",
    "apply_partial_2p",
    "apply_tri_type1",
    "apply_tri_type2",
    "tri_type2_nested",
    "as_model_operator",
    "random_symbol",
    "symbol_to_json",
    "symbol_from_json",
]


def _haar_sort_key(index: HaarIndex):
    return (index.cube.level, index.cube.index, index.eta)


def _axis_position(field: DiscreteField, axis: GridAxis) -> int:
    try:
        pos = field.axis_pos(axis.axis_id)
    except KeyError as err:
        raise ValueError(f"field has no axis {axis.axis_id!r}") from err
    if field.axes[pos] != axis:
        raise ValueError(f"field axis {axis.axis_id!r} does not match the symbol's axis")
    return pos


def _expand(arr: np.ndarray, ndim: int, placements: dict) -> np.ndarray:
    """Reshape a 1-d array so it broadcasts along ``placements`` positions."""
    shape = [1] * ndim
    for pos, size in placements.items():
        shape[pos] = size
    return arr.reshape(shape)


def _take_cells(values: np.ndarray, axis: GridAxis, cube: DyadicCube, pos: int) -> np.ndarray:
    sel = cell_selector(axis, cube)
    if isinstance(sel, slice):
        return values[(slice(None),) * pos + (sel,)]
    return np.take(values, sel, axis=pos)


# ---------------------------------------------------------------------------
# symbols

class Symbol1P:
    """Finitely supported Haar coefficients of a mean-zero scalar function."""

    def __init__(self, axis: GridAxis, coefficients: dict):
        self.axis = axis
        items = []
        for index, value in coefficients.items():
            if not isinstance(index, HaarIndex):
                raise TypeError("coefficients are keyed by HaarIndex")
            if not index.cancellative:
                raise ValueError("paraproduct symbols use cancellative Haar indices only")
            if index.cube.n != axis.n:
                raise ValueError("coefficient cube dimension does not match the axis")
            haar_values(axis, index.cube, index.eta)  # validates headroom
            items.append((index, float(value)))
        items.sort(key=lambda kv: _haar_sort_key(kv[0]))
        self.coefficients = dict(items)
        by_cube: dict = {}
        for index, value in items:
            arr = by_cube.setdefault(index.cube, np.zeros(axis.cell_count))
            arr += value * haar_values(axis, index.cube, index.eta)
        self._cube_arrays = sorted(by_cube.items(), key=lambda kv: (kv[0].level, kv[0].index))
        total = np.zeros(axis.cell_count)
        for _, arr in self._cube_arrays:
            total += arr
        self._values = total

    def field(self) -> DiscreteField:
        return DiscreteField((self.axis,), None, self._values[:, None].copy())

    def cube_terms(self):
        return self._cube_arrays

    def bmo(self) -> float:
        return bmo_norm(self.field())

    def scaled(self, factor: float) -> "Symbol1P":
        return Symbol1P(self.axis, {k: factor * v for k, v in self.coefficients.items()})


class Symbol2P:
    """Haar coefficients lambda indexed by rectangles I x J (with sign patterns)."""

    def __init__(self, axis_1: GridAxis, axis_2: GridAxis, coefficients: dict):
        if axis_1.axis_id == axis_2.axis_id:
            raise ValueError("the two parameters must live on distinct axes")
        self.axis_1 = axis_1
        self.axis_2 = axis_2
        items = []
        for (i1, i2), value in coefficients.items():
            if not (i1.cancellative and i2.cancellative):
                raise ValueError("paraproduct symbols use cancellative Haar indices only")
            haar_values(axis_1, i1.cube, i1.eta)
            haar_values(axis_2, i2.cube, i2.eta)
            items.append(((i1, i2), float(value)))
        items.sort(key=lambda kv: (_haar_sort_key(kv[0][0]), _haar_sort_key(kv[0][1])))
        self.coefficients = dict(items)

    def rectangle_coefficients(self) -> dict:
        """Aggregate over sign patterns: one value per rectangle, preserving
        the square function (root of the sum of squares)."""
        acc: dict = {}
        for (i1, i2), value in self.coefficients.items():
            key = (i1.cube, i2.cube)
            acc[key] = acc.get(key, 0.0) + value * value
        return {key: float(np.sqrt(v)) for key, v in acc.items()}

    def field(self) -> DiscreteField:
        vals = np.zeros((self.axis_1.cell_count, self.axis_2.cell_count))
        for (i1, i2), value in self.coefficients.items():
            h1 = haar_values(self.axis_1, i1.cube, i1.eta)
            h2 = haar_values(self.axis_2, i2.cube, i2.eta)
            vals += value * np.multiply.outer(h1, h2)
        return DiscreteField((self.axis_1, self.axis_2), None, vals[:, :, None])

    def product_bmo(self) -> float:
        return product_bmo_estimate(self, self.axis_1, self.axis_2)

    def scaled(self, factor: float) -> "Symbol2P":
        return Symbol2P(self.axis_1, self.axis_2,
                        {k: factor * v for k, v in self.coefficients.items()})


BUDGET_SLACK = 1.0 + 1e-9


class PartialSymbol2P:
    """Bi-parameter partial paraproduct data: an outer shift structure whose
    coefficients are one-parameter symbols on the inner axis.

    Each entry (K, h_in, h_out) -> b must satisfy
    bmo(b) <= scale * sqrt(|I1| |I2|) / |K|.
    """

    def __init__(self, outer_axis: GridAxis, inner_axis: GridAxis, i1: int, i2: int,
                 entries: dict, scale: float = 1.0):
        if outer_axis.axis_id == inner_axis.axis_id:
            raise ValueError("outer and inner parameters need distinct axes")
        if i1 < 0 or i2 < 0:
            raise ValueError("complexities must be >= 0")
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        self.outer_axis = outer_axis
        self.inner_axis = inner_axis
        self.i1 = i1
        self.i2 = i2
        self.scale = float(scale)
        items = []
        for (cube, h_in, h_out), symbol in entries.items():
            if h_in.cube.ancestor(i1) != cube or h_out.cube.ancestor(i2) != cube:
                raise ValueError("entry cubes must sit at the stated depths below their cube")
            if not (h_in.cancellative and h_out.cancellative):
                raise ValueError("outer pairings use cancellative Haar indices")
            if symbol.axis != inner_axis:
                raise ValueError("entry symbols must live on the inner axis")
            budget = self.scale * self.entry_budget(cube, h_in.cube, h_out.cube)
            measured = symbol.bmo()
            if measured > budget * BUDGET_SLACK:
                raise ValueError(
                    f"entry bmo {measured:.6g} exceeds its budget {budget:.6g}")
            items.append(((cube, h_in, h_out), symbol))
        items.sort(key=lambda kv: (kv[0][0].level, kv[0][0].index,
                                   _haar_sort_key(kv[0][1]), _haar_sort_key(kv[0][2])))
        self.entries = dict(items)

    @staticmethod
    def entry_budget(cube: DyadicCube, c_in: DyadicCube, c_out: DyadicCube) -> float:
        return float(np.sqrt(c_in.measure * c_out.measure) / cube.measure)


class TriSymbolT1:
    """Tri-parameter partial paraproduct of the first kind: outer shift
    coefficients are full bi-parameter symbols, applied in the standard or
    the mixed pairing per the flavor flag."""

    def __init__(self, outer_axis: GridAxis, inner_axis_1: GridAxis, inner_axis_2: GridAxis,
                 i1: int, i2: int, entries: dict, flavor: str = "standard", scale: float = 1.0):
        if flavor not in ("standard", "mixed"):
            raise ValueError("flavor must be 'standard' or 'mixed'")
        if len({outer_axis.axis_id, inner_axis_1.axis_id, inner_axis_2.axis_id}) != 3:
            raise ValueError("the three parameters need distinct axes")
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        self.outer_axis = outer_axis
        self.inner_axis_1 = inner_axis_1
        self.inner_axis_2 = inner_axis_2
        self.i1 = i1
        self.i2 = i2
        self.flavor = flavor
        self.scale = float(scale)
        items = []
        for (cube, h_in, h_out), symbol in entries.items():
            if h_in.cube.ancestor(i1) != cube or h_out.cube.ancestor(i2) != cube:
                raise ValueError("entry cubes must sit at the stated depths below their cube")
            if symbol.axis_1 != inner_axis_1 or symbol.axis_2 != inner_axis_2:
                raise ValueError("entry symbols must live on the inner axes")
            budget = self.scale * PartialSymbol2P.entry_budget(cube, h_in.cube, h_out.cube)
            measured = symbol.product_bmo()
            if measured > budget * BUDGET_SLACK:
                raise ValueError(
                    f"entry product-bmo {measured:.6g} exceeds its budget {budget:.6g}")
            items.append(((cube, h_in, h_out), symbol))
        items.sort(key=lambda kv: (kv[0][0].level, kv[0][0].index,
                                   _haar_sort_key(kv[0][1]), _haar_sort_key(kv[0][2])))
        self.entries = dict(items)


class TriSymbolT2:
    """Tri-parameter partial paraproduct of the second kind: a bi-parameter
    shift structure on two outer axes whose coefficients are one-parameter
    symbols on the inner axis."""

    def __init__(self, outer_axis_1: GridAxis, outer_axis_2: GridAxis, inner_axis: GridAxis,
                 i1: int, i2: int, j1: int, j2: int, entries: dict, scale: float = 1.0):
        if len({outer_axis_1.axis_id, outer_axis_2.axis_id, inner_axis.axis_id}) != 3:
            raise ValueError("the three parameters need distinct axes")
        if min(i1, i2, j1, j2) < 0:
            raise ValueError("complexities must be >= 0")
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        self.outer_axis_1 = outer_axis_1
        self.outer_axis_2 = outer_axis_2
        self.inner_axis = inner_axis
        self.i1, self.i2, self.j1, self.j2 = i1, i2, j1, j2
        self.scale = float(scale)
        items = []
        for (ck, cv, hi1, hi2, hj1, hj2), symbol in entries.items():
            if hi1.cube.ancestor(i1) != ck or hi2.cube.ancestor(i2) != ck:
                raise ValueError("first-axis cubes must sit at the stated depths")
            if hj1.cube.ancestor(j1) != cv or hj2.cube.ancestor(j2) != cv:
                raise ValueError("second-axis cubes must sit at the stated depths")
            if symbol.axis != inner_axis:
                raise ValueError("entry symbols must live on the inner axis")
            budget = self.scale * self.entry_budget(ck, cv, hi1.cube, hi2.cube, hj1.cube, hj2.cube)
            measured = symbol.bmo()
            if measured > budget * BUDGET_SLACK:
                raise ValueError(
                    f"entry bmo {measured:.6g} exceeds its budget {budget:.6g}")
            items.append((((ck, cv, hi1, hi2, hj1, hj2)), symbol))
        items.sort(key=lambda kv: (kv[0][0].level, kv[0][0].index, kv[0][1].level, kv[0][1].index,
                                   _haar_sort_key(kv[0][2]), _haar_sort_key(kv[0][3]),
                                   _haar_sort_key(kv[0][4]), _haar_sort_key(kv[0][5])))
        self.entries = dict(items)

    @staticmethod
    def entry_budget(ck, cv, ci1, ci2, cj1, cj2) -> float:
        return float(np.sqrt(ci1.measure * ci2.measure * cj1.measure * cj2.measure)
                     / (ck.measure * cv.measure))


# ---------------------------------------------------------------------------
# one-parameter paraproduct

def pi_values(symbol: Symbol1P, values: np.ndarray, pos: int) -> np.ndarray:
    """pi_b f = sum over I of <f>_I Delta_I b, on raw values."""
    axis = symbol.axis
    out = np.zeros_like(values)
    for cube, hvals in symbol.cube_terms():
        avg = _take_cells(values, axis, cube, pos).mean(axis=pos)
        out += _expand(hvals, out.ndim, {pos: hvals.size}) * np.expand_dims(avg, pos)
    return out


def pi_adjoint_values(symbol: Symbol1P, values: np.ndarray, pos: int) -> np.ndarray:
    """pi_b^* f = sum over I of <f, Delta_I b> 1_I / |I|."""
    axis = symbol.axis
    mu = axis.cell_measure
    out = np.zeros_like(values)
    for cube, hvals in symbol.cube_terms():
        pairing = np.tensordot(values, hvals, axes=(pos, 0)) * mu
        indicator = np.zeros(axis.cell_count)
        sel = cell_selector(axis, cube)
        indicator[sel] = 1.0 / cube.measure
        out += _expand(indicator, out.ndim, {pos: indicator.size}) * np.expand_dims(pairing, pos)
    return out


def apply_pi(symbol: Symbol1P, field: DiscreteField) -> DiscreteField:
    pos = _axis_position(field, symbol.axis)
    return DiscreteField(field.axes, field.lattice, pi_values(symbol, field.values, pos))


def apply_pi_adjoint(symbol: Symbol1P, field: DiscreteField) -> DiscreteField:
    pos = _axis_position(field, symbol.axis)
    return DiscreteField(field.axes, field.lattice, pi_adjoint_values(symbol, field.values, pos))


# ---------------------------------------------------------------------------
# full and mixed bi-parameter paraproducts

def Pi_full_values(symbol: Symbol2P, values: np.ndarray, pos_1: int, pos_2: int) -> np.ndarray:
    """Pi f = sum of lambda_{I,J} <f>_{IxJ} h_I (x) h_J."""
    ax1, ax2 = symbol.axis_1, symbol.axis_2
    out = np.zeros_like(values)
    for (i1, i2), value in symbol.coefficients.items():
        vsub = _take_cells(values, ax1, i1.cube, pos_1)
        vsub = _take_cells(vsub, ax2, i2.cube, pos_2)
        avg = vsub.mean(axis=(pos_1, pos_2))
        h1 = haar_values(ax1, i1.cube, i1.eta)
        h2 = haar_values(ax2, i2.cube, i2.eta)
        plate = _expand(h1, out.ndim, {pos_1: h1.size}) * _expand(h2, out.ndim, {pos_2: h2.size})
        out += value * plate * np.expand_dims(avg, (pos_1, pos_2))
    return out


def Pi_mixed_values(symbol: Symbol2P, values: np.ndarray, pos_1: int, pos_2: int) -> np.ndarray:
    """Pi^mixed f = sum of lambda <f, h_I (x) 1_J/|J|> (1_I/|I|) (x) h_J."""
    ax1, ax2 = symbol.axis_1, symbol.axis_2
    out = np.zeros_like(values)
    for (i1, i2), value in symbol.coefficients.items():
        h1 = haar_values(ax1, i1.cube, i1.eta)
        paired = np.tensordot(values, h1, axes=(pos_1, 0)) * ax1.cell_measure
        p2 = pos_2 - 1 if pos_2 > pos_1 else pos_2
        coeff = _take_cells(paired, ax2, i2.cube, p2).mean(axis=p2)
        ind1 = np.zeros(ax1.cell_count)
        ind1[cell_selector(ax1, i1.cube)] = 1.0 / i1.cube.measure
        h2 = haar_values(ax2, i2.cube, i2.eta)
        plate = _expand(ind1, out.ndim, {pos_1: ind1.size}) * _expand(h2, out.ndim, {pos_2: h2.size})
        out += value * plate * np.expand_dims(coeff, (pos_1, pos_2))
    return out


def Pi_mixed_adjoint_values(symbol: Symbol2P, values: np.ndarray, pos_1: int, pos_2: int) -> np.ndarray:
    """The pairing adjoint: sum of lambda <f, (1_I/|I|) (x) h_J> h_I (x) 1_J/|J|."""
    ax1, ax2 = symbol.axis_1, symbol.axis_2
    out = np.zeros_like(values)
    for (i1, i2), value in symbol.coefficients.items():
        avg1 = _take_cells(values, ax1, i1.cube, pos_1).mean(axis=pos_1)
        h2 = haar_values(ax2, i2.cube, i2.eta)
        p2 = pos_2 - 1 if pos_2 > pos_1 else pos_2
        paired = np.tensordot(avg1, h2, axes=(p2, 0)) * ax2.cell_measure
        h1 = haar_values(ax1, i1.cube, i1.eta)
        ind2 = np.zeros(ax2.cell_count)
        ind2[cell_selector(ax2, i2.cube)] = 1.0 / i2.cube.measure
        plate = _expand(h1, out.ndim, {pos_1: h1.size}) * _expand(ind2, out.ndim, {pos_2: ind2.size})
        out += value * plate * np.expand_dims(paired, (pos_1, pos_2))
    return out


def Pi_full_adjoint_values(symbol: Symbol2P, values: np.ndarray, pos_1: int, pos_2: int) -> np.ndarray:
    """Pi^* f = sum of lambda <f, h_I (x) h_J> 1_{IxJ} / |IxJ|."""
    ax1, ax2 = symbol.axis_1, symbol.axis_2
    out = np.zeros_like(values)
    for (i1, i2), value in symbol.coefficients.items():
        h1 = haar_values(ax1, i1.cube, i1.eta)
        h2 = haar_values(ax2, i2.cube, i2.eta)
        paired = np.tensordot(values, h1, axes=(pos_1, 0)) * ax1.cell_measure
        p2 = pos_2 - 1 if pos_2 > pos_1 else pos_2
        paired = np.tensordot(paired, h2, axes=(p2, 0)) * ax2.cell_measure
        ind1 = np.zeros(ax1.cell_count)
        ind1[cell_selector(ax1, i1.cube)] = 1.0 / i1.cube.measure
        ind2 = np.zeros(ax2.cell_count)
        ind2[cell_selector(ax2, i2.cube)] = 1.0 / i2.cube.measure
        plate = _expand(ind1, out.ndim, {pos_1: ind1.size}) * _expand(ind2, out.ndim, {pos_2: ind2.size})
        out += value * plate * np.expand_dims(paired, (pos_1, pos_2))
    return out


def apply_Pi_full(symbol: Symbol2P, field: DiscreteField) -> DiscreteField:
    p1 = _axis_position(field, symbol.axis_1)
    p2 = _axis_position(field, symbol.axis_2)
    return DiscreteField(field.axes, field.lattice, Pi_full_values(symbol, field.values, p1, p2))


def apply_Pi_full_adjoint(symbol: Symbol2P, field: DiscreteField) -> DiscreteField:
    p1 = _axis_position(field, symbol.axis_1)
    p2 = _axis_position(field, symbol.axis_2)
    return DiscreteField(field.axes, field.lattice, Pi_full_adjoint_values(symbol, field.values, p1, p2))


def apply_Pi_mixed(symbol: Symbol2P, field: DiscreteField) -> DiscreteField:
    p1 = _axis_position(field, symbol.axis_1)
    p2 = _axis_position(field, symbol.axis_2)
    return DiscreteField(field.axes, field.lattice, Pi_mixed_values(symbol, field.values, p1, p2))


def apply_Pi_mixed_adjoint(symbol: Symbol2P, field: DiscreteField) -> DiscreteField:
    p1 = _axis_position(field, symbol.axis_1)
    p2 = _axis_position(field, symbol.axis_2)
    return DiscreteField(field.axes, field.lattice, Pi_mixed_adjoint_values(symbol, field.values, p1, p2))


# ---------------------------------------------------------------------------
# partial bi-parameter paraproducts

def partial_2p_values(P: PartialSymbol2P, values: np.ndarray, pos_out: int, pos_in: int) -> np.ndarray:
    out = np.zeros_like(values)
    axis = P.outer_axis
    for (cube, h_in, h_out), symbol in P.entries.items():
        h1 = haar_values(axis, h_in.cube, h_in.eta)
        coeff = np.tensordot(values, h1, axes=(pos_out, 0)) * axis.cell_measure
        pin = pos_in - 1 if pos_in > pos_out else pos_in
        g = pi_values(symbol, coeff, pin)
        h2 = haar_values(axis, h_out.cube, h_out.eta)
        out += _expand(h2, out.ndim, {pos_out: h2.size}) * np.expand_dims(g, pos_out)
    return out


def apply_partial_2p(P: PartialSymbol2P, field: DiscreteField) -> DiscreteField:
    pos_out = _axis_position(field, P.outer_axis)
    pos_in = _axis_position(field, P.inner_axis)
    return DiscreteField(field.axes, field.lattice,
                         partial_2p_values(P, field.values, pos_out, pos_in))


def as_model_operator(P: PartialSymbol2P):
    """The same operator as a model-operator spec with paraproduct coefficients."""
    from .shifts import ModelEntry, ModelOperatorSpec

    def make(symbol):
        def op(coeff_field: DiscreteField) -> DiscreteField:
            pos = coeff_field.axis_pos(P.inner_axis.axis_id)
            return DiscreteField(coeff_field.axes, coeff_field.lattice,
                                 pi_values(symbol, coeff_field.values, pos))
        return op

    entries = [ModelEntry(cube, h_in, h_out, make(symbol))
               for (cube, h_in, h_out), symbol in P.entries.items()]
    return ModelOperatorSpec(P.outer_axis, P.i1, P.i2, tuple(entries))


# ---------------------------------------------------------------------------
# tri-parameter paraproducts

def tri_type1_values(T: TriSymbolT1, values: np.ndarray, pos_out: int,
                     pos_in_1: int, pos_in_2: int) -> np.ndarray:
    out = np.zeros_like(values)
    axis = T.outer_axis
    inner = Pi_full_values if T.flavor == "standard" else Pi_mixed_values
    for (cube, h_in, h_out), symbol in T.entries.items():
        h1 = haar_values(axis, h_in.cube, h_in.eta)
        coeff = np.tensordot(values, h1, axes=(pos_out, 0)) * axis.cell_measure
        q1 = pos_in_1 - 1 if pos_in_1 > pos_out else pos_in_1
        q2 = pos_in_2 - 1 if pos_in_2 > pos_out else pos_in_2
        g = inner(symbol, coeff, q1, q2)
        h2 = haar_values(axis, h_out.cube, h_out.eta)
        out += _expand(h2, out.ndim, {pos_out: h2.size}) * np.expand_dims(g, pos_out)
    return out


def apply_tri_type1(T: TriSymbolT1, field: DiscreteField) -> DiscreteField:
    pos_out = _axis_position(field, T.outer_axis)
    pos_1 = _axis_position(field, T.inner_axis_1)
    pos_2 = _axis_position(field, T.inner_axis_2)
    return DiscreteField(field.axes, field.lattice,
                         tri_type1_values(T, field.values, pos_out, pos_1, pos_2))


def tri_type2_values(T: TriSymbolT2, values: np.ndarray, pos_1: int, pos_2: int,
                     pos_in: int) -> np.ndarray:
    out = np.zeros_like(values)
    ax1, ax2 = T.outer_axis_1, T.outer_axis_2
    for (ck, cv, hi1, hi2, hj1, hj2), symbol in T.entries.items():
        h_i1 = haar_values(ax1, hi1.cube, hi1.eta)
        h_j1 = haar_values(ax2, hj1.cube, hj1.eta)
        coeff = np.tensordot(values, h_i1, axes=(pos_1, 0)) * ax1.cell_measure
        q2 = pos_2 - 1 if pos_2 > pos_1 else pos_2
        coeff = np.tensordot(coeff, h_j1, axes=(q2, 0)) * ax2.cell_measure
        qin = pos_in - (pos_in > pos_1) - (pos_in > pos_2)
        g = pi_values(symbol, coeff, qin)
        h_i2 = haar_values(ax1, hi2.cube, hi2.eta)
        h_j2 = haar_values(ax2, hj2.cube, hj2.eta)
        plate = _expand(h_i2, out.ndim, {pos_1: h_i2.size}) \
            * _expand(h_j2, out.ndim, {pos_2: h_j2.size})
        out += plate * np.expand_dims(g, (pos_1, pos_2))
    return out


def apply_tri_type2(T: TriSymbolT2, field: DiscreteField) -> DiscreteField:
    pos_1 = _axis_position(field, T.outer_axis_1)
    pos_2 = _axis_position(field, T.outer_axis_2)
    pos_in = _axis_position(field, T.inner_axis)
    return DiscreteField(field.axes, field.lattice,
                         tri_type2_values(T, field.values, pos_1, pos_2, pos_in))


def tri_type2_nested(T: TriSymbolT2, field: DiscreteField) -> DiscreteField:
    """Evaluate the type-2 paraproduct as an outer model operator on the
    first axis whose coefficients are bi-parameter partial paraproducts on
    the remaining axes.  Matches apply_tri_type2 through a different
    summation order."""
    from .shifts import ModelEntry, ModelOperatorSpec, apply_model

    grouped: dict = {}
    for (ck, cv, hi1, hi2, hj1, hj2), symbol in T.entries.items():
        grouped.setdefault((ck, hi1, hi2), {})[(cv, hj1, hj2)] = symbol

    def make(key, inner_entries):
        ck, hi1, hi2 = key
        inner_scale = T.scale * PartialSymbol2P.entry_budget(ck, hi1.cube, hi2.cube)
        partial = PartialSymbol2P(T.outer_axis_2, T.inner_axis, T.j1, T.j2,
                                  inner_entries, scale=inner_scale)

        def op(coeff_field: DiscreteField) -> DiscreteField:
            return apply_partial_2p(partial, coeff_field)
        return op

    entries = [ModelEntry(key[0], key[1], key[2], make(key, inner))
               for key, inner in grouped.items()]
    spec = ModelOperatorSpec(T.outer_axis_1, T.i1, T.i2, tuple(entries))
    return apply_model(spec, field)


# ---------------------------------------------------------------------------
# random symbols

def _cancellative_indices(axis: GridAxis):
    out = []
    for level in range(axis.max_level):
        for cube in cubes_at_level(axis, level):
            for mask in range(1, 2 ** axis.n):
                eta = tuple((mask >> (axis.n - 1 - k)) & 1 for k in range(axis.n))
                out.append(HaarIndex(cube, eta))
    return out


def _draw_symbol_1p(axis: GridAxis, budget: float, rng: np.random.Generator) -> Symbol1P:
    indices = _cancellative_indices(axis)
    for _ in range(64):
        values = rng.standard_normal(len(indices))
        if not np.any(values):
            continue
        symbol = Symbol1P(axis, dict(zip(indices, values)))
        measured = symbol.bmo()
        if measured > 0.0:
            return symbol.scaled(budget / measured)
    raise RuntimeError("could not draw a nonzero symbol")


def _draw_symbol_2p(axis_1: GridAxis, axis_2: GridAxis, budget: float,
                    rng: np.random.Generator) -> Symbol2P:
    pairs = [(a, b) for a in _cancellative_indices(axis_1) for b in _cancellative_indices(axis_2)]
    for _ in range(64):
        values = rng.standard_normal(len(pairs))
        if not np.any(values):
            continue
        symbol = Symbol2P(axis_1, axis_2, dict(zip(pairs, values)))
        measured = symbol.product_bmo()
        if measured > 0.0:
            return symbol.scaled(budget / measured)
    raise RuntimeError("could not draw a nonzero symbol")


def _band_triples(axis: GridAxis, i1: int, i2: int, band: Optional[int]):
    """All (K, h_in, h_out) with K in the band and cubes at depths i1, i2."""
    top = axis.max_level - 1 - max(i1, i2)
    if band is not None:
        top = min(top, band)
    if top < 0:
        raise ValueError("axis has no headroom for the requested depths")
    triples = []
    for cube in all_cubes(axis, 0, top):
        ins = [c for c in cubes_at_level(axis, cube.level + i1) if cube.contains(c)]
        outs = [c for c in cubes_at_level(axis, cube.level + i2) if cube.contains(c)]
        for c_in in ins:
            for c_out in outs:
                for m_in in range(1, 2 ** axis.n):
                    eta_in = tuple((m_in >> (axis.n - 1 - k)) & 1 for k in range(axis.n))
                    for m_out in range(1, 2 ** axis.n):
                        eta_out = tuple((m_out >> (axis.n - 1 - k)) & 1 for k in range(axis.n))
                        triples.append((cube, HaarIndex(c_in, eta_in), HaarIndex(c_out, eta_out)))
    return triples


def random_symbol(kind: str, budget: float, seed, axes: Sequence[GridAxis],
                  i1: int = 0, i2: int = 0, j1: int = 0, j2: int = 0,
                  band: Optional[int] = None, flavor: str = "standard"):
    """Draw a symbol of the requested kind whose measured norm equals
    ``budget`` (per entry for the partial and tri-parameter kinds).

    Deterministic per seed; all-zero draws are rejected and redrawn.
    """
    if budget <= 0.0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    if kind == "1p":
        (axis,) = axes
        return _draw_symbol_1p(axis, budget, rng)
    if kind == "2p":
        axis_1, axis_2 = axes
        return _draw_symbol_2p(axis_1, axis_2, budget, rng)
    if kind == "partial_2p":
        outer, inner = axes
        entries = {}
        for cube, h_in, h_out in _band_triples(outer, i1, i2, band):
            entry_budget = budget * PartialSymbol2P.entry_budget(cube, h_in.cube, h_out.cube)
            entries[(cube, h_in, h_out)] = _draw_symbol_1p(inner, entry_budget, rng)
        return PartialSymbol2P(outer, inner, i1, i2, entries, scale=budget)
    if kind == "tri_t1":
        outer, in1, in2 = axes
        entries = {}
        for cube, h_in, h_out in _band_triples(outer, i1, i2, band):
            entry_budget = budget * PartialSymbol2P.entry_budget(cube, h_in.cube, h_out.cube)
            entries[(cube, h_in, h_out)] = _draw_symbol_2p(in1, in2, entry_budget, rng)
        return TriSymbolT1(outer, in1, in2, i1, i2, entries, flavor, scale=budget)
    if kind == "tri_t2":
        out1, out2, inner = axes
        entries = {}
        for ck, hi1, hi2 in _band_triples(out1, i1, i2, band):
            for cv, hj1, hj2 in _band_triples(out2, j1, j2, band):
                entry_budget = budget * TriSymbolT2.entry_budget(
                    ck, cv, hi1.cube, hi2.cube, hj1.cube, hj2.cube)
                entries[(ck, cv, hi1, hi2, hj1, hj2)] = _draw_symbol_1p(inner, entry_budget, rng)
        return TriSymbolT2(out1, out2, inner, i1, i2, j1, j2, entries, scale=budget)
    raise ValueError(f"unknown symbol kind {kind!r}")


# ---------------------------------------------------------------------------
# fixtures

def _haar_to_json(index: HaarIndex) -> dict:
    return {"cube": index.cube.to_json(), "eta": list(index.eta)}


def _haar_from_json(data: dict) -> HaarIndex:
    return HaarIndex(DyadicCube.from_json(data["cube"]), tuple(data["eta"]))


def symbol_to_json(symbol) -> dict:
    if isinstance(symbol, Symbol1P):
        return {
            "kind": "1p",
            "axis": symbol.axis.to_json(),
            "coefficients": [
                {"index": _haar_to_json(k), "value": v} for k, v in symbol.coefficients.items()
            ],
        }
    if isinstance(symbol, Symbol2P):
        return {
            "kind": "2p",
            "axis_1": symbol.axis_1.to_json(),
            "axis_2": symbol.axis_2.to_json(),
            "coefficients": [
                {"index_1": _haar_to_json(k1), "index_2": _haar_to_json(k2), "value": v}
                for (k1, k2), v in symbol.coefficients.items()
            ],
        }
    if isinstance(symbol, PartialSymbol2P):
        return {
            "kind": "partial_2p",
            "outer_axis": symbol.outer_axis.to_json(),
            "inner_axis": symbol.inner_axis.to_json(),
            "i1": symbol.i1, "i2": symbol.i2, "scale": symbol.scale,
            "entries": [
                {"cube": cube.to_json(), "h_in": _haar_to_json(h_in),
                 "h_out": _haar_to_json(h_out), "symbol": symbol_to_json(inner)}
                for (cube, h_in, h_out), inner in symbol.entries.items()
            ],
        }
    if isinstance(symbol, TriSymbolT1):
        return {
            "kind": "tri_t1",
            "outer_axis": symbol.outer_axis.to_json(),
            "inner_axis_1": symbol.inner_axis_1.to_json(),
            "inner_axis_2": symbol.inner_axis_2.to_json(),
            "i1": symbol.i1, "i2": symbol.i2, "flavor": symbol.flavor, "scale": symbol.scale,
            "entries": [
                {"cube": cube.to_json(), "h_in": _haar_to_json(h_in),
                 "h_out": _haar_to_json(h_out), "symbol": symbol_to_json(inner)}
                for (cube, h_in, h_out), inner in symbol.entries.items()
            ],
        }
    if isinstance(symbol, TriSymbolT2):
        return {
            "kind": "tri_t2",
            "outer_axis_1": symbol.outer_axis_1.to_json(),
            "outer_axis_2": symbol.outer_axis_2.to_json(),
            "inner_axis": symbol.inner_axis.to_json(),
            "i1": symbol.i1, "i2": symbol.i2, "j1": symbol.j1, "j2": symbol.j2,
            "scale": symbol.scale,
            "entries": [
                {"cube_1": ck.to_json(), "cube_2": cv.to_json(),
                 "h_i1": _haar_to_json(hi1), "h_i2": _haar_to_json(hi2),
                 "h_j1": _haar_to_json(hj1), "h_j2": _haar_to_json(hj2),
                 "symbol": symbol_to_json(inner)}
                for (ck, cv, hi1, hi2, hj1, hj2), inner in symbol.entries.items()
            ],
        }
    raise TypeError(f"not a symbol: {type(symbol).__name__}")


def symbol_from_json(data: dict):
    kind = data["kind"]
    if kind == "1p":
        axis = GridAxis.from_json(data["axis"])
        return Symbol1P(axis, {
            _haar_from_json(c["index"]): c["value"] for c in data["coefficients"]
        })
    if kind == "2p":
        ax1 = GridAxis.from_json(data["axis_1"])
        ax2 = GridAxis.from_json(data["axis_2"])
        return Symbol2P(ax1, ax2, {
            (_haar_from_json(c["index_1"]), _haar_from_json(c["index_2"])): c["value"]
            for c in data["coefficients"]
        })
    if kind == "partial_2p":
        outer = GridAxis.from_json(data["outer_axis"])
        inner = GridAxis.from_json(data["inner_axis"])
        entries = {
            (DyadicCube.from_json(e["cube"]), _haar_from_json(e["h_in"]),
             _haar_from_json(e["h_out"])): symbol_from_json(e["symbol"])
            for e in data["entries"]
        }
        return PartialSymbol2P(outer, inner, data["i1"], data["i2"], entries,
                               scale=data.get("scale", 1.0))
    if kind == "tri_t1":
        outer = GridAxis.from_json(data["outer_axis"])
        in1 = GridAxis.from_json(data["inner_axis_1"])
        in2 = GridAxis.from_json(data["inner_axis_2"])
        entries = {
            (DyadicCube.from_json(e["cube"]), _haar_from_json(e["h_in"]),
             _haar_from_json(e["h_out"])): symbol_from_json(e["symbol"])
            for e in data["entries"]
        }
        return TriSymbolT1(outer, in1, in2, data["i1"], data["i2"], entries, data["flavor"],
                           scale=data.get("scale", 1.0))
    if kind == "tri_t2":
        out1 = GridAxis.from_json(data["outer_axis_1"])
        out2 = GridAxis.from_json(data["outer_axis_2"])
        inner = GridAxis.from_json(data["inner_axis"])
        entries = {
            (DyadicCube.from_json(e["cube_1"]), DyadicCube.from_json(e["cube_2"]),
             _haar_from_json(e["h_i1"]), _haar_from_json(e["h_i2"]),
             _haar_from_json(e["h_j1"]), _haar_from_json(e["h_j2"])): symbol_from_json(e["symbol"])
            for e in data["entries"]
        }
        return TriSymbolT2(out1, out2, inner, data["i1"], data["i2"], data["j1"], data["j2"],
                           entries, scale=data.get("scale", 1.0))
    raise ValueError(f"unknown symbol kind {kind!r}")
