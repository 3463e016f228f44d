"""Dyadic axes, Haar calculus, martingale blocks, and field serialization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadshift.grid import (
    DepthOverflowError,
    DiscreteField,
    DyadicCube,
    GridAxis,
    HaarIndex,
    all_cubes,
    biparam_block,
    cell_indices,
    cell_to_cube,
    cubes_at_level,
    decoupling_subgrid,
    field_from_bytes,
    field_from_json,
    field_to_bytes,
    field_to_json,
    haar_function,
    haar_pairing,
    haar_values,
    level_average_values,
    martingale_block,
    martingale_difference,
    mixed_dual_field,
    mixed_norm,
    root_cube,
    subgrid_levels,
)
from dyadshift.lattice import LatticeSpec, MixedNormSpec, scalar_lattice

RNG = np.random.default_rng(31415926)


def interval(level, k):
    return DyadicCube(level, (k,))


# ---------------------------------------------------------------------------
# cubes

def test_cube_geometry():
    c = DyadicCube(2, (3, 1))
    assert c.measure == pytest.approx(2.0 ** -4)
    assert c.parent() == DyadicCube(1, (1, 0))
    assert c.ancestor(2) == DyadicCube(0, (0, 0))
    assert len(c.children()) == 4
    for ch in c.children():
        assert c.contains(ch)
    assert not c.contains(DyadicCube(2, (0, 0)))


def test_cube_index_validation():
    with pytest.raises(ValueError):
        DyadicCube(1, (2,))


def test_cell_indices_interval():
    axis = GridAxis("x", 1, 3)
    got = cell_indices(axis, interval(1, 1))
    assert got.tolist() == [4, 5, 6, 7]


def test_cell_indices_square():
    axis = GridAxis("x", 2, 2)
    got = cell_indices(axis, DyadicCube(1, (1, 0)))
    # cells with first coordinate in {2,3}, second in {0,1}, row-major linear
    assert sorted(got.tolist()) == [8, 9, 12, 13]


def test_cell_to_cube_inverts():
    axis = GridAxis("x", 2, 2)
    for cube in all_cubes(axis):
        for cell in cell_indices(axis, cube):
            assert cell_to_cube(axis, int(cell), cube.level) == cube


def test_cubes_at_level_count():
    axis = GridAxis("x", 2, 2)
    assert len(list(cubes_at_level(axis, 2))) == 16
    assert len(list(all_cubes(axis))) == 1 + 4 + 16


# ---------------------------------------------------------------------------
# Haar functions

def test_haar_top_interval_signs():
    axis = GridAxis("x", 1, 2)
    vals = haar_values(axis, interval(0, 0), (1,))
    assert vals.tolist() == [1.0, 1.0, -1.0, -1.0]


def test_haar_noncancellative_value():
    axis = GridAxis("x", 1, 2)
    vals = haar_values(axis, interval(1, 0), (0,))
    assert vals.tolist() == pytest.approx([np.sqrt(2), np.sqrt(2), 0.0, 0.0])


def test_haar_mean_zero():
    axis = GridAxis("x", 2, 3)
    mu = axis.cell_measure
    for cube in [DyadicCube(0, (0, 0)), DyadicCube(1, (0, 1)), DyadicCube(2, (2, 3))]:
        for eta in [(0, 1), (1, 0), (1, 1)]:
            vals = haar_values(axis, cube, eta)
            assert abs(vals.sum() * mu) < 1e-14


def test_haar_needs_headroom():
    axis = GridAxis("x", 1, 2)
    with pytest.raises(DepthOverflowError):
        haar_values(axis, interval(2, 0), (1,))
    # non-cancellative factor is fine at the finest level
    haar_values(axis, interval(2, 0), (0,))


def haar_system(axis):
    """All cancellative Haar indices available on a truncated axis."""
    out = []
    for cube in all_cubes(axis, max_level=axis.max_level - 1):
        for eta_flat in range(1, 2 ** axis.n):
            eta = tuple((eta_flat >> (axis.n - 1 - k)) & 1 for k in range(axis.n))
            out.append(HaarIndex(cube, eta))
    return out


@pytest.mark.parametrize("axis", [GridAxis("x", 1, 5), GridAxis("x", 2, 2)])
def test_haar_orthonormality(axis):
    system = haar_system(axis)
    mat = np.stack([haar_values(axis, h.cube, h.eta) for h in system])
    gram = mat @ mat.T * axis.cell_measure
    assert np.max(np.abs(gram - np.eye(len(system)))) < 1e-13


@pytest.mark.parametrize("axis", [GridAxis("x", 1, 4), GridAxis("x", 2, 2)])
def test_haar_reconstruction(axis):
    system = haar_system(axis)
    f = RNG.standard_normal(axis.cell_count)
    recon = np.full(axis.cell_count, f.mean())
    for h in system:
        hv = haar_values(axis, h.cube, h.eta)
        recon = recon + (f @ hv) * axis.cell_measure * hv
    assert np.max(np.abs(recon - f)) < 1e-12


# ---------------------------------------------------------------------------
# pairings and fields

def two_axis_field(lat=None, L1=2, L2=2, n1=1, n2=1):
    axes = (GridAxis("x1", n1, L1), GridAxis("x2", n2, L2))
    return DiscreteField.random(axes, lat or scalar_lattice(), RNG)


def test_haar_pairing_tensor_recovers_factor():
    f = two_axis_field()
    axis1, axis2 = f.axes
    h = HaarIndex(interval(1, 0), (1,))
    hv = haar_values(axis1, h.cube, h.eta)
    g = RNG.standard_normal(axis2.cell_count)
    f = DiscreteField(f.axes, f.lattice, np.multiply.outer(hv, g)[..., None])
    got = haar_pairing(f, "x1", h)
    assert got.axes == (axis2,)
    assert np.allclose(got.values[:, 0], g, atol=1e-13)
    # disjoint cube pairs to zero
    other = HaarIndex(interval(1, 1), (1,))
    assert np.max(np.abs(haar_pairing(f, "x1", other).values)) < 1e-13


def test_haar_pairing_matches_brute_force():
    f = two_axis_field(L1=3, L2=2)
    axis1 = f.axes[0]
    h = HaarIndex(interval(1, 1), (1,))
    hv = haar_values(axis1, h.cube, h.eta)
    got = haar_pairing(f, "x1", h)
    # brute-force cellwise quadrature
    want = np.zeros_like(got.values)
    for c1 in range(axis1.cell_count):
        want += f.values[c1] * hv[c1]
    want *= axis1.cell_measure
    assert np.max(np.abs(got.values - want)) < 1e-13


def test_field_shape_validation():
    axes = (GridAxis("x", 1, 2),)
    with pytest.raises(ValueError):
        DiscreteField(axes, scalar_lattice(), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        DiscreteField(
            (GridAxis("a", 1, 1), GridAxis("a", 1, 2)),
            scalar_lattice(),
            np.zeros((2, 4, 1)),
        )


# ---------------------------------------------------------------------------
# martingale calculus

def test_martingale_difference_half_indicator():
    axis = GridAxis("x", 1, 2)
    vals = np.array([1.0, 1.0, 0.0, 0.0])[:, None]
    f = DiscreteField((axis,), scalar_lattice(), vals)
    got = martingale_difference(f, "x", interval(0, 0))
    assert got.values[:, 0].tolist() == [0.5, 0.5, -0.5, -0.5]


def test_martingale_difference_constant_is_zero():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField((axis,), scalar_lattice(), np.ones((8, 1)))
    got = martingale_difference(f, "x", interval(1, 0))
    assert np.max(np.abs(got.values)) == 0.0


def test_martingale_difference_haar_expansion():
    axis = GridAxis("x", 2, 2)
    f = DiscreteField.random((axis,), scalar_lattice(), RNG)
    cube = DyadicCube(1, (0, 1))
    got = martingale_difference(f, "x", cube)
    want = np.zeros_like(f.values)
    for eta in [(0, 1), (1, 0), (1, 1)]:
        coeff = haar_pairing(f, "x", HaarIndex(cube, eta)).values
        want += coeff * haar_values(axis, cube, eta)[:, None]
    assert np.max(np.abs(got.values - want)) < 1e-13


def test_martingale_difference_needs_children():
    axis = GridAxis("x", 1, 2)
    f = DiscreteField.zeros((axis,))
    with pytest.raises(DepthOverflowError):
        martingale_difference(f, "x", interval(2, 0))


def test_block_depth_zero_equals_difference():
    f = two_axis_field(L1=3)
    cube = interval(1, 0)
    a = martingale_block(f, "x1", cube, 0)
    b = martingale_difference(f, "x1", cube)
    assert np.max(np.abs(a.values - b.values)) == 0.0


def test_block_is_sum_of_descendant_differences():
    axis = GridAxis("x", 1, 4)
    f = DiscreteField.random((axis,), scalar_lattice(), RNG)
    K = interval(1, 1)
    got = martingale_block(f, "x", K, 2)
    want = np.zeros_like(f.values)
    for I in cubes_at_level(axis, 3):
        if K.contains(I):
            want += martingale_difference(f, "x", I).values
    assert np.max(np.abs(got.values - want)) < 1e-13


def test_block_annihilates_off_scale_haar():
    axis = GridAxis("x", 1, 4)
    J = interval(2, 1)
    f = haar_function(axis, HaarIndex(J, (1,)))
    # block at depth 1 under the root collects level-1 differences only
    got = martingale_block(f, "x", interval(0, 0), 0)
    assert np.max(np.abs(got.values)) < 1e-13
    kept = martingale_block(f, "x", J.ancestor(1), 1)
    assert np.max(np.abs(kept.values - f.values)) < 1e-13


def test_block_overflow_errors():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField.zeros((axis,))
    with pytest.raises(DepthOverflowError):
        martingale_block(f, "x", interval(1, 0), 2)


def test_block_supported_and_mean_zero():
    axis = GridAxis("x", 2, 3)
    f = DiscreteField.random((axis,), LatticeSpec(2.0, 3), RNG)
    K = DyadicCube(1, (1, 0))
    got = martingale_block(f, "x", K, 1)
    mask = np.zeros(axis.cell_count, bool)
    mask[cell_indices(axis, K)] = True
    assert np.max(np.abs(got.values[~mask])) == 0.0
    assert np.max(np.abs(got.values.sum(axis=0))) < 1e-13


def test_biparam_block_commutes():
    f = two_axis_field(L1=3, L2=3)
    K, V = interval(0, 0), interval(1, 1)
    one = biparam_block(f, "x1", K, 1, "x2", V, 1)
    other = martingale_block(
        martingale_block(f, "x1", K, 1), "x2", V, 1
    )
    assert np.max(np.abs(one.values - other.values)) < 1e-13


def test_biparam_block_fixes_tensor_haar():
    axes = (GridAxis("x1", 1, 2), GridAxis("x2", 1, 2))
    h1 = haar_values(axes[0], interval(1, 0), (1,))
    h2 = haar_values(axes[1], interval(1, 1), (1,))
    f = DiscreteField(axes, scalar_lattice(), np.multiply.outer(h1, h2)[..., None])
    got = biparam_block(f, "x1", interval(1, 0), 0, "x2", interval(1, 1), 0)
    assert np.max(np.abs(got.values - f.values)) < 1e-13


def test_biparam_block_tensor_factorizes():
    axes = (GridAxis("x1", 1, 3), GridAxis("x2", 1, 2))
    g = RNG.standard_normal(8)
    h = RNG.standard_normal(4)
    f = DiscreteField(axes, scalar_lattice(), np.multiply.outer(g, h)[..., None])
    K, V = interval(0, 0), interval(0, 0)
    got = biparam_block(f, "x1", K, 1, "x2", V, 1)
    gf = DiscreteField((axes[0],), scalar_lattice(), g[:, None])
    hf = DiscreteField((axes[1],), scalar_lattice(), h[:, None])
    bg = martingale_block(gf, "x1", K, 1).values[:, 0]
    bh = martingale_block(hf, "x2", V, 1).values[:, 0]
    assert np.max(np.abs(got.values[..., 0] - np.multiply.outer(bg, bh))) < 1e-13


def test_projection_property():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField.random((axis,), scalar_lattice(), RNG)
    I, J = interval(1, 0), interval(1, 1)
    once = martingale_difference(f, "x", I)
    twice = martingale_difference(once, "x", I)
    assert np.max(np.abs(once.values - twice.values)) < 1e-13
    crossed = martingale_difference(once, "x", J)
    assert np.max(np.abs(crossed.values)) < 1e-14


def test_telescoping_to_identity():
    axis = GridAxis("x", 1, 4)
    f = DiscreteField.random((axis,), scalar_lattice(), RNG)
    total = np.full_like(f.values, f.values.mean())
    for cube in all_cubes(axis, max_level=3):
        total = total + martingale_difference(f, "x", cube).values
    assert np.max(np.abs(total - f.values)) < 1e-12


# ---------------------------------------------------------------------------
# decoupling subgrids

def test_subgrid_modulus_one_is_everything():
    axis = GridAxis("x", 1, 3)
    assert subgrid_levels(axis, 0, 0) == [0, 1, 2, 3]


def test_subgrid_levels_skip():
    axis = GridAxis("x", 1, 3)
    assert subgrid_levels(axis, 1, 0) == [0, 2]
    assert subgrid_levels(axis, 1, 1) == [1, 3]


def test_subgrids_partition_levels():
    axis = GridAxis("x", 1, 5)
    for i in range(4):
        seen = []
        for j in range(i + 1):
            seen.extend(subgrid_levels(axis, i, j))
        assert sorted(seen) == list(range(axis.max_level + 1))


def test_subgrid_rejects_bad_j():
    axis = GridAxis("x", 1, 3)
    with pytest.raises(ValueError):
        decoupling_subgrid(axis, 1, 2)


def test_subgrid_constancy_property():
    # within a fixed subgrid, the block of a larger V is constant on a smaller V'
    axis = GridAxis("x", 1, 5)
    i, j = 1, 0
    f = DiscreteField.random((axis,), scalar_lattice(), RNG)
    cubes = decoupling_subgrid(axis, i, j)
    usable = [c for c in cubes if c.level + i + 1 <= axis.max_level]
    for V in usable:
        blocked = martingale_block(f, "x", V, i)
        for Vp in usable:
            if V.contains(Vp) and Vp != V:
                cells = cell_indices(axis, Vp)
                vals = blocked.values[cells, 0]
                assert np.max(np.abs(vals - vals[0])) < 1e-13


# ---------------------------------------------------------------------------
# norms on fields

def test_mixed_norm_requires_all_axes():
    f = two_axis_field()
    with pytest.raises(ValueError):
        mixed_norm(f, MixedNormSpec(("x1",), (2.0,), f.lattice))


def test_mixed_norm_axis_order_permutes():
    f = two_axis_field(L1=2, L2=3)
    spec = MixedNormSpec(("x2", "x1"), (3.0, 1.5), f.lattice)
    got = mixed_norm(f, spec)
    swapped = DiscreteField((f.axes[1], f.axes[0]), f.lattice, np.swapaxes(f.values, 0, 1))
    direct = mixed_norm(swapped, MixedNormSpec(("x2", "x1"), (3.0, 1.5), f.lattice))
    assert got == pytest.approx(direct, rel=1e-13)


def test_mixed_dual_field_pairing():
    f = two_axis_field(lat=LatticeSpec(1.5, 2), L1=2, L2=2)
    spec = MixedNormSpec(("x1", "x2"), (2.0, 3.0), f.lattice)
    norm, g = mixed_dual_field(f, spec)
    mu = f.axes[0].cell_measure * f.axes[1].cell_measure
    pairing = float(np.sum(f.values * g.values) * mu)
    assert pairing == pytest.approx(norm, rel=1e-11)


# ---------------------------------------------------------------------------
# averaging engine against a brute-force oracle

@given(st.integers(min_value=0, max_value=2))
@settings(max_examples=12, deadline=None)
def test_level_average_oracle(level):
    axis = GridAxis("x", 2, 2)
    values = RNG.standard_normal((axis.cell_count, 2))
    got = level_average_values(values, 0, axis, level)
    want = np.empty_like(values)
    for cube in cubes_at_level(axis, level):
        cells = cell_indices(axis, cube)
        want[cells] = values[cells].mean(axis=0)
    assert np.max(np.abs(got - want)) < 1e-13


def test_serialization_json_round_trip():
    f = two_axis_field(lat=LatticeSpec(2.0, 3), L1=2, L2=1)
    again = field_from_json(field_to_json(f))
    assert again.axes == f.axes
    assert np.array_equal(again.values, f.values)


def test_serialization_binary_round_trip():
    f = two_axis_field(lat=LatticeSpec(1.5, 2, LatticeSpec(2.0, 2)), L1=1, L2=2)
    again = field_from_bytes(field_to_bytes(f))
    assert again.lattice == f.lattice
    assert np.array_equal(again.values, f.values)


def test_root_cube_and_integral():
    axis = GridAxis("x", 1, 3)
    assert root_cube(axis) == interval(0, 0)
    f = DiscreteField((axis,), scalar_lattice(), np.ones((8, 1)))
    assert f.integral()[0] == pytest.approx(1.0)
