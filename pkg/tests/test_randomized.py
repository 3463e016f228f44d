import numpy as np
import pytest
from numpy.testing import assert_allclose

from dyadshift.grid import DiscreteField, GridAxis, HaarIndex, haar_function
from dyadshift.lattice import LatticeSpec, MixedNormSpec
from dyadshift.norms import operator_norm
from dyadshift.randomized import (
    DecouplingSample,
    SignAssignment,
    decoupling_estimate,
    decoupling_ratio,
    decoupling_sample,
    exhaustive_sign_matrix,
    khintchine_maurey_ratio,
    r_bound_estimate,
    rademacher_estimate,
    rademacher_norm,
    square_equivalence_ratio,
)
from dyadshift.grid import DyadicCube, cell_indices

RNG = np.random.default_rng(16021765)


def hilbert_spec(axis_ids, dim=1):
    return MixedNormSpec(tuple(axis_ids), (2.0,) * len(axis_ids), LatticeSpec(2.0, dim))


# ---------------------------------------------------------------------------
# sign bookkeeping

def test_exhaustive_sign_matrix_shapes_and_values():
    signs = exhaustive_sign_matrix(4)
    assert signs.shape == (8, 4)
    assert np.all(signs[:, 0] == 1.0)
    assert set(np.unique(signs)) == {-1.0, 1.0}
    assert len({tuple(r) for r in signs}) == 8
    full = exhaustive_sign_matrix(3, fix_first=False)
    assert full.shape == (8, 3)


def test_sign_assignment_validation():
    s = SignAssignment(("a", "b"), (1, -1))
    assert s.as_dict() == {"a": 1, "b": -1}
    with pytest.raises(ValueError):
        SignAssignment(("a",), (2,))
    with pytest.raises(ValueError):
        SignAssignment(("a", "b"), (1,))


# ---------------------------------------------------------------------------
# Rademacher norms

def test_rademacher_single_vector_is_its_norm():
    lat = LatticeSpec(1.5, 3)
    v = RNG.standard_normal(3)
    got = rademacher_norm([v], lat)
    expected = float(np.sum(np.abs(v) ** 1.5) ** (1 / 1.5))
    assert got == pytest.approx(expected, rel=1e-14)


def test_rademacher_orthonormal_vectors_in_l2():
    lat = LatticeSpec(2.0, 4)
    basis = [np.eye(4)[i] for i in range(4)]
    assert rademacher_norm(basis, lat) == pytest.approx(2.0, rel=1e-14)


def test_rademacher_permutation_and_flip_invariance():
    lat = LatticeSpec(3.0, 5)
    vs = [RNG.standard_normal(5) for _ in range(5)]
    base = rademacher_norm(vs, lat)
    assert rademacher_norm(vs[::-1], lat) == pytest.approx(base, rel=1e-13)
    flipped = [-v for v in vs]
    assert rademacher_norm(flipped, lat) == pytest.approx(base, rel=1e-13)


def test_rademacher_zero_vector_and_homogeneity():
    lat = LatticeSpec(1.5, 4)
    vs = [RNG.standard_normal(4) for _ in range(3)]
    base = rademacher_norm(vs, lat)
    assert rademacher_norm(vs + [np.zeros(4)], lat) == pytest.approx(base, rel=1e-14)
    scaled = [2.5 * v for v in vs]
    assert rademacher_norm(scaled, lat) == pytest.approx(2.5 * base, rel=1e-14)


def test_rademacher_on_fields_with_mixed_norm():
    axis = GridAxis("x", 1, 3)
    spec = MixedNormSpec(("x",), (2.0,), LatticeSpec(2.0, 2))
    fields = [DiscreteField.random((axis,), spec.lattice, RNG) for _ in range(4)]
    got = rademacher_norm(fields, spec)
    from dyadshift.grid import mixed_norm
    expected = float(np.sqrt(sum(mixed_norm(f, spec) ** 2 for f in fields)))
    assert got == pytest.approx(expected, rel=1e-12)


def test_rademacher_monte_carlo_within_three_stderr_of_exact():
    lat = LatticeSpec(1.5, 6)
    vs = [RNG.standard_normal(6) for _ in range(6)]
    exact = rademacher_norm(vs, lat, mode="exact")
    mc = rademacher_estimate(vs, lat, mode="monte-carlo", samples=20000, seed=5)
    assert mc.method == "monte-carlo"
    assert mc.stderr is not None and mc.stderr > 0
    assert abs(mc.value - exact) <= 3 * mc.stderr


def test_rademacher_mode_validation():
    lat = LatticeSpec(2.0, 2)
    vs = [np.ones(2)] * 17
    est = rademacher_estimate(vs, lat)
    assert est.method == "monte-carlo"
    with pytest.raises(ValueError):
        rademacher_estimate(vs, lat, mode="exact")
    with pytest.raises(ValueError):
        rademacher_estimate([], lat)


# ---------------------------------------------------------------------------
# Khintchine-Maurey

def test_km_ratio_is_one_for_exponent_two():
    lat = LatticeSpec(2.0, 8)
    vs = [RNG.standard_normal(8) for _ in range(7)]
    assert khintchine_maurey_ratio(vs, lat) == pytest.approx(1.0, abs=1e-12)


def test_km_ratio_single_vector_is_one_for_any_lattice():
    for lat in [LatticeSpec(1.5, 5), LatticeSpec(4.0, 3), LatticeSpec(3.0, 2, LatticeSpec(1.5, 2))]:
        v = RNG.standard_normal(lat.dim)
        assert khintchine_maurey_ratio([v], lat) == pytest.approx(1.0, rel=1e-14)


def test_km_ratio_zero_family_is_degenerate_one():
    lat = LatticeSpec(1.5, 3)
    assert khintchine_maurey_ratio([np.zeros(3), np.zeros(3)], lat) == 1.0


def test_km_ratio_band_for_other_exponents():
    for r in (1.5, 4.0):
        lat = LatticeSpec(r, 6)
        ratios = [khintchine_maurey_ratio([rng_v for rng_v in RNG.standard_normal((5, 6))], lat)
                  for _ in range(40)]
        assert 0.2 < min(ratios) and max(ratios) < 5.0
        assert min(ratios) <= max(ratios)


# ---------------------------------------------------------------------------
# R-boundedness

def diag_apply(diag):
    arr = np.asarray(diag, float)

    def apply(values):
        return values * arr.reshape((arr.size,) + (1,) * (np.ndim(values) - 1))
    return apply


def test_r_bound_identity_family():
    axis = GridAxis("x", 1, 2)
    spec = hilbert_spec(("x",))
    eye = np.eye(axis.cell_count)
    report = r_bound_estimate([eye], (axis,), spec, budget=4, n_max=3,
                              restarts=1, iterations=10, seed=1)
    assert report.estimate == pytest.approx(1.0, rel=1e-9)
    assert report.duality_certified


def test_r_bound_scalar_multiples_attain_the_largest():
    axis = GridAxis("x", 1, 2)
    spec = MixedNormSpec(("x",), (3.0,), None)
    dim = axis.cell_count
    family = [c * np.eye(dim) for c in (0.3, -1.7, 0.9)]
    report = r_bound_estimate(family, (axis,), spec, budget=8, n_max=4,
                              restarts=2, iterations=25, seed=2)
    assert report.estimate <= 1.7 * (1 + 1e-9)
    assert report.estimate == pytest.approx(1.7, rel=1e-6)
    assert report.duality_certified
    assert report.singleton_norms[1] == pytest.approx(1.7, rel=1e-6)


def test_r_bound_dominates_each_member_norm():
    axis = GridAxis("x", 1, 2)
    spec = hilbert_spec(("x",))
    diags = [RNG.standard_normal(axis.cell_count) for _ in range(3)]
    ops = [diag_apply(d) for d in diags]
    report = r_bound_estimate(ops, (axis,), spec, budget=6, n_max=4,
                              restarts=2, iterations=30, seed=3)
    for d in diags:
        exact = operator_norm(diag_apply(d), (axis,), spec).estimate
        assert report.estimate >= exact * (1 - 1e-9)


def test_r_bound_monotone_when_the_extremal_member_stays():
    axis = GridAxis("x", 1, 2)
    spec = MixedNormSpec(("x",), (1.5,), None)
    dim = axis.cell_count
    small = [0.4 * np.eye(dim), -0.9 * np.eye(dim)]
    bigger = small + [0.2 * np.eye(dim)]
    a = r_bound_estimate(small, (axis,), spec, budget=5, n_max=3, seed=7)
    b = r_bound_estimate(bigger, (axis,), spec, budget=5, n_max=3, seed=7)
    assert b.estimate >= a.estimate * (1 - 1e-12)


def test_r_bound_report_serializes():
    axis = GridAxis("x", 1, 1)
    spec = hilbert_spec(("x",))
    report = r_bound_estimate([np.eye(2)], (axis,), spec, budget=2, n_max=2, seed=0)
    data = report.to_json()
    assert data["estimate"] == report.estimate
    assert data["best_selection"] == list(report.best_selection)
    assert isinstance(data["duality_certified"], bool)


def test_r_bound_rejects_empty_family():
    axis = GridAxis("x", 1, 1)
    with pytest.raises(ValueError):
        r_bound_estimate([], (axis,), hilbert_spec(("x",)))


# ---------------------------------------------------------------------------
# decoupling

def test_decoupling_sample_points_live_in_their_cubes():
    axis = GridAxis("x", 1, 3)
    sample = decoupling_sample(axis, seed=11)
    assert sample.axis_id == "x"
    for cube, cell in sample.points.items():
        assert cell in cell_indices(axis, cube)
    again = decoupling_sample(axis, seed=11)
    assert again.points == sample.points


def test_decoupling_single_haar_ratio_is_one():
    axis = GridAxis("x", 1, 4)
    for level in (0, 1, 2):
        f = haar_function(axis, HaarIndex(DyadicCube(level, (0,)), (1,)))
        for p in (1.5, 2.0, 3.0):
            est = decoupling_estimate(f, 0, 0, p)
            assert est.method == "exact"
            assert est.ratio == pytest.approx(1.0, abs=1e-12)


def test_decoupling_constant_input_is_degenerate():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField((axis,), None, np.full((axis.cell_count, 1), 4.2))
    est = decoupling_estimate(f, 1, 0, 2.0)
    assert est.degenerate and est.ratio == 1.0


def test_decoupling_exact_vs_monte_carlo():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField.random((axis,), None, RNG)
    exact = decoupling_estimate(f, 1, 0, 2.0, method="exact")
    mc = decoupling_estimate(f, 1, 0, 2.0, trials=4000, seed=9, method="monte-carlo")
    assert exact.method == "exact" and mc.method == "monte-carlo"
    assert mc.stderr is not None
    assert abs(mc.lhs - exact.lhs) <= 3 * mc.stderr


def test_decoupling_switches_to_monte_carlo_when_many_cubes_are_active():
    axis = GridAxis("x", 1, 4)
    f = DiscreteField.random((axis,), None, RNG)
    est = decoupling_estimate(f, 0, 0, 2.0, trials=500, seed=4)
    assert est.method == "monte-carlo"


def test_decoupling_ratio_band_at_small_levels():
    axis = GridAxis("x", 1, 3)
    for p in (1.5, 2.0, 3.0):
        for i, j in [(0, 0), (1, 0), (1, 1), (2, 1)]:
            f = DiscreteField.random((axis,), None, RNG)
            r = decoupling_ratio(f, i, j, p)
            assert 1e-3 < r < 1e3


def test_decoupling_rejects_bad_parameters():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField.random((axis,), None, RNG)
    with pytest.raises(ValueError):
        decoupling_ratio(f, 1, 2, 2.0)
    with pytest.raises(ValueError):
        decoupling_ratio(f, 1, 0, 0.0)
    two_axis = DiscreteField.random((axis, GridAxis("y", 1, 2)), None, RNG)
    with pytest.raises(ValueError):
        decoupling_ratio(two_axis, 1, 0, 2.0)


def test_decoupling_lattice_valued_input():
    axis = GridAxis("x", 1, 3)
    f = DiscreteField.random((axis,), LatticeSpec(2.0, 3), RNG)
    est = decoupling_estimate(f, 1, 0, 2.0)
    assert est.method == "exact"
    assert est.ratio > 0


# ---------------------------------------------------------------------------
# square-function equivalence

def biparam_axes():
    return GridAxis("x", 1, 3), GridAxis("y", 1, 3)


def test_square_equivalence_single_rectangle_haar_is_one():
    ax1, ax2 = biparam_axes()
    h1 = haar_function(ax1, HaarIndex(DyadicCube(1, (0,)), (1,)))
    h2 = haar_function(ax2, HaarIndex(DyadicCube(2, (3,)), (1,)))
    f = DiscreteField((ax1, ax2), None,
                      np.multiply.outer(h1.values[:, 0], h2.values[:, 0])[:, :, None])
    spec = MixedNormSpec(("x", "y"), (3.0, 1.5), None)
    assert square_equivalence_ratio([f], spec, "full") == pytest.approx(1.0, rel=1e-14)
    assert square_equivalence_ratio([f], spec, "axis-1") == pytest.approx(1.0, rel=1e-14)
    assert square_equivalence_ratio([f], spec, "axis-2") == pytest.approx(1.0, rel=1e-14)


def test_square_equivalence_constants_have_zero_blocks():
    ax1, ax2 = biparam_axes()
    f = DiscreteField((ax1, ax2), None, np.ones((ax1.cell_count, ax2.cell_count, 1)))
    spec = MixedNormSpec(("x", "y"), (2.0, 2.0), None)
    assert square_equivalence_ratio([f], spec, "full") == 0.0


def test_square_equivalence_axis_flavor_detects_tensor_structure():
    ax1, ax2 = biparam_axes()
    h1 = haar_function(ax1, HaarIndex(DyadicCube(0, (0,)), (1,)))
    g = RNG.standard_normal(ax2.cell_count)
    f = DiscreteField((ax1, ax2), None,
                      np.multiply.outer(h1.values[:, 0], g)[:, :, None])
    spec = MixedNormSpec(("x", "y"), (2.0, 2.0), None)
    assert square_equivalence_ratio([f], spec, "axis-1") == pytest.approx(1.0, rel=1e-12)


def test_square_equivalence_band_and_errors():
    ax1, ax2 = biparam_axes()
    spec = MixedNormSpec(("x", "y"), (1.5, 3.0), LatticeSpec(2.0, 2))
    fields = [DiscreteField.random((ax1, ax2), spec.lattice, RNG) for _ in range(3)]
    for flavor in ("full", "axis-1", "axis-2"):
        r = square_equivalence_ratio(fields, spec, flavor)
        assert 0.05 < r < 20.0
    with pytest.raises(ValueError):
        square_equivalence_ratio([], spec)
    zero = [DiscreteField.zeros((ax1, ax2), spec.lattice)]
    with pytest.raises(ValueError):
        square_equivalence_ratio(zero, spec)
    with pytest.raises(ValueError):
        square_equivalence_ratio(fields, spec, "diagonal")
