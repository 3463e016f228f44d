"""End-to-end acceptance checks.

Thirteen checks, each printing one [PASS]/[FAIL] line with its measured
quantity, its tolerance, and its runtime budget.  They exercise the
public API the way the verification suites do, at the full advertised
sizes; run with -s to watch the lines appear.
"""

import itertools
import time

import numpy as np
import pytest

from dyadshift.grid import (
    DiscreteField,
    DyadicCube,
    GridAxis,
    HaarIndex,
    all_cubes,
    biparam_block,
    cell_indices,
    cubes_at_level,
    haar_values,
    level_average_values,
    martingale_block,
    martingale_difference,
    root_cube,
)
from dyadshift.lattice import LatticeSpec, MixedNormSpec
from dyadshift.norms import bmo_norm, fefferman_stein_ratio, key_estimate_ratio, operator_norm
from dyadshift.paraproducts import random_symbol
from dyadshift.randomized import decoupling_estimate, khintchine_maurey_ratio
from dyadshift.shifts import (
    ModelEntry,
    ModelOperatorSpec,
    ShiftSpec1P,
    ShiftSpec2P,
    apply_model,
    apply_shift_1p,
    model_to_shift,
    nest_values_2p,
    random_kernel_family_1p,
    random_kernel_family_2p,
    shift_values_1p,
    shift_values_2p,
)
from dyadshift.stopping import (
    block_values,
    combined_stopping,
    random_unit_bmo,
    stopping_cubes_b,
    verify_sparse,
)
from dyadshift.suites import SCHEMAS, SuiteConfig, run_suite


def report(name: str, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    flag = "PASS" if ok and elapsed <= budget else "FAIL"
    print(f"[{flag}] {name}: {detail} ({elapsed:.1f}s / budget {budget:.0f}s)")
    assert ok, f"{name}: {detail}"
    assert elapsed <= budget, f"{name} exceeded its runtime budget: {elapsed:.1f}s"


def cancellative_indices(axis):
    out = []
    for level in range(axis.max_level):
        for cube in cubes_at_level(axis, level):
            for mask in range(1, 2 ** axis.n):
                eta = tuple((mask >> (axis.n - 1 - k)) & 1 for k in range(axis.n))
                out.append(HaarIndex(cube, eta))
    return out


# ---------------------------------------------------------------------------

def test_01_haar_calculus_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0

    # orthonormality on a deep 1-d axis and a 2-d axis
    for axis in (GridAxis("x", 1, 5), GridAxis("y", 2, 2)):
        haars = [haar_values(axis, ix.cube, ix.eta) for ix in cancellative_indices(axis)]
        gram = np.array([[float(h1 @ h2) * axis.cell_measure for h2 in haars]
                         for h1 in haars])
        worst = max(worst, float(np.max(np.abs(gram - np.eye(len(haars))))))

    # reconstruction along each axis of a three-axis lattice-valued field
    axes = (GridAxis("x", 1, 3), GridAxis("y", 2, 2), GridAxis("z", 1, 2))
    f = DiscreteField.random(axes, LatticeSpec(2.0, 4), rng)
    for pos, axis in enumerate(axes):
        total = np.zeros_like(f.values)
        for cube in all_cubes(axis, 0, axis.max_level - 1):
            total = total + martingale_difference(f, axis.axis_id, cube).values
        total = total + level_average_values(f.values, pos, axis, 0)
        worst = max(worst, float(np.max(np.abs(total - f.values))))

    # projection onto one cube's Haar span equals the martingale difference
    axis = GridAxis("y", 2, 2)
    g = DiscreteField.random((axis,), None, rng)
    for cube in all_cubes(axis, 0, 1):
        proj = np.zeros_like(g.values[:, 0])
        for mask in range(1, 4):
            eta = (mask >> 1 & 1, mask & 1)
            h = haar_values(axis, cube, eta)
            proj = proj + (g.values[:, 0] @ h) * axis.cell_measure * h
        diff = martingale_difference(g, "y", cube).values[:, 0]
        worst = max(worst, float(np.max(np.abs(proj - diff))))

    # blocks sum the differences at their depth; rectangle blocks compose
    for cube, depth in ((root_cube(axis), 1), (DyadicCube(1, (0, 1)), 0)):
        blk = martingale_block(f, "y", cube, depth).values
        acc = np.zeros_like(blk)
        for fine in cubes_at_level(axis, cube.level + depth):
            if cube.contains(fine):
                acc = acc + martingale_difference(f, "y", fine).values
        worst = max(worst, float(np.max(np.abs(blk - acc))))
    rect = biparam_block(f, "x", DyadicCube(1, (0,)), 1, "y", root_cube(axis), 1).values
    acc = np.zeros_like(rect)
    for cx in cubes_at_level(axes[0], 2):
        if DyadicCube(1, (0,)).contains(cx):
            for cy in cubes_at_level(axis, 1):
                acc = acc + martingale_difference(
                    martingale_difference(f, "x", cx), "y", cy).values
    worst = max(worst, float(np.max(np.abs(rect - acc))))

    # telescoping: summed blocks recover the average gap between levels
    for pos, ax in enumerate(axes):
        acc = np.zeros_like(f.values)
        for level in range(ax.max_level):
            for cube in cubes_at_level(ax, level):
                acc = acc + martingale_block(f, ax.axis_id, cube, 0).values
        gap = f.values - level_average_values(f.values, pos, ax, 0)
        worst = max(worst, float(np.max(np.abs(acc - gap))))

    elapsed = time.perf_counter() - start
    report("haar-calculus", worst <= 1e-12, f"max identity deviation {worst:.2e} <= 1e-12",
           elapsed, 10.0)


def test_02_biparameter_shift_matches_nested_form():
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    ax1, ax2 = GridAxis("s", 1, 3), GridAxis("t", 1, 3)
    worst = 0.0
    pairs_per_tuple = 0
    for i1, i2, j1, j2 in itertools.product((0, 1, 2), repeat=4):
        pairs_per_tuple = 0
        for _ in range(10):
            kern = random_kernel_family_2p(ax1, ax2, max(i1, i2), max(j1, j2), rng)
            spec = ShiftSpec2P(i1, i2, j1, j2, kern)
            v = rng.standard_normal((8, 8, 1, 10))
            direct = shift_values_2p(spec, v, 0, 1, 2)
            nested = nest_values_2p(spec, v, 0, 1, 2)
            scale = max(float(np.max(np.abs(nested))), 1e-300)
            worst = max(worst, float(np.max(np.abs(direct - nested))) / scale)
            pairs_per_tuple += v.shape[-1]
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-11 and pairs_per_tuple >= 100
    report("shift-nesting-identity",
           ok, f"81 parameter tuples x {pairs_per_tuple} pairs, max relative deviation "
               f"{worst:.2e} <= 1e-11", elapsed, 60.0)


def random_model_spec(axis, i1, i2, rng, d=None, density=0.5):
    entries = []
    for cube in all_cubes(axis, 0, axis.max_level - 1 - max(i1, i2)):
        ins = [c for c in cubes_at_level(axis, cube.level + i1) if cube.contains(c)]
        outs = [c for c in cubes_at_level(axis, cube.level + i2) if cube.contains(c)]
        for c_in in ins:
            for c_out in outs:
                if rng.random() < density:
                    coeff = rng.standard_normal((d, d)) if d else float(rng.standard_normal())
                    entries.append(ModelEntry(cube, HaarIndex(c_in, (1,)),
                                              HaarIndex(c_out, (1,)), coeff))
    return ModelOperatorSpec(axis, i1, i2, entries)


def test_03_model_operators_reduce_to_shifts():
    start = time.perf_counter()
    rng = np.random.default_rng(103)
    axis = GridAxis("x", 1, 4)
    worst = 0.0
    for k in range(100):
        i1, i2 = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        d = (None, 2, 3)[k % 3]
        m = random_model_spec(axis, i1, i2, rng, d=d)
        spec = model_to_shift(m)
        lat = None if d is None else LatticeSpec(2.0, d)
        f = DiscreteField.random((axis,), lat, rng)
        dev = np.max(np.abs(apply_shift_1p(spec, f).values - apply_model(m, f).values))
        worst = max(worst, float(dev))
    elapsed = time.perf_counter() - start
    report("model-reduction", worst <= 1e-12,
           f"100 random model specs, max deviation {worst:.2e} <= 1e-12", elapsed, 10.0)


def test_04_normalized_shifts_contract_on_l2():
    start = time.perf_counter()
    rng = np.random.default_rng(104)
    axis = GridAxis("x", 1, 6)
    spec_l2 = MixedNormSpec(("x",), (2.0,), None)
    worst = 0.0
    for i1 in range(4):
        for i2 in range(4):
            for _ in range(50):
                kern = random_kernel_family_1p(axis, max(i1, i2), rng)
                shift = ShiftSpec1P(i1, i2, kern)
                est = operator_norm(lambda v: shift_values_1p(shift, v, 0, 1),
                                    (axis,), spec_l2).estimate
                worst = max(worst, est)
    elapsed = time.perf_counter() - start
    report("l2-contraction", worst <= 1.0 + 1e-9,
           f"800 spectral norms, max {worst:.9f} <= 1 + 1e-9", elapsed, 60.0)


def test_05_shift_norm_growth_is_stable_across_levels():
    start = time.perf_counter()
    fitted = {}
    for L in (3, 4):
        cfg = SuiteConfig.from_json({
            "suite": "shift-growth", "seed": 1005,
            "levels": [L, L], "dims": [1, 4],
            "exponents": [[2.0, 2.0], [3.0, 1.5]],
            "shift_values": [0, 1],
            "search": {"restarts": 4, "iterations": 40},
        })
        rep = run_suite(cfg, write=False)
        assert rep.passed
        fitted[L] = {k: v for k, v in rep.summary.items() if k.startswith("C(")}
    ratios = [fitted[4][k] / fitted[3][k] for k in fitted[3]]
    stable = all(0.5 < r < 2.0 for r in ratios)
    elapsed = time.perf_counter() - start
    report("shift-growth-stability", stable,
           f"fitted C per (p,q,d) moves by {min(ratios):.2f}..{max(ratios):.2f} "
           f"(within 2x) from L=3 to L=4", elapsed, 300.0)


def test_06_partial_paraproduct_bound_in_both_orders():
    start = time.perf_counter()
    fitted = {}
    for trials in (8, 16):
        cfg = SuiteConfig.from_json({
            "suite": "partial-paraproduct-61", "seed": 1006,
            "levels": [3, 3], "trials": trials, "dims": [2],
            "exponents": [[3.0, 1.5]],
            "shift_values": [0, 1, 2],
            "search": {"restarts": 4, "iterations": 40},
        })
        rep = run_suite(cfg, write=False)
        assert rep.passed
        orders = {row["order"] for row in rep.rows}
        assert orders == {"st", "ts"}
        fitted[trials] = {k: v for k, v in rep.summary.items() if k.startswith("C(")}
    ratios = [fitted[16][k] / fitted[8][k] for k in fitted[8]]
    stable = all(0.5 < r < 2.0 for r in ratios)
    elapsed = time.perf_counter() - start
    report("partial-paraproduct-bound", stable,
           f"both axis orders bounded; fitted C moves by {min(ratios):.2f}.."
           f"{max(ratios):.2f} when symbols double 8->16", elapsed, 300.0)


def test_07_paraproduct_family_r_bounds_grow_slowly():
    start = time.perf_counter()
    pr = [[p, r] for p in (1.5, 2.0, 3.0) for r in (1.5, 2.0, 3.0)]
    cfg = SuiteConfig.from_json({
        "suite": "paraproduct-rbound-54/55/56", "seed": 1007,
        "levels": [4, 4], "sizes": [4, 16, 64], "dims": [4, 2, 2],
        "exponents": pr,
        "search": {"budget": 12, "n_max": 6, "restarts": 2, "iterations": 20},
    })
    rep = run_suite(cfg, write=False)
    ladder = {}
    for row in rep.rows:
        ladder.setdefault((row["kind"], row["p"], row["r"]), {})[row["size"]] = row["estimate"]
    total = [v[64] / v[4] for v in ladder.values()]
    ok = rep.passed and all(t < 2.0 for t in total)
    elapsed = time.perf_counter() - start
    report("paraproduct-r-bounds", ok,
           f"family size 4->16->64 for 3 kinds x 9 (p,r): worst total growth "
           f"{max(total):.3f} < 2", elapsed, 300.0)


def test_08_triparameter_bounds_hold_in_all_orders():
    start = time.perf_counter()
    cfg = SuiteConfig.from_json({
        "suite": "tri-partial-81/82", "seed": 1008,
        "levels": [2, 2, 2], "trials": 2,
        "exponents": [[2.0, 2.0, 2.0], [3.0, 2.0, 1.5]],
        "shift_values": [0, 1],
        "search": {"restarts": 4, "iterations": 50},
    })
    rep = run_suite(cfg, write=False)
    assert {row["type"] for row in rep.rows} == {"1-standard", "1-mixed", "2"}
    assert len({row["order"] for row in rep.rows}) == 3
    spread = []
    for tri_type in ("1-standard", "1-mixed", "2"):
        for p_tag in ("2,2,2", "3,2,1.5"):
            cs = [v for k, v in rep.summary.items()
                  if k.startswith(f"C(t{tri_type},") and k.endswith(f"p=({p_tag}))")]
            assert len(cs) == 3
            spread.append(max(cs) / min(cs))
    ok = rep.passed and all(s < 2.0 for s in spread)
    elapsed = time.perf_counter() - start
    report("tri-parameter-bounds", ok,
           f"all 3 axis orders bounded; fitted C spread across orders <= "
           f"{max(spread):.3f} (< 2)", elapsed, 300.0)


def test_09_decoupling_ratio_band():
    start = time.perf_counter()
    pairs = ((0, 0), (1, 0), (1, 1))
    exact_dev = 0.0
    band = {}
    for L in (3, 4):
        axis = GridAxis("x", 1, L)
        for p in (1.5, 2.0, 3.0):
            for i, j in pairs:
                for lev in range(0, axis.max_level - i):
                    if lev % (i + 1) != (-j) % (i + 1):
                        continue
                    h = DiscreteField(
                        (axis,), None,
                        haar_values(axis, DyadicCube(lev + i, (0,)), (1,))[:, None])
                    est = decoupling_estimate(h, i, j, p, method="exact")
                    exact_dev = max(exact_dev, abs(est.ratio - 1.0))
            rng = np.random.default_rng(1009 + L)
            ratios = []
            for t in range(200):
                i, j = pairs[t % 3]
                f = DiscreteField.random((axis,), None, rng)
                est = decoupling_estimate(f, i, j, p, trials=500, seed=1009 + t)
                ratios.append(est.ratio)
            band[(p, L)] = max(max(ratios), 1.0 / min(ratios))
    stable = all(0.5 < band[(p, 4)] / band[(p, 3)] < 2.0 for p in (1.5, 2.0, 3.0))
    ok = exact_dev <= 1e-10 and stable
    elapsed = time.perf_counter() - start
    report("decoupling-band", ok,
           f"single-Haar deviation {exact_dev:.2e} <= 1e-10; 200-draw band constant "
           f"stable within 2x from L=3 to L=4 (max {max(band.values()):.2f})",
           elapsed, 120.0)


def test_10_stopping_families_pack_and_telescope():
    start = time.perf_counter()
    rng = np.random.default_rng(1010)
    axis = GridAxis("x", 1, 6)
    root = root_cube(axis)
    packing_ok = sparse_ok = True
    worst_block = 0.0
    worst_tel = 0.0
    for _ in range(500):
        b = random_unit_bmo(axis, rng)
        assert abs(bmo_norm(b) - 1.0) <= 1e-9
        f = DiscreteField((axis,), None,
                          np.abs(rng.standard_normal(axis.cell_count))[:, None])
        fam = stopping_cubes_b(b, root)
        for g, gen in enumerate(fam.generations[:-1]):
            for j in gen:
                inside = sum(cell_indices(axis, q).size
                             for q in fam.generations[g + 1] if j.contains(q))
                packing_ok &= 4 * inside <= cell_indices(axis, j).size
        combined = combined_stopping(b, f, root)
        ok, witnesses = verify_sparse(combined)
        sparse_ok &= ok
        sparse_ok &= all(2 * w.size >= cell_indices(axis, q).size
                         for q, w in witnesses.items())
        vals = b.values[:, 0]
        _, wit_b = verify_sparse(fam)
        for j in fam.members():
            block = block_values(b, fam, j)
            worst_block = max(worst_block, float(np.max(np.abs(block))))
            cells = wit_b[j]
            if cells.size:
                ref = vals[cell_indices(axis, j)].mean()
                worst_tel = max(worst_tel, float(
                    np.max(np.abs(block[cells] - (vals[cells] - ref)))))
    ok = packing_ok and sparse_ok and worst_block <= 6.0 + 1e-9 and worst_tel <= 1e-12
    elapsed = time.perf_counter() - start
    report("stopping-sparse", ok,
           f"500 draws: packing <= |J|/4 exact, witnesses >= |Q|/2, block sup "
           f"{worst_block:.3f} <= 6, telescoping {worst_tel:.2e} <= 1e-12",
           elapsed, 60.0)


def test_11_coefficient_pairing_ratio_is_normalized_and_stable():
    start = time.perf_counter()
    sweeps = {}
    single_exact = True
    for L in (3, 4):
        ax1, ax2 = GridAxis("s", 1, L), GridAxis("t", 1, L)
        shared = {(DyadicCube(1, (0,)), DyadicCube(1, (0,))): 1.0}
        single_exact &= key_estimate_ratio(shared, shared, ax1, ax2) == 1.0
        pairs = [(c1, c2) for c1 in all_cubes(ax1) for c2 in all_cubes(ax2)]
        rng = np.random.default_rng(1011 + L)
        worst = 0.0
        for _ in range(100):
            idx = rng.choice(len(pairs), size=12, replace=False)
            lam = {pairs[i]: float(rng.standard_normal()) for i in idx}
            wts = {pairs[i]: float(rng.standard_normal()) for i in idx}
            ratio = key_estimate_ratio(lam, wts, ax1, ax2)
            assert np.isfinite(ratio)
            worst = max(worst, ratio)
        sweeps[L] = worst
    stable = 0.5 < sweeps[4] / sweeps[3] < 2.0
    ok = single_exact and stable
    elapsed = time.perf_counter() - start
    report("pairing-ratio", ok,
           f"shared single coefficient gives exactly 1; sweep maxima L=3: "
           f"{sweeps[3]:.3f}, L=4: {sweeps[4]:.3f} (within 2x)", elapsed, 60.0)


def test_12_square_function_and_maximal_comparisons():
    start = time.perf_counter()
    rng = np.random.default_rng(1012)
    km_dev = 0.0
    for k in range(100):
        d = 2 + k % 2
        n = 2 + k % 5
        vecs = list(rng.standard_normal((n, d)))
        km_dev = max(km_dev, abs(
            khintchine_maurey_ratio(vecs, LatticeSpec(2.0, d), mode="exact") - 1.0))
    band_lo, band_hi = np.inf, 0.0
    for r in (1.5, 4.0):
        for _ in range(500):
            n = 2 + int(rng.integers(0, 5))
            vecs = list(rng.standard_normal((n, 3)))
            ratio = khintchine_maurey_ratio(vecs, LatticeSpec(r, 3), mode="exact")
            band_lo, band_hi = min(band_lo, ratio), max(band_hi, ratio)
    ax1, ax2 = GridAxis("s", 1, 3), GridAxis("t", 1, 3)
    fs_lo, fs_hi = np.inf, 0.0
    settings = [((2.0, 2.0), ("s", "t")), ((1.5, 4.0), "s"), ((3.0, 1.5), ("s", "t"))]
    for k in range(500):
        (p, r), over = settings[k % 3]
        fields = [DiscreteField.random((ax1, ax2), None, rng)
                  for _ in range(3 + k % 3)]
        spec = MixedNormSpec(("s", "t"), (p, p), None)
        ratio = fefferman_stein_ratio(fields, r, spec, over)
        fs_lo, fs_hi = min(fs_lo, ratio), max(fs_hi, ratio)
    ok = (km_dev <= 1e-12 and 0.5 <= band_lo and band_hi <= 2.0
          and fs_lo >= 1.0 - 1e-12 and fs_hi <= 16.0)
    elapsed = time.perf_counter() - start
    report("randomized-comparisons", ok,
           f"sign-average ratio deviates {km_dev:.2e} at exponent 2; band "
           f"[{band_lo:.3f}, {band_hi:.3f}] over 1000 draws; maximal-function "
           f"ratios in [{fs_lo:.3f}, {fs_hi:.3f}] over 500 families", elapsed, 120.0)


TINY_CONFIGS = [
    {"suite": "identity-318", "levels": [2, 2], "trials": 1},
    {"suite": "shift-growth", "levels": [2, 2], "dims": [1],
     "exponents": [[2.0, 2.0], [3.0, 1.5]], "shift_values": [0, 1],
     "search": {"restarts": 2, "iterations": 15}},
    {"suite": "partial-paraproduct-61", "levels": [2, 2], "trials": 1,
     "shift_values": [0, 1], "search": {"restarts": 2, "iterations": 15}},
    {"suite": "paraproduct-rbound-54/55/56", "levels": [2, 2], "sizes": [2, 4],
     "dims": [1, 1, 1], "exponents": [[2.0, 2.0]],
     "search": {"budget": 4, "n_max": 3, "restarts": 1, "iterations": 10}},
    {"suite": "decoupling-32", "levels": [3], "trials": 5,
     "search": {"samples": 200}},
    {"suite": "stopping-51", "levels": [4], "trials": 5},
    {"suite": "key-estimate", "levels": [2, 2], "trials": 5},
    {"suite": "fefferman-stein", "trials": 3},
    {"suite": "tri-partial-81/82", "trials": 1, "shift_values": [0, 1],
     "exponents": [[2.0, 2.0, 2.0]], "search": {"restarts": 2, "iterations": 15}},
]


def test_13_suite_reruns_are_byte_identical(tmp_path):
    start = time.perf_counter()
    identical = True
    for data in TINY_CONFIGS:
        cfg = SuiteConfig.from_json({**data, "seed": 1013})
        blobs = []
        for side in ("a", "b"):
            rep = run_suite(cfg, out_dir=str(tmp_path / side))
            with open(rep.artifacts["csv"], "rb") as fh:
                blobs.append(fh.read())
            header = blobs[-1].split(b"\n", 1)[0].decode()
            assert header == ",".join(SCHEMAS[cfg.suite])
        identical &= blobs[0] == blobs[1]
    elapsed = time.perf_counter() - start
    report("suite-determinism", identical,
           "all 9 suites re-ran to byte-identical CSV", elapsed, 120.0)
