"""Reproducible verification suites behind the ``dyadshift`` CLI.

Every suite is a pure function of (config, master seed): trial RNGs are
spawned as ``SeedSequence(seed, spawn_key=counters)``, so re-running a
config reproduces the report bit for bit and trial-level parallelism
could never change results.  Reports carry fixed-schema rows (emitted as
CSV with floats printed via %.17g), a summary dict with fitted
constants, and a pass flag; wall-clock runtime and the environment stamp
live only in the JSON summary and are excluded from the determinism
contract.

Suite names follow the verification ledger; slashes in names are
sanitized to dashes in file names only.
"""

import itertools
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    DiscreteField,
    DyadicCube,
    GridAxis,
    HaarIndex,
    all_cubes,
    cell_indices,
    dense_operator_matrix,
    haar_function,
    root_cube,
)
from .lattice import (
    EXPONENT_MAX,
    EXPONENT_MIN,
    LatticeSpec,
    MixedNormSpec,
)
from .norms import (
    fefferman_stein_ratio,
    key_estimate_ratio,
    operator_norm,
)
from .paraproducts import (
    Pi_full_values,
    Pi_mixed_values,
    Symbol2P,
    partial_2p_values,
    pi_values,
    random_symbol,
    tri_type1_values,
    tri_type2_values,
)
from .randomized import decoupling_estimate, r_bound_estimate
from .shifts import (
    ShiftSpec2P,
    apply_shift_2p,
    nest_biparameter,
    random_kernel_family_2p,
    shift_values_2p,
)
from .stopping import (
    block_values,
    combined_stopping,
    random_unit_bmo,
    stopping_cubes_b,
    verify_sparse,
)

__all__ = [
    "SuiteConfig",
    "SuiteReport",
    "ConfigError",
    "SUITE_NAMES",
    "SCHEMAS",
    "default_config",
    "validate_config",
    "run_suite",
    "fit_growth",
    "emit",
    "report_to_json",
    "report_from_json",
    "suite_slug",
]

SUITE_NAMES = (
    "identity-318",
    "shift-growth",
    "partial-paraproduct-61",
    "paraproduct-rbound-54/55/56",
    "decoupling-32",
    "stopping-51",
    "key-estimate",
    "fefferman-stein",
    "tri-partial-81/82",
)

SCHEMAS = {
    "identity-318": ("i1", "i2", "j1", "j2", "L", "seed", "max_abs_dev", "pass"),
    "shift-growth": ("p", "q", "d", "i1", "i2", "j1", "j2", "L", "seed",
                     "estimate", "model", "ratio", "pass"),
    "partial-paraproduct-61": ("order", "p", "q", "d", "i1", "i2", "symbol", "L",
                               "seed", "estimate", "model", "ratio", "pass"),
    "paraproduct-rbound-54/55/56": ("kind", "p", "r", "d", "size", "L", "seed",
                                    "estimate", "certified", "growth", "pass"),
    "decoupling-32": ("mode", "p", "i", "j", "index", "L", "seed", "ratio",
                      "deviation", "pass"),
    "stopping-51": ("trial", "L", "seed", "generations", "packing_ok", "sparse_ok",
                    "witness_min_frac", "block_max", "telescope_dev", "pass"),
    "key-estimate": ("mode", "trial", "L1", "L2", "seed", "ratio", "pass"),
    "fefferman-stein": ("p", "r", "count", "trial", "L", "seed", "ratio", "pass"),
    "tri-partial-81/82": ("type", "order", "p1", "p2", "p3", "i1", "i2", "j1", "j2",
                          "L", "seed", "estimate", "model", "ratio", "pass"),
}

_AXIS_COUNT = {
    "identity-318": 2,
    "shift-growth": 2,
    "partial-paraproduct-61": 2,
    "paraproduct-rbound-54/55/56": 2,
    "decoupling-32": 1,
    "stopping-51": 1,
    "key-estimate": 2,
    "fefferman-stein": 2,
    "tri-partial-81/82": 3,
}

_DEFAULTS = {
    "identity-318": {
        "levels": (3, 3), "trials": 3, "dims": (1, 2), "exponents": (),
        "shift_values": (0, 1), "sizes": (), "thresholds": {"rel_dev": 1e-11},
        "search": {},
    },
    "shift-growth": {
        "levels": (3, 3), "trials": 1, "dims": (1,),
        "exponents": ((2.0, 2.0), (3.0, 1.5)), "shift_values": (0, 1),
        "sizes": (), "thresholds": {"max_ratio": 32.0},
        "search": {"restarts": 6, "iterations": 60},
    },
    "partial-paraproduct-61": {
        "levels": (3, 3), "trials": 4, "dims": (1,),
        "exponents": ((3.0, 1.5),), "shift_values": (0, 1), "sizes": (),
        "thresholds": {"max_ratio": 16.0},
        "search": {"restarts": 6, "iterations": 60},
    },
    "paraproduct-rbound-54/55/56": {
        "levels": (3, 3), "trials": 1, "dims": (2, 2, 2),
        "exponents": ((2.0, 2.0), (1.5, 3.0)), "shift_values": (), "sizes": (4, 8, 16),
        "thresholds": {"max_growth": 2.0},
        "search": {"budget": 16, "n_max": 6, "restarts": 2, "iterations": 25},
    },
    "decoupling-32": {
        "levels": (4,), "trials": 25, "dims": (1,), "exponents": (1.5, 2.0, 3.0),
        "shift_values": ((0, 0), (1, 0), (1, 1)), "sizes": (),
        "thresholds": {"exact_dev": 1e-10, "band": 100.0},
        "search": {"samples": 2000},
    },
    "stopping-51": {
        "levels": (6,), "trials": 25, "dims": (1,), "exponents": (),
        "shift_values": (), "sizes": (),
        "thresholds": {"block_max": 6.0, "telescope_dev": 1e-12},
        "search": {},
    },
    "key-estimate": {
        "levels": (3, 3), "trials": 50, "dims": (1,), "exponents": (),
        "shift_values": (), "sizes": (), "thresholds": {"max_ratio": 64.0},
        "search": {"coeff_count": 12},
    },
    "fefferman-stein": {
        "levels": (3, 3), "trials": 25, "dims": (1,),
        "exponents": ((2.0, 2.0), (1.5, 4.0), (3.0, 1.5)), "shift_values": (),
        "sizes": (), "thresholds": {"max_ratio": 64.0},
        "search": {"family_size": 4},
    },
    "tri-partial-81/82": {
        "levels": (2, 2, 2), "trials": 1, "dims": (1,),
        "exponents": ((2.0, 2.0, 2.0), (3.0, 2.0, 1.5)), "shift_values": (0, 1),
        "sizes": (), "thresholds": {"max_ratio": 16.0},
        "search": {"restarts": 4, "iterations": 50},
    },
}


class ConfigError(ValueError):
    """Raised when a suite config fails validation; nothing is executed."""


@dataclass(frozen=True)
class SuiteConfig:
    suite: str
    seed: int
    levels: tuple
    trials: int
    dims: tuple
    exponents: tuple
    shift_values: tuple
    sizes: tuple
    thresholds: dict
    search: dict
    out: str = "out"

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "levels": list(self.levels),
            "trials": self.trials,
            "dims": list(self.dims),
            "exponents": [list(e) if isinstance(e, tuple) else e for e in self.exponents],
            "shift_values": [list(v) if isinstance(v, tuple) else v
                             for v in self.shift_values],
            "sizes": list(self.sizes),
            "thresholds": dict(self.thresholds),
            "search": dict(self.search),
            "out": self.out,
        }

    @staticmethod
    def from_json(data: dict) -> "SuiteConfig":
        if "suite" not in data:
            raise ConfigError("config is missing the suite name")
        suite = data["suite"]
        if suite not in SUITE_NAMES:
            raise ConfigError(f"unknown suite {suite!r}")
        if "seed" not in data:
            raise ConfigError("config is missing the mandatory seed")
        merged = dict(_DEFAULTS[suite])
        extra = set(data) - {"suite", "seed", "out"} - set(merged)
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        merged.update({k: v for k, v in data.items() if k in merged})

        def tup(v):
            return tuple(tuple(x) if isinstance(x, (list, tuple)) else x for x in v)

        return SuiteConfig(
            suite=suite,
            seed=data["seed"],
            levels=tuple(merged["levels"]),
            trials=merged["trials"],
            dims=tuple(merged["dims"]),
            exponents=tup(merged["exponents"]),
            shift_values=tup(merged["shift_values"]),
            sizes=tuple(merged["sizes"]),
            thresholds=dict(merged["thresholds"]),
            search=dict(merged["search"]),
            out=data.get("out", "out"),
        )


def default_config(suite: str, seed: int = 0) -> SuiteConfig:
    return SuiteConfig.from_json({"suite": suite, "seed": seed})


def validate_config(cfg: SuiteConfig) -> None:
    """Reject invalid configs before any work happens (no partial output)."""
    if cfg.suite not in SUITE_NAMES:
        raise ConfigError(f"unknown suite {cfg.suite!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    want = _AXIS_COUNT[cfg.suite]
    if len(cfg.levels) != want:
        raise ConfigError(f"{cfg.suite} needs {want} grid level(s), got {len(cfg.levels)}")
    if any(not isinstance(lv, int) or lv < 1 for lv in cfg.levels):
        raise ConfigError("grid levels must be integers >= 1")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if not cfg.dims or any(not isinstance(d, int) or d < 1 or d > 8 for d in cfg.dims):
        raise ConfigError("dims must be integers in 1..8")
    flat = []
    for e in cfg.exponents:
        flat.extend(e if isinstance(e, tuple) else (e,))
    if any(not (EXPONENT_MIN <= p <= EXPONENT_MAX) for p in flat):
        raise ConfigError("exponents outside the supported lattice range")

    depth_cap = min(cfg.levels) - 1
    if cfg.suite in ("identity-318", "shift-growth", "partial-paraproduct-61",
                     "tri-partial-81/82"):
        if not cfg.shift_values:
            raise ConfigError("shift parameter values must be nonempty")
        if any(not isinstance(v, int) or v < 0 for v in cfg.shift_values):
            raise ConfigError("shift parameters must be nonnegative integers")
        if max(cfg.shift_values) > depth_cap:
            raise ConfigError(
                f"shift parameter {max(cfg.shift_values)} exceeds level budget "
                f"{depth_cap} (needs <= L - 1)")
    if cfg.suite == "decoupling-32":
        for pair in cfg.shift_values:
            if not (isinstance(pair, tuple) and len(pair) == 2):
                raise ConfigError("decoupling parameters are (i, j) pairs")
            i, j = pair
            if j > i or j < 0:
                raise ConfigError("decoupling needs 0 <= j <= i")
            if i > cfg.levels[0] - 1:
                raise ConfigError(f"block depth {i} exceeds level budget {cfg.levels[0] - 1}")
        if not cfg.exponents:
            raise ConfigError("decoupling needs at least one exponent")
    if cfg.suite == "paraproduct-rbound-54/55/56":
        if len(cfg.sizes) < 2 or any(s < 1 for s in cfg.sizes) or \
                list(cfg.sizes) != sorted(cfg.sizes):
            raise ConfigError("sizes must be an ascending ladder of family sizes")
        if len(cfg.dims) != 3:
            raise ConfigError("rbound dims has one entry per family kind (pi, Pi, Pi-mixed)")
        cells = 2 ** (cfg.levels[0] + cfg.levels[1])
        for d in cfg.dims[1:]:
            if cfg.sizes[-1] * (cells * d) ** 2 > (1 << 26):
                raise ConfigError("config too large: dense operator family would not fit")
    if cfg.suite in ("shift-growth", "partial-paraproduct-61", "fefferman-stein"):
        if any(not isinstance(e, tuple) or len(e) != 2 for e in cfg.exponents):
            raise ConfigError(f"{cfg.suite} exponents are (p, q) pairs")
    if cfg.suite == "paraproduct-rbound-54/55/56":
        if any(not isinstance(e, tuple) or len(e) != 2 for e in cfg.exponents):
            raise ConfigError("rbound exponents are (p, r) pairs")
    if cfg.suite == "tri-partial-81/82":
        if any(not isinstance(e, tuple) or len(e) != 3 for e in cfg.exponents):
            raise ConfigError("tri-parameter exponents are (p1, p2, p3) triples")
    if not cfg.out:
        raise ConfigError("output directory must be nonempty")


@dataclass
class SuiteReport:
    config: SuiteConfig
    rows: list
    summary: dict
    passed: bool
    environment: dict
    runtime: float
    artifacts: dict = field(default_factory=dict, repr=False)


def _trial_rng(master: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=tuple(key)))


def _trial_seed(master: int, *key) -> int:
    return int(np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1)[0])


def fit_growth(rows: dict, model) -> tuple:
    """Least-squares constant through the origin for estimate ~ C * model.

    ``rows`` maps parameter keys to estimates and ``model`` maps the same
    keys to positive model values.  Returns (C, max pointwise ratio).
    """
    if not rows:
        raise ValueError("no rows to fit")
    if len(rows) < 4:
        raise ValueError("growth fits need at least 4 parameter points")
    keys = sorted(rows)
    e = np.array([float(rows[k]) for k in keys])
    m = np.array([float(model(k)) for k in keys])
    if np.any(m <= 0):
        raise ValueError("growth model must be positive")
    c = float(m @ e / (m @ m))
    return c, float(np.max(e / m))


def _lattice(d: int):
    return None if d == 1 else LatticeSpec(2.0, d)


# ---------------------------------------------------------------------------
# suite executors

def _run_identity(cfg: SuiteConfig):
    ax1 = GridAxis("s", 1, cfg.levels[0])
    ax2 = GridAxis("t", 1, cfg.levels[1])
    tol = cfg.thresholds["rel_dev"]
    rows, all_pass = [], True
    worst_rel_overall = 0.0
    counter = 0
    for i1, i2, j1, j2 in itertools.product(cfg.shift_values, repeat=4):
        worst_abs = worst_rel = 0.0
        for t in range(cfg.trials):
            rng = _trial_rng(cfg.seed, 0, counter)
            counter += 1
            d = int(cfg.dims[t % len(cfg.dims)])
            kern = random_kernel_family_2p(
                ax1, ax2, max(i1, i2), max(j1, j2), rng,
                d=None if d == 1 else d, kind="uniform" if d == 1 else "gaussian")
            spec = ShiftSpec2P(i1, i2, j1, j2, kern,
                               claimed_ca=1.0 if d == 1 else 16.0)
            f = DiscreteField.random((ax1, ax2), _lattice(d), rng)
            direct = apply_shift_2p(spec, f).values
            nested = nest_biparameter(spec, f).values
            dev = float(np.max(np.abs(direct - nested)))
            scale = max(float(np.max(np.abs(nested))), 1e-300)
            worst_abs = max(worst_abs, dev)
            worst_rel = max(worst_rel, dev / scale)
        ok = worst_rel <= tol
        all_pass &= ok
        worst_rel_overall = max(worst_rel_overall, worst_rel)
        rows.append({"i1": i1, "i2": i2, "j1": j1, "j2": j2, "L": cfg.levels[0],
                     "seed": cfg.seed, "max_abs_dev": worst_abs, "pass": ok})
    summary = {"max_rel_dev": worst_rel_overall,
               "rows_passed": sum(r["pass"] for r in rows), "rows_total": len(rows)}
    return rows, summary, all_pass


def _shift_growth_model(key):
    i1, i2, j1, j2 = key
    return (min(i1, i2) + 1) * (min(j1, j2) + 1)


def _run_shift_growth(cfg: SuiteConfig):
    ax1 = GridAxis("s", 1, cfg.levels[0])
    ax2 = GridAxis("t", 1, cfg.levels[1])
    axes = (ax1, ax2)
    restarts = cfg.search.get("restarts", 6)
    iterations = cfg.search.get("iterations", 60)
    rows, summary, all_pass = [], {}, True
    counter = 0
    params = list(itertools.product(cfg.shift_values, repeat=4))
    for p, q in cfg.exponents:
        for d in cfg.dims:
            spec_in = MixedNormSpec(("s", "t"), (p, q), _lattice(int(d)))
            fits = {}
            for key in params:
                i1, i2, j1, j2 = key
                rng = _trial_rng(cfg.seed, 1, counter)
                kern = random_kernel_family_2p(
                    ax1, ax2, max(i1, i2), max(j1, j2), rng,
                    d=None if d == 1 else int(d),
                    kind="uniform" if d == 1 else "sign_diagonal")
                shift = ShiftSpec2P(i1, i2, j1, j2, kern)

                def apply_vals(v, shift=shift):
                    return shift_values_2p(shift, v, 0, 1, 2)

                est = operator_norm(apply_vals, axes, spec_in, restarts=restarts,
                                    iterations=iterations,
                                    seed=_trial_seed(cfg.seed, 1, counter)).estimate
                counter += 1
                model = _shift_growth_model(key)
                ratio = est / model
                ok = ratio <= cfg.thresholds["max_ratio"]
                all_pass &= ok
                fits[key] = est
                rows.append({"p": p, "q": q, "d": d, "i1": i1, "i2": i2,
                             "j1": j1, "j2": j2, "L": cfg.levels[0],
                             "seed": cfg.seed, "estimate": est, "model": model,
                             "ratio": ratio, "pass": ok})
            c, worst = fit_growth(fits, _shift_growth_model)
            summary[f"C(p={p:g},q={q:g},d={d})"] = c
            summary[f"max_ratio(p={p:g},q={q:g},d={d})"] = worst
    return rows, summary, all_pass


def _run_partial_paraproduct(cfg: SuiteConfig):
    ax1 = GridAxis("s", 1, cfg.levels[0])
    ax2 = GridAxis("t", 1, cfg.levels[1])
    axes = (ax1, ax2)
    restarts = cfg.search.get("restarts", 6)
    iterations = cfg.search.get("iterations", 60)
    rows, summary, all_pass = [], {}, True
    counter = 0
    for p, q in cfg.exponents:
        for d in cfg.dims:
            lat = _lattice(int(d))
            specs = {"st": MixedNormSpec(("s", "t"), (p, q), lat),
                     "ts": MixedNormSpec(("t", "s"), (q, p), lat)}
            fits = {name: {} for name in specs}
            for i1, i2 in itertools.product(cfg.shift_values, repeat=2):
                for s in range(cfg.trials):
                    sym = random_symbol("partial_2p", 1.0,
                                        _trial_seed(cfg.seed, 2, counter),
                                        (ax1, ax2), i1=i1, i2=i2)

                    def apply_vals(v, sym=sym):
                        return partial_2p_values(sym, v, 0, 1)

                    model = min(i1, i2) + 1
                    for name, spec_in in specs.items():
                        est = operator_norm(
                            apply_vals, axes, spec_in, restarts=restarts,
                            iterations=iterations,
                            seed=_trial_seed(cfg.seed, 2, counter, 1)).estimate
                        ratio = est / model
                        ok = ratio <= cfg.thresholds["max_ratio"]
                        all_pass &= ok
                        fits[name][(i1, i2, s)] = est
                        rows.append({"order": name, "p": p, "q": q, "d": d,
                                     "i1": i1, "i2": i2, "symbol": s,
                                     "L": cfg.levels[0], "seed": cfg.seed,
                                     "estimate": est, "model": model,
                                     "ratio": ratio, "pass": ok})
                    counter += 1
            for name in specs:
                c, worst = fit_growth(fits[name], lambda k: min(k[0], k[1]) + 1)
                summary[f"C({name},p={p:g},q={q:g},d={d})"] = c
                summary[f"max_ratio({name},p={p:g},q={q:g},d={d})"] = worst
    return rows, summary, all_pass


def _sparse_symbol_2p(axis_1: GridAxis, axis_2: GridAxis, count: int,
                      rng: np.random.Generator) -> Symbol2P:
    """A unit product-BMO symbol supported on ``count`` random rectangles.

    Sparse support keeps the normalization affordable: the lower-bound
    family behind the product-BMO functional grows quadratically in the
    number of touched rectangles.
    """
    pairs = [(HaarIndex(c1, (1,)), HaarIndex(c2, (1,)))
             for c1 in all_cubes(axis_1, 0, axis_1.max_level - 1)
             for c2 in all_cubes(axis_2, 0, axis_2.max_level - 1)]
    take = min(count, len(pairs))
    picked = rng.choice(len(pairs), size=take, replace=False)
    values = rng.standard_normal(take)
    while not np.any(values):
        values = rng.standard_normal(take)
    symbol = Symbol2P(axis_1, axis_2,
                      {pairs[i]: v for i, v in zip(picked, values)})
    return symbol.scaled(1.0 / symbol.product_bmo())


def _run_rbound(cfg: SuiteConfig):
    ax1 = GridAxis("s", 1, cfg.levels[0])
    ax2 = GridAxis("t", 1, cfg.levels[1])
    kinds = ("pi", "Pi", "Pi-mixed")
    n_ops = cfg.sizes[-1]
    coeffs = cfg.search.get("symbol_coeffs", 12)
    rows, summary, all_pass = [], {}, True
    for kind_idx, kind in enumerate(kinds):
        d = int(cfg.dims[kind_idx])
        if kind == "pi":
            axes = (ax1,)
            symbols = [random_symbol("1p", 1.0, _trial_seed(cfg.seed, 3, kind_idx, k),
                                     (ax1,)) for k in range(n_ops)]
            ops = [lambda v, sy=sy: pi_values(sy, v, 0) for sy in symbols]
        else:
            axes = (ax1, ax2)
            engine = Pi_full_values if kind == "Pi" else Pi_mixed_values
            symbols = [_sparse_symbol_2p(ax1, ax2, coeffs,
                                         _trial_rng(cfg.seed, 3, kind_idx, k))
                       for k in range(n_ops)]
            ops = [lambda v, sy=sy, en=engine: en(sy, v, 0, 1) for sy in symbols]
        # densify once; the matrices are norm-spec independent
        mats = [dense_operator_matrix(op, axes, d) for op in ops]
        order = ("s",) if kind == "pi" else ("s", "t")
        for p, r in cfg.exponents:
            lat = LatticeSpec(r, d) if d > 1 else None
            spec = MixedNormSpec(order, (p,) * len(order), lat)
            prev = None
            for size in cfg.sizes:
                report = r_bound_estimate(
                    mats[:size], axes, spec,
                    budget=cfg.search.get("budget", 16),
                    n_max=min(cfg.search.get("n_max", 6), size),
                    restarts=cfg.search.get("restarts", 2),
                    iterations=cfg.search.get("iterations", 25),
                    seed=_trial_seed(cfg.seed, 3, kind_idx, 1000))
                est = report.estimate
                growth = 1.0 if prev is None else est / prev
                prev = est
                ok = growth < cfg.thresholds["max_growth"]
                all_pass &= ok
                rows.append({"kind": kind, "p": p, "r": r, "d": d, "size": size,
                             "L": cfg.levels[0], "seed": cfg.seed, "estimate": est,
                             "certified": report.duality_certified,
                             "growth": growth, "pass": ok})
            summary[f"growth({kind},p={p:g},r={r:g})"] = max(
                row["growth"] for row in rows
                if row["kind"] == kind and row["p"] == p and row["r"] == r)
    return rows, summary, all_pass


def _run_decoupling(cfg: SuiteConfig):
    axis = GridAxis("x", 1, cfg.levels[0])
    samples = cfg.search.get("samples", 2000)
    rows, all_pass = [], True
    band_lo, band_hi = np.inf, 0.0
    for p in cfg.exponents:
        for i, j in cfg.shift_values:
            levels = [lev for lev in range(0, axis.max_level - i)
                      if lev % (i + 1) == (-j) % (i + 1)]
            for lev in levels:
                f = haar_function(axis, HaarIndex(DyadicCube(lev + i, (0,)), (1,)))
                est = decoupling_estimate(f, i, j, float(p), method="exact")
                dev = abs(est.ratio - 1.0)
                ok = dev <= cfg.thresholds["exact_dev"]
                all_pass &= ok
                rows.append({"mode": "single-haar", "p": p, "i": i, "j": j,
                             "index": lev, "L": cfg.levels[0], "seed": cfg.seed,
                             "ratio": est.ratio, "deviation": dev, "pass": ok})
            for t in range(cfg.trials):
                rng = _trial_rng(cfg.seed, 4, t)
                f = DiscreteField.random((axis,), None, rng)
                est = decoupling_estimate(
                    f, i, j, float(p), trials=samples,
                    seed=_trial_seed(cfg.seed, 4, t, 1))
                band = cfg.thresholds["band"]
                ok = (not est.degenerate) and 1.0 / band <= est.ratio <= band
                all_pass &= ok
                band_lo = min(band_lo, est.ratio)
                band_hi = max(band_hi, est.ratio)
                rows.append({"mode": "random", "p": p, "i": i, "j": j, "index": t,
                             "L": cfg.levels[0], "seed": cfg.seed, "ratio": est.ratio,
                             "deviation": abs(est.ratio - 1.0), "pass": ok})
    summary = {"band_low": band_lo if np.isfinite(band_lo) else 1.0,
               "band_high": band_hi if band_hi > 0 else 1.0}
    return rows, summary, all_pass


def _run_stopping(cfg: SuiteConfig):
    axis = GridAxis("x", 1, cfg.levels[0])
    root = root_cube(axis)
    rows, all_pass = [], True
    worst_block = 0.0
    worst_tel = 0.0
    for t in range(cfg.trials):
        rng = _trial_rng(cfg.seed, 5, t)
        b = random_unit_bmo(axis, rng)
        f = DiscreteField((axis,), None,
                          np.abs(rng.standard_normal(axis.cell_count))[:, None])
        fam_b = stopping_cubes_b(b, root)
        packing_ok = True
        for g, gen in enumerate(fam_b.generations[:-1]):
            for j in gen:
                inside = sum(cell_indices(axis, q).size
                             for q in fam_b.generations[g + 1] if j.contains(q))
                packing_ok &= 4 * inside <= cell_indices(axis, j).size
        combined = combined_stopping(b, f, root)
        sparse_ok, witnesses = verify_sparse(combined)
        frac = min(w.size / cell_indices(axis, q).size
                   for q, w in witnesses.items())
        vals = b.values[:, 0]
        block_max = 0.0
        telescope_dev = 0.0
        _, wit_b = verify_sparse(fam_b)
        for j in fam_b.members():
            block = block_values(b, fam_b, j)
            block_max = max(block_max, float(np.max(np.abs(block))))
            cells = wit_b[j]
            ref = vals[cell_indices(axis, j)].mean()
            if cells.size:
                telescope_dev = max(telescope_dev, float(
                    np.max(np.abs(block[cells] - (vals[cells] - ref)))))
        worst_block = max(worst_block, block_max)
        worst_tel = max(worst_tel, telescope_dev)
        ok = (packing_ok and sparse_ok and frac >= 0.5
              and block_max <= cfg.thresholds["block_max"] + 1e-9
              and telescope_dev <= cfg.thresholds["telescope_dev"])
        all_pass &= ok
        rows.append({"trial": t, "L": cfg.levels[0], "seed": cfg.seed,
                     "generations": len(combined.generations),
                     "packing_ok": packing_ok, "sparse_ok": sparse_ok,
                     "witness_min_frac": frac, "block_max": block_max,
                     "telescope_dev": telescope_dev, "pass": ok})
    summary = {"worst_block": worst_block, "worst_telescope_dev": worst_tel}
    return rows, summary, all_pass


def _run_key_estimate(cfg: SuiteConfig):
    ax1 = GridAxis("s", 1, cfg.levels[0])
    ax2 = GridAxis("t", 1, cfg.levels[1])
    # keep draws sparse: the documented lower-bound family grows with the
    # square of the number of touched rectangles
    count = cfg.search.get("coeff_count", 12)
    rows, all_pass = [], True
    shared = {(DyadicCube(1, (0,)), DyadicCube(1, (0,))): 1.0}
    ratio = key_estimate_ratio(shared, shared, ax1, ax2)
    ok = ratio == 1.0
    all_pass &= ok
    rows.append({"mode": "single", "trial": 0, "L1": cfg.levels[0],
                 "L2": cfg.levels[1], "seed": cfg.seed, "ratio": ratio, "pass": ok})
    worst = 0.0
    pairs = [(c1, c2) for c1 in all_cubes(ax1) for c2 in all_cubes(ax2)]
    for t in range(cfg.trials):
        rng = _trial_rng(cfg.seed, 6, t)
        take = min(count, len(pairs))
        lam = {pairs[i]: float(rng.standard_normal())
               for i in rng.choice(len(pairs), size=take, replace=False)}
        weights = {pairs[i]: float(rng.standard_normal())
                   for i in rng.choice(len(pairs), size=take, replace=False)}
        ratio = key_estimate_ratio(lam, weights, ax1, ax2)
        ok = np.isfinite(ratio) and ratio <= cfg.thresholds["max_ratio"]
        all_pass &= ok
        worst = max(worst, ratio)
        rows.append({"mode": "random", "trial": t, "L1": cfg.levels[0],
                     "L2": cfg.levels[1], "seed": cfg.seed, "ratio": ratio,
                     "pass": ok})
    summary = {"max_ratio": worst}
    return rows, summary, all_pass


def _run_fefferman_stein(cfg: SuiteConfig):
    ax1 = GridAxis("s", 1, cfg.levels[0])
    ax2 = GridAxis("t", 1, cfg.levels[1])
    count = cfg.search.get("family_size", 4)
    rows, all_pass = [], True
    worst = 0.0
    for p, r in cfg.exponents:
        spec = MixedNormSpec(("s", "t"), (float(p), float(p)), None)
        for t in range(cfg.trials):
            rng = _trial_rng(cfg.seed, 7, t)
            fields = [DiscreteField.random((ax1, ax2), None, rng)
                      for _ in range(count)]
            ratio = fefferman_stein_ratio(fields, float(r), spec, ("s", "t"))
            ok = ratio >= 1.0 - 1e-12 and ratio <= cfg.thresholds["max_ratio"]
            all_pass &= ok
            worst = max(worst, ratio)
            rows.append({"p": p, "r": r, "count": count, "trial": t,
                         "L": cfg.levels[0], "seed": cfg.seed, "ratio": ratio,
                         "pass": ok})
    summary = {"max_ratio": worst}
    return rows, summary, all_pass


def _run_tri_partial(cfg: SuiteConfig):
    axes = (GridAxis("u", 1, cfg.levels[0]), GridAxis("s", 1, cfg.levels[1]),
            GridAxis("t", 1, cfg.levels[2]))
    ids = tuple(a.axis_id for a in axes)
    orders = (ids, ids[1:] + ids[:1], ids[2:] + ids[:2])
    restarts = cfg.search.get("restarts", 4)
    iterations = cfg.search.get("iterations", 50)
    rows, summary, all_pass = [], {}, True
    counter = 0
    for p1, p2, p3 in cfg.exponents:
        pmap = dict(zip(ids, (p1, p2, p3)))
        d = int(cfg.dims[0])
        lat = _lattice(d)
        for tri_type in ("1-standard", "1-mixed", "2"):
            if tri_type.startswith("1"):
                params = [(i1, i2, 0, 0) for i1, i2
                          in itertools.product(cfg.shift_values, repeat=2)]
            else:
                params = list(itertools.product(cfg.shift_values, repeat=4))
            fits = {o: {} for o in orders}
            for key in params:
                i1, i2, j1, j2 = key
                for s in range(cfg.trials):
                    seed = _trial_seed(cfg.seed, 8, counter)
                    counter += 1
                    if tri_type.startswith("1"):
                        sym = random_symbol("tri_t1", 1.0, seed, axes, i1=i1, i2=i2,
                                            flavor=tri_type.split("-")[1])

                        def apply_vals(v, sym=sym):
                            return tri_type1_values(sym, v, 0, 1, 2)

                        model = min(i1, i2) + 1
                    else:
                        sym = random_symbol("tri_t2", 1.0, seed, axes,
                                            i1=i1, i2=i2, j1=j1, j2=j2)

                        def apply_vals(v, sym=sym):
                            return tri_type2_values(sym, v, 0, 1, 2)

                        model = (min(i1, i2) + 1) * (min(j1, j2) + 1)
                    for order in orders:
                        spec_in = MixedNormSpec(
                            order, tuple(pmap[a] for a in order), lat)
                        est = operator_norm(
                            apply_vals, axes, spec_in, restarts=restarts,
                            iterations=iterations,
                            seed=_trial_seed(cfg.seed, 8, counter, 1)).estimate
                        ratio = est / model
                        ok = ratio <= cfg.thresholds["max_ratio"]
                        all_pass &= ok
                        fits[order][key + (s,)] = est
                        rows.append({"type": tri_type, "order": "".join(order),
                                     "p1": p1, "p2": p2, "p3": p3,
                                     "i1": i1, "i2": i2, "j1": j1, "j2": j2,
                                     "L": cfg.levels[0], "seed": cfg.seed,
                                     "estimate": est, "model": model,
                                     "ratio": ratio, "pass": ok})
            for order in orders:
                if len(fits[order]) >= 4:
                    c, worst = fit_growth(
                        fits[order],
                        lambda k: (min(k[0], k[1]) + 1) * (min(k[2], k[3]) + 1))
                    tag = f"t{tri_type},{''.join(order)},p=({p1:g},{p2:g},{p3:g})"
                    summary[f"C({tag})"] = c
                    summary[f"max_ratio({tag})"] = worst
    return rows, summary, all_pass


_EXECUTORS = {
    "identity-318": _run_identity,
    "shift-growth": _run_shift_growth,
    "partial-paraproduct-61": _run_partial_paraproduct,
    "paraproduct-rbound-54/55/56": _run_rbound,
    "decoupling-32": _run_decoupling,
    "stopping-51": _run_stopping,
    "key-estimate": _run_key_estimate,
    "fefferman-stein": _run_fefferman_stein,
    "tri-partial-81/82": _run_tri_partial,
}


# ---------------------------------------------------------------------------
# reports and emission

def _environment_stamp() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


def run_suite(config: SuiteConfig, out_dir=None, write: bool = True) -> SuiteReport:
    """Validate, execute, and (by default) emit one suite run."""
    validate_config(config)
    start = time.perf_counter()
    rows, summary, passed = _EXECUTORS[config.suite](config)
    report = SuiteReport(config, rows, summary, bool(passed),
                         _environment_stamp(), time.perf_counter() - start)
    if write:
        report.artifacts = emit(report, out_dir or config.out)
    return report


def suite_slug(name: str) -> str:
    return name.replace("/", "-")


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def report_to_json(report: SuiteReport) -> dict:
    return {
        "config": report.config.to_json(),
        "rows": [dict(r) for r in report.rows],
        "summary": dict(report.summary),
        "passed": report.passed,
        "environment": dict(report.environment),
        "runtime_seconds": report.runtime,
    }


def report_from_json(data: dict) -> SuiteReport:
    return SuiteReport(
        config=SuiteConfig.from_json(data["config"]),
        rows=[dict(r) for r in data["rows"]],
        summary=dict(data["summary"]),
        passed=bool(data["passed"]),
        environment=dict(data["environment"]),
        runtime=float(data["runtime_seconds"]),
    )


def emit(report: SuiteReport, out_dir: str) -> dict:
    """Write <slug>.csv, <slug>.json, and <slug>.png under ``out_dir``.

    The CSV is the determinism surface: fixed column order, %.17g floats,
    newline-terminated rows.  The JSON summary additionally carries the
    environment stamp and runtime, which are not covered by the
    byte-identity contract.
    """
    from .figures import render_report

    os.makedirs(out_dir, exist_ok=True)
    slug = suite_slug(report.config.suite)
    schema = SCHEMAS[report.config.suite]
    csv_path = os.path.join(out_dir, f"{slug}.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(schema) + "\n")
        for row in report.rows:
            fh.write(",".join(_csv_cell(row[col]) for col in schema) + "\n")
    json_path = os.path.join(out_dir, f"{slug}.json")
    with open(json_path, "w") as fh:
        json.dump(report_to_json(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    png_path = os.path.join(out_dir, f"{slug}.png")
    render_report(report, png_path)
    return {"csv": csv_path, "json": json_path, "png": png_path}
