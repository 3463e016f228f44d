"""Random-sign diagnostics: Rademacher-sum norms, lattice square-function
equivalence ratios, an R-boundedness search with dual certification, and
martingale-block decoupling ratios.

Every quantity here is a lower-bound estimator obtained by enumeration,
sampling, or ascent.  Sign sums are exhausted exactly up to
``SIGN_EXHAUSTIVE_MAX`` vectors (with the first sign pinned to +1, since
all the norms are even); beyond that Monte-Carlo with at least
``MC_MIN_SAMPLES`` samples and a recorded standard error takes over.
Degenerate 0/0 ratios are reported as 1 with a flag rather than raised,
so parameter sweeps stay total.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import (
    DiscreteField,
    GridAxis,
    all_cubes,
    cell_indices,
    cubes_at_level,
    dense_operator_matrix,
    level_average_values,
    martingale_block,
    mixed_norm,
    subgrid_levels,
)
from .lattice import (
    LatticeSpec,
    MixedNormSpec,
    lattice_norm,
    mixed_conjugate,
    mixed_dual_array,
    mixed_norm_array,
)

__all__ = [
    "SIGN_EXHAUSTIVE_MAX",
    "MC_MIN_SAMPLES",
    "SignAssignment",
    "exhaustive_sign_matrix",
    "RademacherEstimate",
    "rademacher_estimate",
    "rademacher_norm",
    "khintchine_maurey_ratio",
    "RBoundReport",
    "r_bound_estimate",
    "DecouplingSample",
    "decoupling_sample",
    "DecouplingEstimate",
    "decoupling_estimate",
    "decoupling_ratio",
    "square_equivalence_ratio",
]

SIGN_EXHAUSTIVE_MAX = 16
MC_MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class SignAssignment:
    """A total map from an index set to {-1, +1}."""

    keys: tuple
    signs: tuple

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.keys) != len(self.signs):
            raise ValueError("one sign per key is required")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.signs))


def exhaustive_sign_matrix(n: int, fix_first: bool = True) -> np.ndarray:
    """All sign patterns on n slots as a (+1/-1)-matrix, one row each.

    With ``fix_first`` the first slot is pinned to +1, halving the row
    count; valid whenever the evaluated functional is even in the signs.
    """
    if n < 1:
        raise ValueError("need at least one slot")
    free = n - 1 if fix_first else n
    codes = np.arange(2 ** free, dtype=np.uint32)
    bits = ((codes[:, None] >> np.arange(free, dtype=np.uint32)) & 1).astype(float)
    signs = 1.0 - 2.0 * bits
    if fix_first:
        signs = np.concatenate([np.ones((signs.shape[0], 1)), signs], axis=1)
    return signs


# ---------------------------------------------------------------------------
# Rademacher norms

@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    method: str
    patterns: int
    stderr: Optional[float] = None
    seed: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "patterns": self.patterns,
            "stderr": self.stderr,
            "seed": self.seed,
        }


def _stack_and_norm(vectors, space):
    """Stack the inputs and build a batched norm on the stacked layout."""
    first = vectors[0]
    if isinstance(first, DiscreteField):
        if not isinstance(space, MixedNormSpec):
            raise TypeError("fields need a MixedNormSpec")
        axes = first.axes
        for v in vectors:
            if not isinstance(v, DiscreteField) or v.axes != axes or v.lattice != first.lattice:
                raise ValueError("all fields must share axes and lattice")
        if set(space.axis_order) != {a.axis_id for a in axes}:
            raise ValueError("mixed norm spec must name exactly the field axes")
        perm = [first.axis_pos(a) for a in space.axis_order] + [first.k]
        measures = [first.axis(a).cell_measure for a in space.axis_order]
        stacked = np.stack([v.values for v in vectors])

        def norm_fn(batch: np.ndarray) -> np.ndarray:
            moved = np.transpose(batch, [0] + [1 + p for p in perm])
            return mixed_norm_array(moved, space.exponents, measures, space.lattice)

        return stacked, norm_fn

    if not isinstance(space, LatticeSpec):
        raise TypeError("plain vectors need a LatticeSpec")
    stacked = np.stack([np.asarray(v, float) for v in vectors])
    if stacked.ndim != 2 or stacked.shape[1] != space.dim:
        raise ValueError(f"vectors must be 1-d of lattice dimension {space.dim}")

    def norm_fn(batch: np.ndarray) -> np.ndarray:
        return lattice_norm(batch, space)

    return stacked, norm_fn


def rademacher_estimate(vectors: Sequence, space, mode: str = "auto",
                        samples: int = MC_MIN_SAMPLES, seed: int = 0) -> RademacherEstimate:
    """(E |sum_i eps_i e_i|^2)^{1/2} over independent uniform signs.

    Exact enumeration for up to SIGN_EXHAUSTIVE_MAX vectors, Monte-Carlo
    with a recorded standard error beyond that (or on request).
    """
    if len(vectors) < 1:
        raise ValueError("need at least one vector")
    n = len(vectors)
    if mode not in ("auto", "exact", "monte-carlo"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "auto":
        mode = "exact" if n <= SIGN_EXHAUSTIVE_MAX else "monte-carlo"
    if mode == "exact" and n > SIGN_EXHAUSTIVE_MAX:
        raise ValueError(f"exact enumeration capped at {SIGN_EXHAUSTIVE_MAX} vectors")

    stacked, norm_fn = _stack_and_norm(vectors, space)
    flat = stacked.reshape(n, -1)
    if mode == "exact":
        signs = exhaustive_sign_matrix(n)
        combos = (signs @ flat).reshape((signs.shape[0],) + stacked.shape[1:])
        second_moment = float(np.mean(norm_fn(combos) ** 2))
        return RademacherEstimate(float(np.sqrt(second_moment)), "exact", signs.shape[0])

    samples = max(int(samples), MC_MIN_SAMPLES)
    rng = np.random.default_rng(seed)
    chunk = 4096
    squares = np.empty(samples)
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        signs = rng.integers(0, 2, size=(take, n)).astype(float) * 2.0 - 1.0
        combos = (signs @ flat).reshape((take,) + stacked.shape[1:])
        squares[done:done + take] = norm_fn(combos) ** 2
        done += take
    mean_sq = float(np.mean(squares))
    value = float(np.sqrt(mean_sq))
    se_mean = float(np.std(squares, ddof=1) / np.sqrt(samples))
    stderr = se_mean / (2.0 * value) if value > 0 else se_mean
    return RademacherEstimate(value, "monte-carlo", samples, stderr, seed)


def rademacher_norm(vectors: Sequence, space, mode: str = "auto",
                    samples: int = MC_MIN_SAMPLES, seed: int = 0) -> float:
    return rademacher_estimate(vectors, space, mode, samples, seed).value


def khintchine_maurey_ratio(vectors, lattice: LatticeSpec, mode: str = "auto",
                            samples: int = MC_MIN_SAMPLES, seed: int = 0) -> float:
    """Rademacher norm over the lattice norm of the square function.

    Equals 1 exactly when every lattice exponent is 2.
    """
    arr = np.stack([np.asarray(v, float) for v in vectors])
    lhs = rademacher_norm(list(arr), lattice, mode, samples, seed)
    rhs = float(lattice_norm(np.sqrt((arr ** 2).sum(axis=0)), lattice))
    if rhs == 0.0:
        if lhs > 1e-14:
            raise ArithmeticError("square function vanished but the sign sum did not")
        return 1.0
    return lhs / rhs


# ---------------------------------------------------------------------------
# R-boundedness search

@dataclass
class RBoundReport:
    estimate: float
    n_max: int
    selections_tried: int
    restarts: int
    iterations: int
    duality_certified: bool
    certificate_gap: float
    best_selection: tuple
    singleton_norms: tuple
    seed: int

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "n_max": self.n_max,
            "selections_tried": self.selections_tried,
            "restarts": self.restarts,
            "iterations": self.iterations,
            "duality_certified": self.duality_certified,
            "certificate_gap": self.certificate_gap,
            "best_selection": list(self.best_selection),
            "singleton_norms": list(self.singleton_norms),
            "seed": self.seed,
        }


class _SpecContext:
    """Flat-vector norms, duals, and pairings for fields on fixed axes."""

    def __init__(self, axes: Sequence[GridAxis], spec: MixedNormSpec):
        self.axes = tuple(axes)
        self.spec = spec
        self.shape = tuple(a.cell_count for a in axes) + (spec.lattice.dim,)
        self.dim = int(np.prod(self.shape))
        order = {a.axis_id: i for i, a in enumerate(self.axes)}
        if set(spec.axis_order) != set(order):
            raise ValueError("mixed norm spec must name exactly the given axes")
        self.perm = [order[a] for a in spec.axis_order] + [len(self.axes)]
        self.inv_perm = np.argsort(self.perm)
        self.measures = [self.axes[order[a]].cell_measure for a in spec.axis_order]
        self.cell_weight = float(np.prod([a.cell_measure for a in self.axes]))
        self.conjugate = mixed_conjugate(spec)

    def _moved(self, rows: np.ndarray) -> np.ndarray:
        batch = rows.shape[0]
        arr = rows.reshape((batch,) + self.shape)
        return np.transpose(arr, [0] + [1 + p for p in self.perm])

    def norms(self, rows: np.ndarray, conjugate: bool = False) -> np.ndarray:
        spec = self.conjugate if conjugate else self.spec
        return mixed_norm_array(self._moved(rows), spec.exponents, self.measures, spec.lattice)

    def duals(self, rows: np.ndarray, conjugate: bool = False):
        """Norming functionals row by row: (norms, duals) both stacked flat."""
        spec = self.conjugate if conjugate else self.spec
        norms, g = mixed_dual_array(self._moved(rows), spec.exponents, self.measures, spec.lattice)
        back = np.transpose(g, [0] + [1 + p for p in self.inv_perm])
        return norms, back.reshape(rows.shape[0], -1)

    def pairings(self, rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
        return (rows_a * rows_b).sum(axis=1) * self.cell_weight


def _ascend_selection(mats, mats_t, selection, ctx: _SpecContext, iterations: int,
                      restarts: int, rng: np.random.Generator):
    """Best Rademacher quotient found for one operator multiselection."""
    n = len(selection)
    signs = exhaustive_sign_matrix(n)
    best = (0.0, None)
    for _ in range(restarts):
        e = rng.standard_normal((n, ctx.dim))
        for _ in range(iterations):
            te = np.stack([mats[k] @ e[i] for i, k in enumerate(selection)])
            y = signs @ te
            w, g = ctx.duals(y)
            num = float(np.sqrt(np.mean(w ** 2)))
            den = float(np.sqrt(np.mean(ctx.norms(signs @ e) ** 2)))
            if den > 0 and num / den > best[0]:
                best = (num / den, e.copy())
            if num == 0.0 or den == 0.0:
                break
            h = ((w[:, None] * signs).T @ g) / signs.shape[0]
            grad = np.stack([mats_t[k] @ h[i] for i, k in enumerate(selection)])
            scale, direction = ctx.duals(grad, conjugate=True)
            if not np.any(scale > 0):
                break
            e = scale[:, None] * direction
    return best


def _certify(mats, selection, e, ctx: _SpecContext):
    """Re-derive the quotient through unit dual witnesses and pairings only."""
    signs = exhaustive_sign_matrix(len(selection))
    te = np.stack([mats[k] @ e[i] for i, k in enumerate(selection)])
    y = signs @ te
    _, g = ctx.duals(y)
    attained = ctx.pairings(y, g)
    num = float(np.sqrt(np.mean(attained ** 2)))
    live = attained > 1e-15
    unit_gap = float(np.max(np.abs(ctx.norms(g[live], conjugate=True) - 1.0))) if live.any() else 0.0
    den = float(np.sqrt(np.mean(ctx.norms(signs @ e) ** 2)))
    if den == 0.0:
        return 0.0, 1.0
    return num / den, unit_gap


def r_bound_estimate(operators: Sequence, axes: Sequence[GridAxis], spec: MixedNormSpec,
                     budget: int = 32, n_max: int = 8, restarts: int = 2,
                     iterations: int = 30, seed: int = 0) -> RBoundReport:
    """Search for the largest Rademacher quotient over operator
    multiselections (repetition allowed) and input tuples.

    ``operators`` are dense matrices or batch-tolerant value transforms on
    the given axes.  Every singleton selection is always tried with a seed
    keyed to the operator's index, so the estimate dominates each member's
    ascent norm and is monotone under appending new members.  The result
    carries a dual certificate: the quotient re-derived through unit-norm
    dual witnesses must match within 5 percent.
    """
    if len(operators) == 0:
        raise ValueError("need a nonempty operator family")
    if n_max < 1 or n_max > SIGN_EXHAUSTIVE_MAX:
        raise ValueError(f"n_max must be in [1, {SIGN_EXHAUSTIVE_MAX}]")
    ctx = _SpecContext(axes, spec)
    mats = [np.asarray(op, float) if isinstance(op, np.ndarray)
            else dense_operator_matrix(op, axes, spec.lattice.dim) for op in operators]
    for m in mats:
        if m.shape != (ctx.dim, ctx.dim):
            raise ValueError(f"operator matrix shape {m.shape} does not match dimension {ctx.dim}")
    mats_t = [m.T for m in mats]

    best_value, best_state = 0.0, None
    singleton_norms = []
    for k in range(len(mats)):
        rng = np.random.default_rng([seed, 0, k])
        value, e = _ascend_selection(mats, mats_t, (k,), ctx, iterations, restarts, rng)
        singleton_norms.append(value)
        if value > best_value:
            best_value, best_state = value, ((k,), e)

    selections_tried = len(mats)
    for t in range(budget):
        rng = np.random.default_rng([seed, 1, t])
        length = int(rng.integers(2, n_max + 1)) if n_max > 1 else 1
        selection = tuple(int(i) for i in rng.integers(0, len(mats), size=length))
        value, e = _ascend_selection(mats, mats_t, selection, ctx, iterations, restarts, rng)
        selections_tried += 1
        if value > best_value:
            best_value, best_state = value, (selection, e)

    if best_state is None:
        return RBoundReport(0.0, n_max, selections_tried, restarts, iterations,
                            True, 0.0, (), tuple(singleton_norms), seed)
    selection, e = best_state
    certified_value, unit_gap = _certify(mats, selection, e, ctx)
    gap = abs(certified_value - best_value) / best_value if best_value > 0 else 0.0
    certified = gap <= 0.05 and unit_gap <= 1e-6
    return RBoundReport(best_value, n_max, selections_tried, restarts, iterations,
                        certified, gap, selection, tuple(singleton_norms), seed)


# ---------------------------------------------------------------------------
# decoupling

@dataclass(frozen=True)
class DecouplingSample:
    """One point choice y_V inside every dyadic cube of an axis."""

    axis_id: str
    points: dict

    def __post_init__(self):
        for cube, cell in self.points.items():
            if not isinstance(cell, (int, np.integer)):
                raise ValueError("sample points are finest-cell indices")


def decoupling_sample(axis: GridAxis, seed: int) -> DecouplingSample:
    rng = np.random.default_rng(seed)
    points = {}
    for cube in all_cubes(axis):
        cells = cell_indices(axis, cube)
        points[cube] = int(cells[rng.integers(cells.size)])
    return DecouplingSample(axis.axis_id, points)


@dataclass
class DecouplingEstimate:
    ratio: float
    lhs: float
    rhs: float
    method: str
    degenerate: bool
    stderr: Optional[float] = None
    trials: int = 0
    seed: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "ratio": self.ratio, "lhs": self.lhs, "rhs": self.rhs,
            "method": self.method, "degenerate": self.degenerate,
            "stderr": self.stderr, "trials": self.trials, "seed": self.seed,
        }


EXACT_MAX_ACTIVE = 12


def _p_integral(values: np.ndarray, lattice: LatticeSpec, p: float, measure: float) -> float:
    return float(np.sum(lattice_norm(values, lattice) ** p) * measure)


def decoupling_estimate(field: DiscreteField, i: int, j: int, p: float,
                        trials: int = 2000, seed: int = 0,
                        method: str = "auto") -> DecouplingEstimate:
    """Compare the decoupled block sum against the plain one.

    The plain side is the p-integral of |sum over subgrid cubes V of the
    depth-i block of f at V|.  The decoupled side replaces each block's
    argument by an independent uniform point y_V of V and attaches an
    independent sign to each cube; its expectation is computed exactly per
    finest cell (over the chain of cubes through that cell) when at most
    EXACT_MAX_ACTIVE cubes carry a nonzero block, and by Monte-Carlo over
    (signs, points) otherwise.  Returns plain/decoupled, with 0/0 reported
    as ratio 1 and flagged degenerate.
    """
    if field.k != 1:
        raise ValueError("decoupling compares blocks along a single axis")
    if p <= 0:
        raise ValueError("exponent must be positive")
    axis = field.axes[0]
    levels = [lev for lev in subgrid_levels(axis, i, j) if lev + i <= axis.max_level - 1]
    blocks = []
    for lev in levels:
        for cube in cubes_at_level(axis, lev):
            g = martingale_block(field, axis.axis_id, cube, i).values
            if np.any(g):
                blocks.append((cube, g))

    mu = axis.cell_measure
    plain = np.zeros_like(field.values)
    for _, g in blocks:
        plain = plain + g
    rhs = _p_integral(plain, field.lattice, p, mu)

    if not blocks:
        return DecouplingEstimate(1.0, 0.0, 0.0, "exact", True)

    if method == "auto":
        method = "exact" if len(blocks) <= EXACT_MAX_ACTIVE else "monte-carlo"
    if method not in ("exact", "monte-carlo"):
        raise ValueError(f"unknown method {method!r}")

    cells_of = [cell_indices(axis, cube) for cube, _ in blocks]
    dim = field.lattice.dim

    if method == "exact":
        lhs = 0.0
        for x in range(axis.cell_count):
            chain = [k for k in range(len(blocks)) if x in cells_of[k]]
            if not chain:
                continue
            m = len(chain)
            signs = exhaustive_sign_matrix(m)
            sizes = [cells_of[k].size for k in chain]
            total = np.zeros((signs.shape[0],) + tuple(sizes) + (dim,))
            for slot, k in enumerate(chain):
                arr = blocks[k][1][cells_of[k]]
                shape = [1] * total.ndim
                shape[0] = signs.shape[0]
                sgn = signs[:, slot].reshape(shape)
                shape = [1] * total.ndim
                shape[1 + slot] = sizes[slot]
                shape[-1] = dim
                total = total + sgn * arr.reshape(shape)
            mods = lattice_norm(total.reshape(-1, dim), field.lattice) ** p
            lhs += float(np.mean(mods)) * mu
        estimate = DecouplingEstimate(0.0, lhs, rhs, "exact", False)
    else:
        rng = np.random.default_rng(seed)
        draws = np.empty(trials)
        for t in range(trials):
            eps = rng.integers(0, 2, size=len(blocks)) * 2 - 1
            f_val = np.zeros((axis.cell_count, dim))
            for k, (cube, g) in enumerate(blocks):
                y = cells_of[k][rng.integers(cells_of[k].size)]
                f_val[cells_of[k]] += eps[k] * g[y]
            draws[t] = _p_integral(f_val, field.lattice, p, mu)
        lhs = float(np.mean(draws))
        stderr = float(np.std(draws, ddof=1) / np.sqrt(trials))
        estimate = DecouplingEstimate(0.0, lhs, rhs, "monte-carlo", False, stderr, trials, seed)

    if estimate.lhs == 0.0:
        if rhs > 1e-14:
            raise ArithmeticError("decoupled side vanished against a nonzero plain side")
        estimate.ratio = 1.0
        estimate.degenerate = True
        return estimate
    estimate.ratio = rhs / estimate.lhs
    return estimate


def decoupling_ratio(field: DiscreteField, i: int, j: int, p: float,
                     trials: int = 2000, seed: int = 0) -> float:
    return decoupling_estimate(field, i, j, p, trials, seed).ratio


# ---------------------------------------------------------------------------
# square-function equivalence

def _axis_differences(values: np.ndarray, pos: int, axis: GridAxis) -> list:
    """Martingale differences by level: E_{l+1} - E_l for l = 0..L-1."""
    averages = [level_average_values(values, pos, axis, lev)
                for lev in range(axis.max_level + 1)]
    return [averages[lev + 1] - averages[lev] for lev in range(axis.max_level)]


def square_equivalence_ratio(fields: Sequence[DiscreteField], spec: MixedNormSpec,
                             flavor: str = "full") -> float:
    """Mixed norm of the chosen block square function over the norm of the
    plain square function (sum over the family).

    Flavors: "full" uses rectangle blocks in both axes, "axis-1" and
    "axis-2" block only the named axis.  Constant inputs have no
    cancellative blocks in the truncated grid, so their ratio is 0.
    """
    if len(fields) == 0:
        raise ValueError("need a nonempty family")
    first = fields[0]
    if first.k != 2:
        raise ValueError("square-function flavors are defined on two axes")
    if flavor not in ("full", "axis-1", "axis-2"):
        raise ValueError(f"unknown flavor {flavor!r}")
    ax1, ax2 = first.axes

    acc = np.zeros_like(first.values)
    plain = np.zeros_like(first.values)
    for f in fields:
        if f.axes != first.axes or f.lattice != first.lattice:
            raise ValueError("family members must share axes and lattice")
        plain = plain + f.values ** 2
        if flavor == "axis-1":
            for d1 in _axis_differences(f.values, 0, ax1):
                acc = acc + d1 ** 2
        elif flavor == "axis-2":
            for d2 in _axis_differences(f.values, 1, ax2):
                acc = acc + d2 ** 2
        else:
            for d1 in _axis_differences(f.values, 0, ax1):
                for d12 in _axis_differences(d1, 1, ax2):
                    acc = acc + d12 ** 2

    denominator = mixed_norm(DiscreteField(first.axes, first.lattice, np.sqrt(plain)), spec)
    if denominator == 0.0:
        raise ValueError("zero denominator: the family vanishes identically")
    numerator = mixed_norm(DiscreteField(first.axes, first.lattice, np.sqrt(acc)), spec)
    return numerator / denominator
