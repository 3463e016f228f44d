"""Stopping-time families, sparseness certificates, and the Carleson
embedding tester.

A stopping family is a generation-layered collection of dyadic cubes under
a root: generation 0 is the root alone, each later generation consists of
disjoint cubes selected strictly inside the previous one, and the selected
mass inside any member is controlled by the family's packing bound.  The
two basic constructors (average-deviation stopping for a BMO function,
principal cubes for an integrable one) pack to 1/4 when their input is
normalized; the combined family unions the two selections generation by
generation and packs to 1/2.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import (
    DiscreteField,
    DyadicCube,
    GridAxis,
    cell_indices,
    level_average_values,
    root_cube,
)
from .lattice import lattice_norm
from .norms import bmo_norm

__all__ = [
    "StoppingFamily",
    "stopping_cubes_b",
    "principal_cubes",
    "combined_stopping",
    "verify_sparse",
    "block_values",
    "block_sup",
    "carleson_embedding_ratio",
    "staircase_field",
    "random_unit_bmo",
    "family_to_json",
    "family_from_json",
    "STOPPING_THRESHOLD",
]

STOPPING_THRESHOLD = 4.0


def _is_strict_subcube(inner: DyadicCube, outer: DyadicCube) -> bool:
    return inner.level > outer.level and outer.contains(inner)


@dataclass
class StoppingFamily:
    """Generations of stopping cubes under a root, with parent links.

    ``packing_bound`` is the certificate the family claims: for every
    member J, the next generation's mass inside J is at most
    packing_bound * |J|.  Validated at construction.
    """

    axis: GridAxis
    root: DyadicCube
    generations: tuple
    packing_bound: float = 0.25
    parent_links: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        self.generations = tuple(tuple(g) for g in self.generations)
        if not self.generations or self.generations[0] != (self.root,):
            raise ValueError("generation 0 must be exactly the root")
        if self.root.level > self.axis.max_level:
            raise ValueError("root lies below the finest level")
        for g, gen in enumerate(self.generations[1:], start=1):
            for q in gen:
                if not any(_is_strict_subcube(q, p) for p in self.generations[g - 1]):
                    raise ValueError(
                        f"generation {g} member {q} has no strict parent in generation {g - 1}")
            for a in range(len(gen)):
                for b in range(a + 1, len(gen)):
                    if gen[a].contains(gen[b]) or gen[b].contains(gen[a]):
                        raise ValueError("generation members must be pairwise disjoint")
        for g, gen in enumerate(self.generations[:-1]):
            for j in gen:
                mass = sum(q.measure for q in self.generations[g + 1] if j.contains(q))
                if mass > self.packing_bound * j.measure * (1 + 1e-12):
                    raise ValueError(
                        f"packing violated at {j}: {mass:.6g} > "
                        f"{self.packing_bound:.3g} * {j.measure:.6g}")
        if self.parent_links is None:
            self.parent_links = self._build_parent_links()

    def _build_parent_links(self) -> dict:
        members = self.members()
        links: dict = {self.root: self.root}
        frontier = [self.root]
        while frontier:
            nxt = []
            for q in frontier:
                if q.level >= self.axis.max_level:
                    continue
                for child in q.children():
                    links[child] = child if child in members else links[q]
                    nxt.append(child)
            frontier = nxt
        return links

    def members(self) -> frozenset:
        return frozenset(q for gen in self.generations for q in gen)

    def generation_of(self, cube: DyadicCube) -> int:
        for g, gen in enumerate(self.generations):
            if cube in gen:
                return g
        raise KeyError(f"{cube} is not a family member")

    def parent(self, cube: DyadicCube) -> DyadicCube:
        try:
            return self.parent_links[cube]
        except KeyError:
            raise ValueError(f"{cube} is not under the family root") from None

    def children_of(self, member: DyadicCube) -> list:
        """Next-generation members directly inside ``member``."""
        g = self.generation_of(member)
        if g + 1 >= len(self.generations):
            return []
        return [q for q in self.generations[g + 1] if member.contains(q)]


# ---------------------------------------------------------------------------
# constructors

def _level_averages(values: np.ndarray, axis: GridAxis) -> list:
    return [level_average_values(values, 0, axis, lev)
            for lev in range(axis.max_level + 1)]


def _average_at(averages: list, axis: GridAxis, cube: DyadicCube) -> float:
    cell = int(cell_indices(axis, cube)[0])
    return float(averages[cube.level][cell])


def _select_maximal(axis: GridAxis, parent: DyadicCube, should_stop) -> list:
    """Maximal cubes strictly inside ``parent`` satisfying the predicate."""
    selected = []

    def visit(cube):
        if should_stop(cube):
            selected.append(cube)
            return
        if cube.level < axis.max_level:
            for child in cube.children():
                visit(child)

    if parent.level < axis.max_level:
        for child in parent.children():
            visit(child)
    return selected


def _build_generations(axis: GridAxis, root: DyadicCube, one_step) -> tuple:
    generations = [(root,)]
    frontier = [root]
    while frontier:
        nxt = []
        for j in frontier:
            nxt.extend(one_step(j))
        if not nxt:
            break
        generations.append(tuple(nxt))
        frontier = nxt
    return tuple(generations)


def _measured_packing(generations: tuple) -> float:
    worst = 0.0
    for g, gen in enumerate(generations[:-1]):
        for j in gen:
            mass = sum(q.measure for q in generations[g + 1] if j.contains(q))
            worst = max(worst, mass / j.measure)
    return worst


def _scalar_values(b: DiscreteField) -> np.ndarray:
    if b.k != 1 or b.lattice.dim != 1:
        raise ValueError("stopping constructions expect a scalar field on one axis")
    return b.values[:, 0]


def stopping_cubes_b(b: DiscreteField, root: DyadicCube,
                     threshold: float = STOPPING_THRESHOLD) -> StoppingFamily:
    """Average-deviation stopping cubes: from each parent J, the maximal
    Q strictly inside with |<b>_Q - <b>_J| > threshold.

    With bmo_norm(b) <= 1 the selection packs to 1/threshold of each
    parent (1/4 at the default); a larger norm is allowed but warned
    about, and the family then records its measured packing ratio.
    """
    if threshold <= 0:
        raise ValueError("stopping threshold must be positive")
    axis = b.axes[0]
    vals = _scalar_values(b)
    norm = bmo_norm(b)
    if norm > 1.0 + 1e-12:
        warnings.warn(f"stopping input has bmo norm {norm:.4g} > 1; "
                      "the packing guarantee does not apply", stacklevel=2)
    averages = _level_averages(vals, axis)

    def one_step(j):
        ref = _average_at(averages, axis, j)
        return _select_maximal(
            axis, j, lambda q: abs(_average_at(averages, axis, q) - ref) > threshold)

    generations = _build_generations(axis, root, one_step)
    bound = min(1.0, 1.0 / threshold)
    if norm > 1.0 + 1e-12:
        bound = max(bound, _measured_packing(generations))
    return StoppingFamily(axis, root, generations, bound)


def principal_cubes(f: DiscreteField, root: DyadicCube,
                    threshold: float = STOPPING_THRESHOLD) -> StoppingFamily:
    """Principal cubes of |f|: from each parent J, the maximal Q strictly
    inside with <|f|>_Q > threshold * <|f|>_J."""
    if threshold <= 0:
        raise ValueError("stopping threshold must be positive")
    if f.k != 1:
        raise ValueError("stopping constructions expect a field on one axis")
    axis = f.axes[0]
    modulus = lattice_norm(f.values, f.lattice)
    averages = _level_averages(modulus, axis)

    def one_step(j):
        ref = _average_at(averages, axis, j)
        return _select_maximal(
            axis, j, lambda q: _average_at(averages, axis, q) > threshold * ref)

    generations = _build_generations(axis, root, one_step)
    return StoppingFamily(axis, root, generations, min(1.0, 1.0 / threshold))


def combined_stopping(b: DiscreteField, f: DiscreteField, root: DyadicCube,
                      threshold: float = STOPPING_THRESHOLD) -> StoppingFamily:
    """Union of the two selections, maximalized generation by generation.

    Each parent contributes at most 1/threshold from either selection, so
    the family certifies twice the single-constructor packing bound (1/2
    at the default threshold).
    """
    if threshold <= 0:
        raise ValueError("stopping threshold must be positive")
    axis = b.axes[0]
    if f.axes != b.axes:
        raise ValueError("both inputs must live on the same axis")
    b_vals = _scalar_values(b)
    norm = bmo_norm(b)
    if norm > 1.0 + 1e-12:
        warnings.warn(f"stopping input has bmo norm {norm:.4g} > 1; "
                      "the packing guarantee does not apply", stacklevel=2)
    b_averages = _level_averages(b_vals, axis)
    f_averages = _level_averages(lattice_norm(f.values, f.lattice), axis)

    def one_step(j):
        b_ref = _average_at(b_averages, axis, j)
        f_ref = _average_at(f_averages, axis, j)
        picked = _select_maximal(
            axis, j, lambda q: abs(_average_at(b_averages, axis, q) - b_ref) > threshold)
        picked += _select_maximal(
            axis, j, lambda q: _average_at(f_averages, axis, q) > threshold * f_ref)
        picked.sort(key=lambda q: (q.level, q.index))
        maximal = []
        for q in picked:
            if not any(p.contains(q) for p in maximal):
                maximal.append(q)
        return maximal

    generations = _build_generations(axis, root, one_step)
    bound = min(1.0, 2.0 / threshold)
    if norm > 1.0 + 1e-12:
        bound = max(bound, _measured_packing(generations))
    return StoppingFamily(axis, root, generations, bound)


# ---------------------------------------------------------------------------
# sparseness

def verify_sparse(fam: StoppingFamily):
    """Witness sets E_Q = Q minus the next generation inside Q.

    Returns (ok, witnesses) where witnesses maps each member to its
    finest-cell index array; ok requires |E_Q| >= |Q|/2 for every member
    and pairwise disjointness of the witnesses.
    """
    axis = fam.axis
    witnesses = {}
    ok = True
    for g, gen in enumerate(fam.generations):
        for q in gen:
            total = cell_indices(axis, q).size
            cells = set(cell_indices(axis, q).tolist())
            if g + 1 < len(fam.generations):
                for nxt in fam.generations[g + 1]:
                    if q.contains(nxt):
                        cells -= set(cell_indices(axis, nxt).tolist())
            witnesses[q] = np.array(sorted(cells), dtype=int)
            if 2 * len(cells) < total:
                ok = False
    seen: set = set()
    for cells in witnesses.values():
        cell_set = set(cells.tolist())
        if seen & cell_set:
            ok = False
        seen |= cell_set
    return ok, witnesses


# ---------------------------------------------------------------------------
# martingale blocks

def block_values(b: DiscreteField, fam: StoppingFamily, j: DyadicCube) -> np.ndarray:
    """Cell values of the martingale block attached to one member: the
    sum of Delta_Q b over all Q whose stopping parent is j."""
    if j not in fam.members():
        raise ValueError(f"{j} is not a member of the stopping family")
    axis = b.axes[0]
    vals = _scalar_values(b)
    averages = _level_averages(vals, axis)
    block = np.zeros(axis.cell_count)
    for q, parent in fam.parent_links.items():
        if parent != j or q.level >= axis.max_level:
            continue
        sel = cell_indices(axis, q)
        block[sel] += averages[q.level + 1][sel] - averages[q.level][sel]
    return block


def block_sup(b: DiscreteField, fam: StoppingFamily, j: DyadicCube) -> float:
    """Exact sup norm of the martingale block attached to ``j``."""
    return float(np.max(np.abs(block_values(b, fam, j))))


# ---------------------------------------------------------------------------
# Carleson embedding

def carleson_embedding_ratio(fields: Sequence[DiscreteField],
                             families: Sequence[StoppingFamily], p: float) -> float:
    """Norm of the stopping-average square function over the norm of the
    plain square function.

    Both sides vanish together (the left is built from averages of the
    right), in which case the ratio is 0; a vanishing right side against a
    nonzero left cannot occur and is raised as an arithmetic error.
    """
    if len(fields) == 0 or len(fields) != len(families):
        raise ValueError("need one stopping family per field")
    if p <= 0:
        raise ValueError("exponent must be positive")
    axis = fields[0].axes[0]
    for f, fam in zip(fields, families):
        if f.k != 1 or f.axes[0] != axis:
            raise ValueError("all fields must share one axis")
        ok, _ = verify_sparse(fam)
        if not ok:
            raise ValueError("family fails the sparseness certificate")

    mu = axis.cell_measure
    lhs_sq = np.zeros(axis.cell_count)
    rhs_sq = np.zeros(axis.cell_count)
    for f, fam in zip(fields, families):
        modulus = lattice_norm(f.values, f.lattice)
        averages = _level_averages(modulus, axis)
        for q in fam.members():
            avg = _average_at(averages, axis, q)
            lhs_sq[cell_indices(axis, q)] += avg * avg
        rhs_sq += modulus ** 2
    lhs = float((np.sum(np.sqrt(lhs_sq) ** p) * mu) ** (1.0 / p))
    rhs = float((np.sum(np.sqrt(rhs_sq) ** p) * mu) ** (1.0 / p))
    if rhs == 0.0:
        if lhs > 1e-14:
            raise ArithmeticError("stopping averages survived a vanishing family")
        return 0.0
    return lhs / rhs


# ---------------------------------------------------------------------------
# sweep inputs

def staircase_field(axis: GridAxis, rng=None):
    """Unit-jump martingale along a nested interval chain.

    The averages along the chain are 0, 1, 2, ... and the bmo norm is
    exactly 1 for any chain, so with the default threshold the level-5
    chain interval is the unique stopping cube once the grid is deep
    enough.  Returns the field and the finest chain interval.
    """
    if axis.n != 1:
        raise ValueError("staircase inputs are built on 1-dimensional axes")
    vals = np.zeros(axis.cell_count)
    cube = root_cube(axis)
    for _ in range(axis.max_level):
        kids = cube.children()
        pick = kids[0] if rng is None else kids[int(rng.integers(len(kids)))]
        for kid in kids:
            vals[cell_indices(axis, kid)] += 1.0 if kid == pick else -1.0
        cube = pick
    field = DiscreteField((axis,), None, vals[:, None])
    return field, cube


def random_unit_bmo(axis: GridAxis, rng, noise: float = 0.05) -> DiscreteField:
    """Random-chain staircase plus small multiscale noise, renormalized to
    bmo norm 1.

    With the noise level kept below roughly 0.1 the staircase's deep
    average deviation still clears the default stopping threshold, so the
    output is guaranteed to produce at least one stopping cube on grids
    with six or more levels.
    """
    base, _ = staircase_field(axis, rng)
    raw = rng.standard_normal(axis.cell_count)
    raw -= raw.mean()
    scale = bmo_norm(DiscreteField((axis,), None, raw[:, None]))
    vals = base.values[:, 0] + noise * raw / scale
    vals /= bmo_norm(DiscreteField((axis,), None, vals[:, None]))
    return DiscreteField((axis,), None, vals[:, None])


# ---------------------------------------------------------------------------
# serialization

def family_to_json(fam: StoppingFamily) -> dict:
    return {
        "axis": fam.axis.to_json(),
        "root": fam.root.to_json(),
        "packing_bound": fam.packing_bound,
        "generations": [[q.to_json() for q in gen] for gen in fam.generations],
    }


def family_from_json(data: dict) -> StoppingFamily:
    axis = GridAxis.from_json(data["axis"])
    root = DyadicCube.from_json(data["root"])
    generations = tuple(tuple(DyadicCube.from_json(q) for q in gen)
                        for gen in data["generations"])
    return StoppingFamily(axis, root, generations, data.get("packing_bound", 0.25))
