"""BMO functionals, square functions, maximal operators, and operator norms.

The product-BMO functional takes a supremum over a finite, documented family
of admissible sets, so it is a certified lower bound of the full supremum;
callers that need the distinction should keep the default family or enlarge
it, never shrink it.  Operator norms are exact (SVD) in the all-Hilbert case
and duality-map ascent lower bounds otherwise.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lattice import MixedNormSpec, mixed_conjugate
from .grid import (
    DiscreteField,
    GridAxis,
    cell_indices,
    dense_operator_matrix,
    level_average_values,
    mixed_dual_field,
    mixed_norm,
)

__all__ = [
    "bmo_norm",
    "square_function",
    "OmegaSet",
    "default_omega_family",
    "product_bmo_estimate",
    "key_estimate_ratio",
    "maximal_1p",
    "strong_maximal",
    "fefferman_stein_ratio",
    "NormReport",
    "operator_norm",
]


# ---------------------------------------------------------------------------
# dyadic BMO

def bmo_norm(b: DiscreteField) -> float:
    """sup over all dyadic cubes I of the I-average of |b - <b>_I|.

    The field must be scalar and live on a single axis; the supremum runs
    over every level of the truncated grid.
    """
    if b.k != 1 or b.lattice.dim != 1:
        raise ValueError("bmo_norm expects a scalar field on one axis")
    axis = b.axes[0]
    vals = b.values[:, 0]
    best = 0.0
    for level in range(axis.max_level + 1):
        avg = level_average_values(vals, 0, axis, level)
        dev = level_average_values(np.abs(vals - avg), 0, axis, level)
        best = max(best, float(dev.max()))
    return best


# ---------------------------------------------------------------------------
# square function and product BMO

def _rectangle_coeffs(source) -> dict:
    """Accept a plain {(cube, cube): value} map or anything exposing one."""
    if hasattr(source, "rectangle_coefficients"):
        return source.rectangle_coefficients()
    return dict(source)


def square_function(coeffs, axis_1: GridAxis, axis_2: GridAxis) -> DiscreteField:
    """S(A) = sqrt(sum of |A_{I,J}|^2 1_{IxJ} / |IxJ|) on the product grid."""
    coeffs = _rectangle_coeffs(coeffs)
    sq = np.zeros((axis_1.cell_count, axis_2.cell_count))
    for (c1, c2), value in coeffs.items():
        idx1 = cell_indices(axis_1, c1)
        idx2 = cell_indices(axis_2, c2)
        sq[np.ix_(idx1, idx2)] += value * value / (c1.measure * c2.measure)
    return DiscreteField((axis_1, axis_2), None, np.sqrt(sq)[:, :, None])


@dataclass
class OmegaSet:
    """A candidate set for the product-BMO supremum: a finest-cell mask plus
    the dyadic rectangles witnessing that every point sits in a rectangle
    inside the set."""

    mask: np.ndarray
    witness: tuple = ()

    def measure(self, axis_1: GridAxis, axis_2: GridAxis) -> float:
        return float(self.mask.sum()) * axis_1.cell_measure * axis_2.cell_measure

    @staticmethod
    def from_rectangles(axis_1: GridAxis, axis_2: GridAxis, rects: Sequence) -> "OmegaSet":
        mask = np.zeros((axis_1.cell_count, axis_2.cell_count), dtype=bool)
        for c1, c2 in rects:
            mask[np.ix_(cell_indices(axis_1, c1), cell_indices(axis_2, c2))] = True
        return OmegaSet(mask, tuple(rects))


def _check_admissible(omega: OmegaSet, axis_1: GridAxis, axis_2: GridAxis) -> None:
    if omega.mask.shape != (axis_1.cell_count, axis_2.cell_count):
        raise ValueError("candidate set mask does not match the product grid")
    if not omega.mask.any():
        raise ValueError("candidate sets must be nonempty")
    if omega.witness:
        covered = np.zeros_like(omega.mask)
        for c1, c2 in omega.witness:
            block = np.ix_(cell_indices(axis_1, c1), cell_indices(axis_2, c2))
            if not omega.mask[block].all():
                raise ValueError("witness rectangle leaves the candidate set")
            covered[block] = True
        if not covered[omega.mask].all():
            raise ValueError("witness rectangles do not cover the candidate set")
    # without an explicit witness every finest cell is itself a rectangle
    # inside the set, so the admissibility condition holds by construction


def default_omega_family(coeffs, axis_1: GridAxis, axis_2: GridAxis) -> list:
    """Support rectangles, nonempty strict superlevel sets of the square
    function at its attained values, and all pairwise unions."""
    coeffs = _rectangle_coeffs(coeffs)
    base = []
    for c1, c2 in coeffs:
        base.append(OmegaSet.from_rectangles(axis_1, axis_2, [(c1, c2)]))
    svals = square_function(coeffs, axis_1, axis_2).values[:, :, 0]
    for t in sorted(set(np.round(svals[svals > 0], 14).tolist())):
        mask = svals > t
        if mask.any():
            base.append(OmegaSet(mask))
    family = list(base)
    for i in range(len(base)):
        for j in range(i + 1, len(base)):
            union = base[i].mask | base[j].mask
            witness = base[i].witness + base[j].witness
            family.append(OmegaSet(union, witness if (base[i].witness and base[j].witness) else ()))
    return family


def product_bmo_estimate(coeffs, axis_1: GridAxis, axis_2: GridAxis,
                         family: Optional[list] = None) -> float:
    """sup over the candidate family of sqrt(sum_{IxJ in Omega} |c|^2 / |Omega|).

    A lower bound of the full supremum: only the supplied sets are tried.
    """
    coeffs = _rectangle_coeffs(coeffs)
    if family is None:
        family = default_omega_family(coeffs, axis_1, axis_2)
    cached = [
        (c1, c2, cell_indices(axis_1, c1), cell_indices(axis_2, c2), value)
        for (c1, c2), value in coeffs.items()
    ]
    best = 0.0
    for omega in family:
        _check_admissible(omega, axis_1, axis_2)
        total = 0.0
        for c1, c2, idx1, idx2, value in cached:
            if omega.mask[np.ix_(idx1, idx2)].all():
                total += value * value
        if total > 0.0:
            best = max(best, np.sqrt(total / omega.measure(axis_1, axis_2)))
    return float(best)


def key_estimate_ratio(lam, weights, axis_1: GridAxis, axis_2: GridAxis) -> float:
    """Ratio of sum |lam_{I,J}| |A_{I,J}| to the product-BMO lower bound of
    lam times the L1 norm of the square function of A."""
    lam = _rectangle_coeffs(lam)
    weights = _rectangle_coeffs(weights)
    lhs = sum(abs(lam[key]) * abs(weights[key]) for key in lam.keys() & weights.keys())
    if lhs == 0.0:
        return 0.0
    s_l1 = float(square_function(weights, axis_1, axis_2).values[:, :, 0].sum()
                 * axis_1.cell_measure * axis_2.cell_measure)
    denom = product_bmo_estimate(lam, axis_1, axis_2) * s_l1
    if denom == 0.0:
        raise ValueError("key estimate denominator vanished with a nonzero pairing")
    return float(lhs / denom)


# ---------------------------------------------------------------------------
# maximal functions

def maximal_1p(field: DiscreteField, axis_id: str) -> DiscreteField:
    """Lattice maximal function: componentwise sup of cube averages of |f|."""
    pos = field.axis_pos(axis_id)
    axis = field.axes[pos]
    absval = np.abs(field.values)
    out = level_average_values(absval, pos, axis, 0).copy()
    for level in range(1, axis.max_level + 1):
        np.maximum(out, level_average_values(absval, pos, axis, level), out=out)
    return DiscreteField(field.axes, field.lattice, out)


def strong_maximal(field: DiscreteField, axis_id_1: str, axis_id_2: str) -> DiscreteField:
    """Sup of rectangle averages of |f| over all level pairs."""
    pos_1 = field.axis_pos(axis_id_1)
    pos_2 = field.axis_pos(axis_id_2)
    axis_1 = field.axes[pos_1]
    axis_2 = field.axes[pos_2]
    absval = np.abs(field.values)
    out = None
    for l1 in range(axis_1.max_level + 1):
        part = level_average_values(absval, pos_1, axis_1, l1)
        for l2 in range(axis_2.max_level + 1):
            cand = level_average_values(part, pos_2, axis_2, l2)
            out = cand if out is None else np.maximum(out, cand)
    return DiscreteField(field.axes, field.lattice, out)


def fefferman_stein_ratio(fields: Sequence[DiscreteField], r: float, spec: MixedNormSpec,
                          maximal_axes) -> float:
    """Norm of the ell^r aggregate of maximal functions over the norm of the
    ell^r aggregate of the inputs.

    ``maximal_axes`` is one axis id for the one-parameter maximal function or
    a pair of ids for the strong maximal function.
    """
    if not fields:
        raise ValueError("need at least one field")
    if isinstance(maximal_axes, str):
        maxed = [maximal_1p(f, maximal_axes) for f in fields]
    else:
        ax1, ax2 = maximal_axes
        maxed = [strong_maximal(f, ax1, ax2) for f in fields]
    num_val = (sum(m.values ** r for m in maxed)) ** (1.0 / r)
    den_val = (sum(np.abs(f.values) ** r for f in fields)) ** (1.0 / r)
    axes = fields[0].axes
    lattice = fields[0].lattice
    denom = mixed_norm(DiscreteField(axes, lattice, den_val), spec)
    if denom == 0.0:
        raise ValueError("aggregate of the inputs has zero norm")
    numer = mixed_norm(DiscreteField(axes, lattice, num_val), spec)
    return float(numer / denom)


# ---------------------------------------------------------------------------
# operator norms

@dataclass(frozen=True)
class NormReport:
    """Result of an operator-norm computation.

    ``lower_bound`` is True exactly when the estimate came from a search,
    in which case the true norm can only be larger.
    """

    estimate: float
    method: str
    restarts: int
    lower_bound: bool
    seeds: tuple = ()

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "method": self.method,
            "restarts": self.restarts,
            "lower_bound": self.lower_bound,
            "seeds": list(self.seeds),
        }

    @staticmethod
    def from_json(data: dict) -> "NormReport":
        return NormReport(data["estimate"], data["method"], data["restarts"],
                          data["lower_bound"], tuple(data["seeds"]))


def _ascent_norm(matrix: np.ndarray, axes, in_spec: MixedNormSpec, out_spec: MixedNormSpec,
                 restarts: int, iterations: int, seed: int):
    """Duality-map power iteration for the in-norm to out-norm operator norm."""
    shape = tuple(a.cell_count for a in axes) + (in_spec.lattice.dim,)
    conj_in = mixed_conjugate(in_spec)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        v = rng.standard_normal(shape)
        v = v / mixed_norm(DiscreteField(axes, in_spec.lattice, v), in_spec)
        last = 0.0
        for _ in range(iterations):
            w = (matrix @ v.reshape(-1)).reshape(shape)
            norm_w, g = mixed_dual_field(DiscreteField(axes, out_spec.lattice, w), out_spec)
            if norm_w == 0.0:
                break
            z = (matrix.T @ g.values.reshape(-1)).reshape(shape)
            _, vf = mixed_dual_field(DiscreteField(axes, in_spec.lattice, z), conj_in)
            v = vf.values
            if abs(norm_w - last) <= 1e-13 * max(norm_w, 1.0):
                last = norm_w
                break
            last = norm_w
        best = max(best, last)
    return best


def operator_norm(apply_values, axes: Sequence[GridAxis], in_spec: MixedNormSpec,
                  out_spec: Optional[MixedNormSpec] = None, mode: str = "auto",
                  restarts: int = 20, iterations: int = 200, seed: int = 0) -> NormReport:
    """Operator norm of a linear map on fields over ``axes``.

    ``apply_values`` maps values arrays (cells..., dim) to like-shaped arrays
    and must tolerate one trailing batch axis; the matrix is assembled by a
    single batched application.  In the all-Hilbert case the norm is the top
    singular value (uniform cell measures make the weighting cancel);
    otherwise a duality-map ascent from ``restarts`` starts gives a certified
    lower bound.
    """
    out_spec = out_spec or in_spec
    if in_spec.lattice.dim != out_spec.lattice.dim:
        raise ValueError("input and output lattice dimensions must agree")
    hilbert = in_spec.is_hilbert and out_spec.is_hilbert
    if mode == "exact" and not hilbert:
        raise ValueError("exact mode needs every exponent equal to 2")
    if mode not in ("auto", "exact", "ascent"):
        raise ValueError(f"unknown mode {mode!r}")
    matrix = dense_operator_matrix(apply_values, axes, in_spec.lattice.dim)
    if mode != "ascent" and hilbert:
        estimate = float(np.linalg.svd(matrix, compute_uv=False)[0])
        return NormReport(estimate, "exact-svd", 0, False)
    estimate = _ascent_norm(matrix, tuple(axes), in_spec, out_spec, restarts, iterations, seed)
    return NormReport(float(estimate), "ascent-search", restarts, True, (seed,))
