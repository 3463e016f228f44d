"""Finite-dimensional function lattices and iterated mixed norms.

Coefficient values live in a finite sequence lattice: a flat ell^r in
dimension d, or nested levels ell^{r_outer}(ell^{r_inner}) whose total
dimension is the product of the level dimensions.  Mixed norms over grid
axes are iterated weighted p-norms, one exponent per axis, applied from
the innermost axis outward, with the finest-cell measure of each axis as
the integration weight.

All engines in this module work on plain numpy arrays and reduce
trailing axes only, so leading batch dimensions pass through untouched.
Grid-aware wrappers live in :mod:`dyadshift.grid`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

EXPONENT_MIN = 1.01
EXPONENT_MAX = 100.0
MAX_LATTICE_DIM = 16


def conjugate_exponent(p: float) -> float:
    """Holder conjugate p' = p / (p - 1)."""
    return p / (p - 1.0)


def _check_exponent(p: float) -> float:
    p = float(p)
    if not (EXPONENT_MIN <= p <= EXPONENT_MAX):
        raise ValueError(
            f"exponent {p} outside the supported range "
            f"[{EXPONENT_MIN}, {EXPONENT_MAX}]"
        )
    return p


@dataclass(frozen=True)
class LatticeSpec:
    """A finite sequence lattice ell^r, possibly nested.

    ``LatticeSpec(r, d)`` is the flat lattice ell^r of dimension d.
    ``LatticeSpec(r1, m, inner)`` is ell^{r1}_m applied blockwise over
    ``m`` copies of ``inner``; the total dimension is ``m * inner.dim``.
    """

    exponent: float
    blocks: int
    inner: Optional["LatticeSpec"] = None

    def __post_init__(self):
        _check_exponent(self.exponent)
        if self.blocks < 1:
            raise ValueError("lattice needs at least one component")
        if self.dim > MAX_LATTICE_DIM:
            raise ValueError(
                f"lattice dimension {self.dim} exceeds the cap {MAX_LATTICE_DIM}"
            )

    @property
    def dim(self) -> int:
        return self.blocks * (self.inner.dim if self.inner is not None else 1)

    @property
    def is_hilbert(self) -> bool:
        """True when every nesting level carries exponent 2."""
        if self.exponent != 2.0:
            return False
        return self.inner is None or self.inner.is_hilbert

    def to_json(self) -> dict:
        out = {"exponent": self.exponent, "blocks": self.blocks}
        if self.inner is not None:
            out["inner"] = self.inner.to_json()
        return out

    @staticmethod
    def from_json(data: dict) -> "LatticeSpec":
        inner = LatticeSpec.from_json(data["inner"]) if "inner" in data and data["inner"] else None
        return LatticeSpec(data["exponent"], data["blocks"], inner)


def scalar_lattice() -> LatticeSpec:
    """The one-dimensional lattice used for scalar-valued fields."""
    return LatticeSpec(2.0, 1)


def koethe_dual(spec: LatticeSpec) -> LatticeSpec:
    """Conjugate every exponent in the nesting tree."""
    inner = koethe_dual(spec.inner) if spec.inner is not None else None
    return LatticeSpec(conjugate_exponent(spec.exponent), spec.blocks, inner)


def dual_pairing(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Coordinate pairing sum_i v_i w_i over the trailing axis."""
    return np.sum(np.asarray(v, float) * np.asarray(w, float), axis=-1)


def _lat_norm(v: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    if spec.inner is not None:
        v = v.reshape(v.shape[:-1] + (spec.blocks, spec.inner.dim))
        v = _lat_norm(v, spec.inner)
    else:
        v = np.abs(v)
    r = spec.exponent
    return np.sum(v ** r, axis=-1) ** (1.0 / r)


def lattice_norm(values: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Lattice norm over the trailing axis; leading axes are batch."""
    v = np.asarray(values, float)
    if v.shape[-1] != spec.dim:
        raise ValueError(f"expected trailing dimension {spec.dim}, got {v.shape[-1]}")
    return _lat_norm(v, spec)


def _lat_norm_dual(v: np.ndarray, spec: LatticeSpec):
    """Return (norm, g) with <v, g> = norm and dual-norm(g) = 1 where norm > 0."""
    r = spec.exponent
    if spec.inner is None:
        a = np.abs(v)
        norm = np.sum(a ** r, axis=-1) ** (1.0 / r)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.sign(v) * (a / norm[..., None]) ** (r - 1.0)
        g = np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)
        return norm, g
    shaped = v.reshape(v.shape[:-1] + (spec.blocks, spec.inner.dim))
    inner_norm, inner_g = _lat_norm_dual(shaped, spec.inner)
    norm = np.sum(inner_norm ** r, axis=-1) ** (1.0 / r)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = (inner_norm / norm[..., None]) ** (r - 1.0)
    fac = np.nan_to_num(fac, nan=0.0, posinf=0.0, neginf=0.0)
    g = (fac[..., None] * inner_g).reshape(v.shape)
    return norm, g


def lattice_dual_map(values: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """The norming functional of ``values``.

    Satisfies dual_pairing(values, g) == lattice_norm(values) and
    lattice_norm(g, koethe_dual(spec)) == 1 wherever the norm is positive;
    g vanishes where values vanish.
    """
    v = np.asarray(values, float)
    _, g = _lat_norm_dual(v, spec)
    return g


@dataclass(frozen=True)
class MixedNormSpec:
    """Iterated norm L^{p_0}(axis_0; L^{p_1}(axis_1; ... ; E)).

    ``axis_order`` lists axis identifiers outermost first, ``exponents``
    gives the matching integration exponents, and ``lattice`` is the
    coefficient lattice E applied pointwise.
    """

    axis_order: tuple
    exponents: tuple
    lattice: LatticeSpec

    def __post_init__(self):
        object.__setattr__(self, "axis_order", tuple(self.axis_order))
        object.__setattr__(self, "exponents", tuple(float(p) for p in self.exponents))
        if self.lattice is None:
            object.__setattr__(self, "lattice", scalar_lattice())
        if len(self.axis_order) != len(self.exponents):
            raise ValueError("one exponent per axis is required")
        for p in self.exponents:
            _check_exponent(p)

    @property
    def is_hilbert(self) -> bool:
        return all(p == 2.0 for p in self.exponents) and self.lattice.is_hilbert

    def to_json(self) -> dict:
        return {
            "axis_order": list(self.axis_order),
            "exponents": list(self.exponents),
            "lattice": self.lattice.to_json(),
        }

    @staticmethod
    def from_json(data: dict) -> "MixedNormSpec":
        return MixedNormSpec(
            tuple(data["axis_order"]),
            tuple(data["exponents"]),
            LatticeSpec.from_json(data["lattice"]),
        )


def mixed_conjugate(spec: MixedNormSpec) -> MixedNormSpec:
    """Conjugate every axis exponent and the lattice (Koethe dual)."""
    return MixedNormSpec(
        spec.axis_order,
        tuple(conjugate_exponent(p) for p in spec.exponents),
        koethe_dual(spec.lattice),
    )


def _weighted_reduce(arr: np.ndarray, p: float, mu: float) -> np.ndarray:
    return (mu * np.sum(arr ** p, axis=-1)) ** (1.0 / p)


def mixed_norm_array(values: np.ndarray, exponents, measures, lattice: LatticeSpec) -> np.ndarray:
    """Iterated norm of an array shaped (*batch, c_0, ..., c_{k-1}, dim).

    Cell axes must already sit in outermost-first order; ``exponents`` and
    ``measures`` run parallel to them.  Returns an array of shape (*batch,).
    """
    v = np.asarray(values, float)
    cur = _lat_norm(v, lattice)
    for p, mu in zip(reversed(list(exponents)), reversed(list(measures))):
        cur = _weighted_reduce(cur, p, mu)
    return cur


def mixed_dual_array(values: np.ndarray, exponents, measures, lattice: LatticeSpec):
    """Return (norm, g) for the iterated norm, with g shaped like values.

    The norming functional satisfies
    sum(values * g) * prod(cell measures) == norm and has conjugate mixed
    norm 1 wherever norm > 0.  Pure zero input returns g = 0.
    """
    v = np.asarray(values, float)
    exponents = list(exponents)
    measures = list(measures)
    k = len(exponents)
    lat_norm, lat_g = _lat_norm_dual(v, lattice)
    stack = [lat_norm]
    cur = lat_norm
    for p, mu in zip(reversed(exponents), reversed(measures)):
        cur = _weighted_reduce(cur, p, mu)
        stack.append(cur)
    factor = np.ones_like(lat_norm)
    for i in range(k):
        # stack[i] has the cell axis k-1-i still present, stack[i+1] does not
        p = exponents[k - 1 - i]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (stack[i] / stack[i + 1][..., None]) ** (p - 1.0)
        ratio = np.nan_to_num(ratio, nan=0.0, posinf=0.0, neginf=0.0)
        factor = factor * ratio[(...,) + (None,) * i]
    g = factor[..., None] * lat_g
    return stack[-1], g
