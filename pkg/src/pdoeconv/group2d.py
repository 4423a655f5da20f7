"""Discrete point groups of the plane: cyclic C_n and dihedral D_n.

Elements are identified by the exact pair ``(rotation_index, reflected)``;
the orthogonal matrix is a derived view.  The reflected element with index
``k`` has matrix ``R(2*pi*k/n) @ diag(1, -1)`` (flip y, then rotate).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class InvalidOrderError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class GroupElement:
    rotation_index: int
    reflected: bool
    n: int = field(compare=True)

    def __post_init__(self):
        if not 0 <= self.rotation_index < self.n:
            raise ValueError(f"rotation index {self.rotation_index} outside [0, {self.n})")

    @property
    def angle(self) -> float:
        return 2.0 * math.pi * self.rotation_index / self.n

    @property
    def label(self) -> str:
        return f"{'m' if self.reflected else ''}r{self.rotation_index}"

    @property
    def is_identity(self) -> bool:
        return self.rotation_index == 0 and not self.reflected

    def matrix(self) -> np.ndarray:
        return _matrix(self.rotation_index, self.reflected, self.n).copy()

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return product(self, other)

    def __repr__(self):
        return f"GroupElement({self.label}, n={self.n})"


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    # snap the trig residue at multiples of pi/2 so 90-degree matrices are exact
    c = round(c) if abs(c - round(c)) < 1e-15 else c
    s = round(s) if abs(s - round(s)) < 1e-15 else s
    return np.array([[c, -s], [s, c]], dtype=float)


_MATRIX_CACHE: dict[tuple[int, bool, int], np.ndarray] = {}


def _matrix(k: int, reflected: bool, n: int) -> np.ndarray:
    key = (k, reflected, n)
    m = _MATRIX_CACHE.get(key)
    if m is None:
        m = _rotation(2.0 * math.pi * k / n)
        if reflected:
            m = m @ np.diag([1.0, -1.0])
        m.setflags(write=False)
        _MATRIX_CACHE[key] = m
    return m


def matrix(g: GroupElement) -> np.ndarray:
    return g.matrix()


def product(g1: GroupElement, g2: GroupElement) -> GroupElement:
    """Group product with matrix(g1 * g2) == matrix(g1) @ matrix(g2).

    Uses M R(t) = R(-t) M for the reflection M = diag(1, -1).
    """
    if g1.n != g2.n:
        raise ValueError(f"elements from different groups (n={g1.n} vs n={g2.n})")
    n = g1.n
    sign = -1 if g1.reflected else 1
    k = (g1.rotation_index + sign * g2.rotation_index) % n
    return GroupElement(k, g1.reflected != g2.reflected, n)


def inverse(g: GroupElement) -> GroupElement:
    if g.reflected:
        return g
    return GroupElement((-g.rotation_index) % g.n, False, g.n)


@dataclass(frozen=True)
class Group2D:
    n: int
    with_reflections: bool = False

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidOrderError(f"rotation order must be a positive integer, got {self.n!r}")

    @cached_property
    def elements(self) -> tuple[GroupElement, ...]:
        rots = [GroupElement(k, False, self.n) for k in range(self.n)]
        if not self.with_reflections:
            return tuple(rots)
        return tuple(rots + [GroupElement(k, True, self.n) for k in range(self.n)])

    @cached_property
    def _index(self) -> dict[GroupElement, int]:
        return {g: i for i, g in enumerate(self.elements)}

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i: int) -> GroupElement:
        return self.elements[i]

    def __contains__(self, g) -> bool:
        return g in self._index

    @property
    def identity(self) -> GroupElement:
        return self.elements[0]

    @property
    def spec(self) -> str:
        return f"p{self.n}{'m' if self.with_reflections else ''}"

    def index(self, g: GroupElement) -> int:
        try:
            return self._index[g]
        except KeyError:
            raise ValueError(f"{g!r} is not an element of {self.spec}") from None

    @cached_property
    def product_table(self) -> np.ndarray:
        """table[i, j] = index of elements[i] * elements[j]."""
        m = len(self)
        table = np.empty((m, m), dtype=np.int64)
        for i, a in enumerate(self.elements):
            for j, b in enumerate(self.elements):
                table[i, j] = self._index[product(a, b)]
        table.setflags(write=False)
        return table

    @cached_property
    def inverse_table(self) -> np.ndarray:
        inv = np.array([self._index[inverse(g)] for g in self.elements], dtype=np.int64)
        inv.setflags(write=False)
        return inv

    def element(self, label: str) -> GroupElement:
        """Parse an element label such as ``r1``, ``mr3`` or ``e``."""
        label = label.strip()
        if label in ("e", "id", "identity"):
            return self.identity
        m = re.fullmatch(r"(m?)r(\d+)", label)
        if m is None:
            raise ValueError(f"bad element label {label!r}; expected e, rK or mrK")
        reflected = bool(m.group(1))
        k = int(m.group(2))
        if reflected and not self.with_reflections:
            raise ValueError(f"{self.spec} has no reflections")
        if k >= self.n:
            raise ValueError(f"rotation index {k} out of range for {self.spec}")
        return GroupElement(k, reflected, self.n)


def make_group(n: int, with_reflections: bool = False) -> Group2D:
    return Group2D(n, with_reflections)


def parse_group(spec: str) -> Group2D:
    """Parse ``p4``, ``p8m``, ``p6`` ... into a group."""
    m = re.fullmatch(r"p(\d+)(m?)", spec.strip().lower())
    if m is None:
        raise ValueError(f"bad group spec {spec!r}; expected pN or pNm")
    return make_group(int(m.group(1)), bool(m.group(2)))


def is_grid_symmetry(g: GroupElement) -> bool:
    """True when g maps the square pixel lattice onto itself."""
    return (4 * g.rotation_index) % g.n == 0
