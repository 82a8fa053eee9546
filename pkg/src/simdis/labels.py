"""Label sets, the five pairwise label relations, and the pair weighting factors.

A label set is stored as an integer bitmask over a fixed universe of classes,
so intersections and differences are single word operations and every
cardinality is an exact integer.  Factor values are returned as exact
``Fraction`` objects whenever the penalty allows it.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Union

import numpy as np

from simdis.errors import ConfigurationError, DomainError

Number = Union[Fraction, float]


@dataclass(frozen=True)
class LabelSet:
    """A nonempty set of class indices drawn from ``range(universe_size)``."""

    bits: int
    universe_size: int

    def __post_init__(self):
        if self.universe_size < 1:
            raise ConfigurationError(f"universe_size must be positive, got {self.universe_size}")
        if self.bits <= 0:
            raise DomainError("label sets must contain at least one label")
        if self.bits >> self.universe_size:
            raise DomainError(
                f"label index out of range for universe of size {self.universe_size}"
            )

    @classmethod
    def of(cls, members: Iterable[int], universe_size: int) -> "LabelSet":
        bits = 0
        for m in members:
            m = int(m)
            if m < 0 or m >= universe_size:
                raise DomainError(f"label {m} not in [0, {universe_size})")
            bits |= 1 << m
        return cls(bits, universe_size)

    @classmethod
    def parse(cls, text: str, universe_size: int) -> "LabelSet":
        """Parse the ``"[0,1,2]"`` text form."""
        try:
            members = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"cannot parse label set {text!r}") from exc
        if not isinstance(members, list) or not all(
            isinstance(m, int) and not isinstance(m, bool) for m in members
        ):
            raise DomainError(f"label set must be a list of integers, got {text!r}")
        if len(set(members)) != len(members):
            raise DomainError(f"duplicate labels in {text!r}")
        return cls.of(members, universe_size)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(self)

    def __iter__(self) -> Iterator[int]:
        bits, i = self.bits, 0
        while bits:
            if bits & 1:
                yield i
            bits >>= 1
            i += 1

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, label: object) -> bool:
        return isinstance(label, int) and 0 <= label < self.universe_size and bool(
            self.bits >> label & 1
        )

    def __str__(self) -> str:
        return self.to_text()

    def to_text(self) -> str:
        return "[" + ",".join(str(m) for m in self) + "]"

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.universe_size, dtype=np.int64)
        out[list(self)] = 1
        return out

    def overlap(self, other: "LabelSet") -> int:
        """``|self & other|``."""
        return (self.bits & other.bits).bit_count()

    def excess(self, other: "LabelSet") -> int:
        """Number of labels in ``other`` that ``self`` lacks."""
        return (other.bits & ~self.bits).bit_count()

    def issubset(self, other: "LabelSet") -> bool:
        return self.bits & ~other.bits == 0


class RelationKind(enum.Enum):
    """How a sample's label set T relates to an anchor's label set S."""

    R1 = "R1"  # disjoint
    R2 = "R2"  # equal
    R3 = "R3"  # overlapping, neither contains the other
    R4 = "R4"  # anchor strictly contains sample
    R5 = "R5"  # sample strictly contains anchor


class Reciprocal:
    """Excess-label penalty ``x -> 1 / (1 + x)``."""

    def __call__(self, excess):
        return 1.0 / (1.0 + np.asarray(excess, dtype=np.float64))

    def exact(self, excess: int) -> Fraction:
        return Fraction(1, 1 + excess)

    def __eq__(self, other):
        return isinstance(other, Reciprocal)

    def __hash__(self):
        return hash("Reciprocal")

    def __repr__(self):
        return "Reciprocal()"

    def to_dict(self) -> dict:
        return {"kind": "reciprocal"}


@dataclass(frozen=True)
class ExponentialDecay:
    """Excess-label penalty ``x -> exp(-alpha * x)``."""

    alpha: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigurationError(f"ExponentialDecay alpha must be positive, got {self.alpha}")

    def __call__(self, excess):
        return np.exp(-self.alpha * np.asarray(excess, dtype=np.float64))

    def exact(self, excess: int) -> float:
        return math.exp(-self.alpha * excess)

    def to_dict(self) -> dict:
        return {"kind": "exponential", "alpha": self.alpha}


PenaltyKind = Union[Reciprocal, ExponentialDecay]


def penalty_from_dict(d) -> PenaltyKind:
    if d is None or d == "reciprocal":
        return Reciprocal()
    if isinstance(d, dict):
        kind = d.get("kind", "reciprocal")
        if kind == "reciprocal":
            return Reciprocal()
        if kind == "exponential":
            return ExponentialDecay(float(d.get("alpha", 1.0)))
    raise ConfigurationError(f"unknown penalty {d!r}")


@dataclass(frozen=True)
class PairFactors:
    similarity: Number
    dissimilarity: Number
    weight: Number
    overlap_card: int
    excess_card: int


def _check_pair(anchor: LabelSet, sample: LabelSet) -> None:
    if anchor.universe_size != sample.universe_size:
        raise ConfigurationError(
            f"universe sizes differ: {anchor.universe_size} vs {sample.universe_size}"
        )


def classify_relation(anchor: LabelSet, sample: LabelSet) -> RelationKind:
    _check_pair(anchor, sample)
    s, t = anchor.bits, sample.bits
    if s & t == 0:
        return RelationKind.R1
    if s == t:
        return RelationKind.R2
    if t & ~s == 0:
        return RelationKind.R4
    if s & ~t == 0:
        return RelationKind.R5
    return RelationKind.R3


def similarity_factor(anchor: LabelSet, sample: LabelSet) -> Fraction:
    """Fraction of the anchor's labels that the sample shares."""
    _check_pair(anchor, sample)
    return Fraction(anchor.overlap(sample), len(anchor))


def dissimilarity_factor(
    anchor: LabelSet, sample: LabelSet, penalty: PenaltyKind | None = None
) -> Number:
    """Penalty applied to the count of sample labels absent from the anchor."""
    _check_pair(anchor, sample)
    penalty = Reciprocal() if penalty is None else penalty
    return penalty.exact(anchor.excess(sample))


def pair_factors(
    anchor: LabelSet, sample: LabelSet, penalty: PenaltyKind | None = None
) -> PairFactors:
    ks = similarity_factor(anchor, sample)
    kd = dissimilarity_factor(anchor, sample, penalty)
    return PairFactors(
        similarity=ks,
        dissimilarity=kd,
        weight=ks * kd,
        overlap_card=anchor.overlap(sample),
        excess_card=anchor.excess(sample),
    )


def indicator_matrix(labels: Iterable[LabelSet]) -> np.ndarray:
    """Stack label sets into an ``n x universe_size`` 0/1 matrix."""
    labels = list(labels)
    if not labels:
        return np.zeros((0, 0), dtype=np.int64)
    size = labels[0].universe_size
    if any(y.universe_size != size for y in labels):
        raise ConfigurationError("label sets in one collection must share a universe")
    return np.stack([y.indicator() for y in labels])


def weight_matrix(labels: Iterable[LabelSet], penalty: PenaltyKind | None = None) -> np.ndarray:
    """All pairwise weights ``w[i, p]`` as float64, computed from indicator products."""
    penalty = Reciprocal() if penalty is None else penalty
    y = indicator_matrix(labels)
    overlap = y @ y.T
    sizes = y.sum(axis=1)
    excess = sizes[None, :] - overlap
    return overlap / sizes[:, None] * penalty(excess)
