"""Independent oracles and property harnesses.

Nothing here reuses the vectorised code paths in :mod:`simdis.losses`: the
oracle walks anchors, positives and labels with explicit loops in extended
precision, and the theorem checks work on exact rationals from
:mod:`simdis.labels`.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Iterator

import numpy as np

from simdis import labels as _labels
from simdis.errors import ConfigurationError, DomainError
from simdis.labels import LabelSet, RelationKind, classify_relation
from simdis.losses import ContrastiveBatch, Placement, Strategy, StrategyKind, evaluate

ORACLE_MAX_BATCH = 64
GRAD_TOLERANCE = 1e-6


@dataclass
class PropertyReport:
    property_name: str
    trials: int
    failures: int
    seed: int | None = None
    first_counterexample: str | None = None
    max_error: float | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _sub_rng(seed: int, index: int) -> random.Random:
    # independent stream per (seed, index) so trial order never matters
    return random.Random((seed & 0xFFFFFFFFFFFFFFFF) << 64 | (index & 0xFFFFFFFFFFFFFFFF))


def sub_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, index])


# --------------------------------------------------------------------------
# loss oracle


def oracle_loss(batch: ContrastiveBatch, strategy: Strategy) -> float:
    """Batch loss by direct nested summation, no log-sum-exp shift."""
    n = len(batch)
    if n > ORACLE_MAX_BATCH:
        raise DomainError(f"oracle refuses batches larger than {ORACLE_MAX_BATCH}")
    ld = np.longdouble
    z = batch.embeddings.astype(ld)
    tau = ld(batch.temperature)
    ys = batch.labels

    def sim(i, j):
        acc = ld(0)
        for a, b in zip(z[i], z[j]):
            acc += a * b
        return acc / tau

    e = [[np.exp(sim(i, j)) for j in range(n)] for i in range(n)]
    denom = []
    for i in range(n):
        acc = ld(0)
        for a in range(n):
            if a != i:
                acc += e[i][a]
        denom.append(acc)

    def log_ratio(i, p, weight=ld(1)):
        return np.log(weight * e[i][p] / denom[i])

    total = ld(0)
    if strategy.kind is StrategyKind.MULSUPCON:
        for i in range(n):
            for label in ys[i]:
                members = [p for p in range(n) if p != i and label in ys[p]]
                if not members:
                    continue
                term = ld(0)
                for p in members:
                    term += log_ratio(i, p)
                total += -term / len(members)
        return float(total / sum(len(y) for y in ys))

    for i in range(n):
        if strategy.kind is StrategyKind.ALL:
            positives = [p for p in range(n) if p != i and ys[p] == ys[i]]
        else:
            positives = [p for p in range(n) if p != i and ys[p].overlap(ys[i]) > 0]
        if not positives:
            continue
        term = ld(0)
        for p in positives:
            if strategy.kind is not StrategyKind.SIMDIS:
                term += log_ratio(i, p)
                continue
            f = _labels.pair_factors(ys[i], ys[p], strategy.penalty)
            w = ld(f.weight.numerator) / ld(f.weight.denominator) if isinstance(
                f.weight, Fraction
            ) else ld(f.weight)
            if strategy.placement is Placement.INSIDE_LOG:
                term += log_ratio(i, p, w)
            elif strategy.placement is Placement.OUTSIDE_LOG:
                term += w * log_ratio(i, p)
            else:
                term += np.log(np.exp(sim(i, p) * w) / denom[i])
        total += -term / len(positives)
    return float(total)


# --------------------------------------------------------------------------
# gradient check


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        fp = f(x)
        x[idx] = orig - step
        fm = f(x)
        x[idx] = orig
        out[idx] = (fp - fm) / (2 * step)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max entrywise difference relative to the larger of the two gradients' max-norms."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    diff = np.abs(analytic - numeric).max()
    return float(diff / scale) if scale > 0 else float(diff)


def grad_check(
    batch: ContrastiveBatch,
    strategy: Strategy,
    step: float = 1e-5,
    tolerance: float = GRAD_TOLERANCE,
    absolute_floor: float = 1e-8,
) -> PropertyReport:
    """Compare the analytic loss gradient with central finite differences.

    Gradients whose entries are all below ``absolute_floor`` (the symmetric,
    degenerate batches) are compared absolutely instead of relatively.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ConfigurationError(f"step must lie in [1e-7, 1e-3], got {step}")
    analytic = evaluate(batch, strategy).gradient

    def f(z):
        return evaluate(batch.with_embeddings(z), strategy, with_gradient=False).total

    numeric = numeric_gradient(f, batch.embeddings, step)
    if max(np.abs(analytic).max(), np.abs(numeric).max()) < absolute_floor:
        err = float(np.abs(analytic - numeric).max())
        ok = err < absolute_floor
    else:
        err = relative_error(analytic, numeric)
        ok = err < tolerance
    return PropertyReport(
        property_name=f"grad_check[{strategy.name}]",
        trials=1,
        failures=0 if ok else 1,
        first_counterexample=None if ok else batch.to_json(),
        max_error=err,
    )


# --------------------------------------------------------------------------
# random batches


def random_label_set(rng: random.Random, universe_size: int) -> LabelSet:
    """Cardinality uniform in ``[1, universe_size]``, members without replacement."""
    k = rng.randint(1, universe_size)
    return LabelSet.of(rng.sample(range(universe_size), k), universe_size)


def random_batch(
    seed: int,
    index: int = 0,
    max_size: int = 32,
    max_dim: int = 16,
    universe_size: int | None = None,
    normalize: bool = True,
    paired: bool = False,
) -> ContrastiveBatch:
    """A seeded random batch; with ``paired`` rows come in equal-label pairs."""
    gen = sub_generator(seed, index)
    r = _sub_rng(seed, index)
    n = int(gen.integers(2, max_size + 1))
    if paired:
        n += n % 2
        n = min(n, max_size - max_size % 2)
    d = int(gen.integers(1, max_dim + 1))
    size = universe_size or int(gen.integers(1, 7))
    z = gen.normal(size=(n, d))
    if normalize:
        z /= np.linalg.norm(z, axis=1, keepdims=True)
    tau = float(gen.choice([0.07, 0.1, 0.5, 1.0]))
    if paired:
        ys = []
        for _ in range(n // 2):
            y = random_label_set(r, size)
            ys += [y, y]
    else:
        ys = [random_label_set(r, size) for _ in range(n)]
    return ContrastiveBatch(z, tuple(ys), tau)


# --------------------------------------------------------------------------
# theorem harness


def nonempty_subsets(universe_size: int) -> list[LabelSet]:
    return [LabelSet(bits, universe_size) for bits in range(1, 1 << universe_size)]


class _Tally:
    def __init__(self, name, seed):
        self.report = PropertyReport(name, 0, 0, seed)

    def check(self, ok: bool, *sets: LabelSet):
        self.report.trials += 1
        if not ok:
            self.report.failures += 1
            if self.report.first_counterexample is None:
                self.report.first_counterexample = json.dumps(
                    {
                        "universe_size": sets[0].universe_size,
                        "sets": [list(s) for s in sets],
                    }
                )


THEOREM_NAMES = (
    "partition",
    "cardinality_identity",
    "disjoint_zero",
    "equal_one",
    "strict_bounds",
    "subset_dominates_overlap",
    "superset_dominates_overlap",
    "complete_ordering",
)


class _TheoremChecker:
    def __init__(self, factors, seed=None):
        self.factors = factors
        self.t = {name: _Tally(name, seed) for name in THEOREM_NAMES}

    def pair(self, s: LabelSet, t: LabelSet):
        """Single-pair properties; returns (relation, weight)."""
        sb, tb = s.bits, t.bits
        hits = [
            sb & tb == 0,
            sb == tb,
            sb & tb != 0 and sb & ~tb != 0 and tb & ~sb != 0,
            sb != tb and tb & ~sb == 0,
            sb != tb and sb & ~tb == 0,
        ]
        rel = classify_relation(s, t)
        self.t["partition"].check(
            sum(hits) == 1 and hits[int(rel.value[1]) - 1], s, t
        )
        f = self.factors(s, t, _labels.Reciprocal())
        w = f.weight
        self.t["cardinality_identity"].check(
            f.excess_card + f.overlap_card == len(t) and f.excess_card >= 0
            and w == f.similarity * f.dissimilarity,
            s, t,
        )
        if rel is RelationKind.R1:
            self.t["disjoint_zero"].check(w == 0, s, t)
        elif rel is RelationKind.R2:
            self.t["equal_one"].check(w == 1, s, t)
        else:
            self.t["strict_bounds"].check(0 < w < 1, s, t)
        self.t["complete_ordering"].check(
            (w == 0) if rel is RelationKind.R1 else (w == 1) if rel is RelationKind.R2
            else 0 < w < 1,
            s, t,
        )
        return rel, f

    def subset_dominance(self, s, t3, f3, t4, f4):
        if len(t3) == len(t4):
            self.t["subset_dominates_overlap"].check(f4.weight > f3.weight, s, t3, t4)

    def superset_dominance(self, s, t3, f3, t5, f5):
        if f5.excess_card <= f3.excess_card:
            self.t["superset_dominates_overlap"].check(f5.weight > f3.weight, s, t3, t5)

    def reports(self) -> list[PropertyReport]:
        return [self.t[name].report for name in THEOREM_NAMES]


def check_theorems(
    universe_size: int,
    exhaustive: bool = True,
    trials: int = 100_000,
    seed: int = 0,
    factors: Callable | None = None,
) -> list[PropertyReport]:
    """Check the weight theorems over label-set pairs.

    Exhaustive mode enumerates every ordered pair of nonempty subsets (and,
    for the two dominance theorems, every qualifying triple sharing an
    anchor).  Randomized mode draws ``trials`` independent anchors per seed;
    each trial tests one random pair plus a constructed overlap, subset and
    superset of the anchor so the dominance theorems are exercised at any
    universe size.
    """
    factors = factors or _labels.pair_factors
    if exhaustive:
        if not 1 <= universe_size <= 5:
            raise ConfigurationError("exhaustive checks need 1 <= universe_size <= 5")
        checker = _TheoremChecker(factors)
        subsets = nonempty_subsets(universe_size)
        for s in subsets:
            by_rel: dict[RelationKind, list] = {r: [] for r in RelationKind}
            for t in subsets:
                rel, f = checker.pair(s, t)
                by_rel[rel].append((t, f))
            for (t3, f3), (t4, f4) in itertools.product(by_rel[RelationKind.R3], by_rel[RelationKind.R4]):
                checker.subset_dominance(s, t3, f3, t4, f4)
            for (t3, f3), (t5, f5) in itertools.product(by_rel[RelationKind.R3], by_rel[RelationKind.R5]):
                checker.superset_dominance(s, t3, f3, t5, f5)
        return checker.reports()

    if universe_size < 1:
        raise ConfigurationError("universe_size must be positive")
    checker = _TheoremChecker(factors, seed)
    for k in range(trials):
        rng = _sub_rng(seed, k)
        s = random_label_set(rng, universe_size)
        t = random_label_set(rng, universe_size)
        checker.pair(s, t)
        t3, t4, t5 = _constructed_relatives(rng, s)
        if t3 is None:
            continue
        _, f3 = checker.pair(s, t3)
        if t4 is not None:
            _, f4 = checker.pair(s, t4)
            checker.subset_dominance(s, t3, f3, t4, f4)
        if t5 is not None:
            _, f5 = checker.pair(s, t5)
            checker.superset_dominance(s, t3, f3, t5, f5)
    return checker.reports()


def _constructed_relatives(rng: random.Random, s: LabelSet):
    """Random R3, R4 and R5 partners for ``s``, each ``None`` when impossible.

    The R4 partner has the same cardinality as the R3 partner when that is
    achievable, so the cardinality hypothesis of the subset-dominance check
    is met often.
    """
    size = s.universe_size
    inside = list(s)
    outside = [c for c in range(size) if c not in s]
    if len(inside) < 2 or not outside:
        return None, None, None
    shared = rng.randint(1, len(inside) - 1)
    extra = rng.randint(1, len(outside))
    t3 = LabelSet.of(rng.sample(inside, shared) + rng.sample(outside, extra), size)
    k4 = len(t3) if len(t3) < len(inside) else rng.randint(1, len(inside) - 1)
    t4 = LabelSet.of(rng.sample(inside, k4), size)
    t5 = LabelSet.of(inside + rng.sample(outside, rng.randint(1, len(outside))), size)
    return t3, t4, t5


def iter_report_lines(reports) -> Iterator[str]:
    for r in reports:
        yield r.to_json()
