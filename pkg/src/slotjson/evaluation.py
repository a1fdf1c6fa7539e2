"""Object-level and key-value-level scoring of generated extractions.

Generated objects are first paired with identical gold objects. The rest are
paired by an optimal assignment that maximises the summed fuzzy similarity of
their canonical strings; whatever is left over stays unpaired. Counts are then
tallied per pairing class and micro-averaged over a corpus.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from fractions import Fraction
from itertools import permutations
from typing import Iterable, Sequence

from .core import (
    INTENT_KEY,
    ExtractionParseError,
    Extraction,
    IntentInstance,
    SlotJsonError,
    parse_extraction,
)

ORACLE_MAX_OBJECTS = 8


class SizeLimit(SlotJsonError):
    pass


# --- fuzzy similarity ------------------------------------------------------

def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence (bit-parallel, Allison-Dix)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    masks: dict[str, int] = {}
    for i, ch in enumerate(b):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    full = (1 << len(b)) - 1
    v = full
    for ch in a:
        u = v & masks.get(ch, 0)
        v = ((v + u) | (v - u)) & full
    return len(b) - bin(v).count("1")


def indel_distance(a: str, b: str) -> int:
    """Minimum number of single-character insertions and deletions."""
    return len(a) + len(b) - 2 * lcs_length(a, b)


def similarity_fraction(a: str, b: str) -> Fraction:
    total = len(a) + len(b)
    if total == 0:
        return Fraction(1)
    return 1 - Fraction(indel_distance(a, b), total)


def similarity(a: str, b: str) -> float:
    """Normalised indel similarity in [0, 1]; 1.0 for two empty strings."""
    return float(similarity_fraction(a, b))


def object_string(x: IntentInstance) -> str:
    """Deterministic string form used for fuzzy pairing (entity keys sorted)."""
    obj = {INTENT_KEY: x.intent.display}
    obj.update(sorted(x.entities))
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


# --- pairing ---------------------------------------------------------------

@dataclass(frozen=True)
class Pairing:
    exact_pairs: tuple[tuple[int, int], ...]
    fuzzy_pairs: tuple[tuple[int, int], ...]
    unpaired_gold: tuple[int, ...]
    unpaired_gen: tuple[int, ...]


def _exact_pairs(gold_strs: Sequence[str], gen_strs: Sequence[str]):
    used = [False] * len(gen_strs)
    pairs = []
    for i, g in enumerate(gold_strs):
        for j, h in enumerate(gen_strs):
            if not used[j] and g == h:
                used[j] = True
                pairs.append((i, j))
                break
    paired_gold = {i for i, _ in pairs}
    rest_gold = [i for i in range(len(gold_strs)) if i not in paired_gold]
    rest_gen = [j for j in range(len(gen_strs)) if not used[j]]
    return pairs, rest_gold, rest_gen


def hungarian(cost: Sequence[Sequence[int]]) -> list[int]:
    """Minimum-cost perfect assignment on a square matrix.

    Returns ``assign`` with ``assign[row] = column``. Potentials-based
    shortest augmenting path, O(n^3). Works on Python ints exactly, so very
    large integer costs are fine.
    """
    n = len(cost)
    if n == 0:
        return []
    INF = None  # sentinel; comparisons below treat None as +infinity
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)  # p[col] = row matched to col (1-based, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            row = cost[i0 - 1]
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if minv[j] is INF or cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if delta is INF or minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assign = [0] * n
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign


def _fuzzy_assignment(sims: list[list[Fraction]]) -> list[int | None]:
    """Optimal pairing of ``len(sims)`` gold rows onto generated columns.

    Maximises total similarity; among optimal pairings picks the
    lexicographically smallest column sequence in row order, treating an
    unpaired row as larger than any column. Encoded as one exact integer
    cost per cell: ``-similarity * K + tiebreak`` with base-(m+1) tie digits.
    """
    n = len(sims)
    m = len(sims[0]) if n else 0
    if n == 0 or m == 0:
        return [None] * n
    denom = 1
    for row in sims:
        for s in row:
            denom = denom * s.denominator // math.gcd(denom, s.denominator)
    base = m + 1
    scale = base ** n
    size = max(n, m)
    cost = [[0] * size for _ in range(size)]
    for i in range(size):
        weight = base ** (n - 1 - i) if i < n else 0
        for j in range(size):
            if i < n and j < m:
                primary = sims[i][j].numerator * (denom // sims[i][j].denominator)
                cost[i][j] = -primary * scale + j * weight
            elif i < n:
                cost[i][j] = m * weight
    assign = hungarian(cost)
    return [assign[i] if assign[i] < m else None for i in range(n)]


def pair_objects(gold: Sequence[IntentInstance], gen: Sequence[IntentInstance]) -> Pairing:
    gold_strs = [object_string(x) for x in gold]
    gen_strs = [object_string(x) for x in gen]
    exact, rest_gold, rest_gen = _exact_pairs(gold_strs, gen_strs)
    sims = [[similarity_fraction(gold_strs[i], gen_strs[j]) for j in rest_gen] for i in rest_gold]
    chosen = _fuzzy_assignment(sims)
    fuzzy = []
    taken = set()
    for gi, col in zip(rest_gold, chosen):
        if col is not None:
            fuzzy.append((gi, rest_gen[col]))
            taken.add(rest_gen[col])
    paired_gold = {i for i, _ in fuzzy}
    return Pairing(
        exact_pairs=tuple(exact),
        fuzzy_pairs=tuple(fuzzy),
        unpaired_gold=tuple(i for i in rest_gold if i not in paired_gold),
        unpaired_gen=tuple(j for j in rest_gen if j not in taken),
    )


# --- counting --------------------------------------------------------------

@dataclass(frozen=True)
class EvalCounts:
    obj_tp: int = 0
    obj_fp: int = 0
    obj_fn: int = 0
    kv_tp: int = 0
    kv_fp: int = 0
    kv_fn: int = 0

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def object_scores(self) -> "Scores":
        return prf1(self.obj_tp, self.obj_fp, self.obj_fn)

    @property
    def kv_scores(self) -> "Scores":
        return prf1(self.kv_tp, self.kv_fp, self.kv_fn)


def _count(gold: Sequence[IntentInstance], gen: Sequence[IntentInstance], pairing: Pairing) -> EvalCounts:
    obj_tp = obj_fp = obj_fn = kv_tp = kv_fp = kv_fn = 0
    for i, _ in pairing.exact_pairs:
        obj_tp += 1
        kv_tp += len(gold[i].pairs())
    for i, j in pairing.fuzzy_pairs:
        obj_fp += 1
        g = dict(gold[i].pairs())
        h = dict(gen[j].pairs())
        for key, value in h.items():
            if key in g and g[key] == value:
                kv_tp += 1
            else:
                kv_fp += 1
        kv_fn += sum(1 for key in g if key not in h)
    for j in pairing.unpaired_gen:
        obj_fp += 1
        kv_fp += len(gen[j].pairs())
    for i in pairing.unpaired_gold:
        obj_fn += 1
        kv_fn += len(gold[i].pairs())
    return EvalCounts(obj_tp, obj_fp, obj_fn, kv_tp, kv_fp, kv_fn)


def score_record(gold: Extraction, gen: Extraction) -> EvalCounts:
    gold_objs = list(gold)
    gen_objs = list(gen)
    return _count(gold_objs, gen_objs, pair_objects(gold_objs, gen_objs))


def miss_counts(gold: Extraction) -> EvalCounts:
    """Counts for a record whose generation could not be parsed."""
    return EvalCounts(obj_fn=len(gold), kv_fn=sum(len(x.pairs()) for x in gold))


def oracle_score_record(gold: Extraction, gen: Extraction) -> EvalCounts:
    """Reference scorer: exhaustive search over every injective pairing.

    Kept deliberately naive (Fraction totals, explicit enumeration, set-based
    counting) so it shares nothing with the assignment solver.
    """
    gold_objs = list(gold)
    gen_objs = list(gen)
    pool = list(range(len(gen_objs)))
    exact = []
    for i, g in enumerate(gold_objs):
        for j in pool:
            if g.intent == gen_objs[j].intent and set(g.entities) == set(gen_objs[j].entities):
                exact.append((i, j))
                pool.remove(j)
                break
    rest_gold = [i for i in range(len(gold_objs)) if i not in {a for a, _ in exact}]
    rest_gen = pool
    n, m = len(rest_gold), len(rest_gen)
    if n > ORACLE_MAX_OBJECTS or m > ORACLE_MAX_OBJECTS:
        raise SizeLimit(f"oracle handles at most {ORACLE_MAX_OBJECTS} unmatched objects per side")

    strs_g = [object_string(gold_objs[i]) for i in rest_gold]
    strs_h = [object_string(gen_objs[j]) for j in rest_gen]
    sim = [[similarity_fraction(a, b) for b in strs_h] for a in strs_g]

    candidates = []
    if n <= m:
        for perm in permutations(range(m), n):
            candidates.append(list(perm))
    else:
        for perm in permutations(range(n), m):
            seq = [m] * n  # m marks an unpaired gold object
            for col, row in enumerate(perm):
                seq[row] = col
            candidates.append(seq)
    best = None
    best_key = None
    for seq in candidates:
        total = sum((sim[r][c] for r, c in enumerate(seq) if c < m), Fraction(0))
        key = (-total, seq)
        if best_key is None or key < best_key:
            best, best_key = seq, key
    fuzzy = [(rest_gold[r], rest_gen[c]) for r, c in enumerate(best or []) if c < m]

    counts = EvalCounts(obj_tp=len(exact), kv_tp=sum(len(gold_objs[i].pairs()) for i, _ in exact))
    for i, j in fuzzy:
        g = set(gold_objs[i].pairs())
        h = set(gen_objs[j].pairs())
        g_keys = {k for k, _ in g}
        h_keys = {k for k, _ in h}
        counts += EvalCounts(
            obj_fp=1, kv_tp=len(g & h), kv_fp=len(h - g), kv_fn=len(g_keys - h_keys)
        )
    paired_g = {i for i, _ in exact} | {i for i, _ in fuzzy}
    paired_h = {j for _, j in exact} | {j for _, j in fuzzy}
    for i, x in enumerate(gold_objs):
        if i not in paired_g:
            counts += EvalCounts(obj_fn=1, kv_fn=len(x.pairs()))
    for j, x in enumerate(gen_objs):
        if j not in paired_h:
            counts += EvalCounts(obj_fp=1, kv_fp=len(x.pairs()))
    return counts


# --- scores ----------------------------------------------------------------

@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float

    def rounded(self, ndigits: int = 4) -> dict[str, float]:
        return {
            "precision": round(self.precision, ndigits),
            "recall": round(self.recall, ndigits),
            "f1": round(self.f1, ndigits),
        }


def prf1(tp: int, fp: int, fn: int) -> Scores:
    """Precision, recall and F1. All-zero counts score a perfect 1.0."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    if tp == fp == fn == 0:
        return Scores(1.0, 1.0, 1.0)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return Scores(p, r, f1)


@dataclass(frozen=True)
class EvalReport:
    per_record: tuple[tuple[str, EvalCounts], ...]
    totals: EvalCounts
    object_scores: Scores
    kv_scores: Scores
    parse_failures: int
    failed_ids: tuple[str, ...] = ()

    def to_json(self, version: str | None = None) -> dict:
        out = {
            "object_scores": self.object_scores.rounded(4),
            "kv_scores": self.kv_scores.rounded(4),
            "totals": self.totals.as_dict(),
            "parse_failures": self.parse_failures,
            "failed_ids": list(self.failed_ids),
            "per_record": [{"id": rid, **c.as_dict()} for rid, c in self.per_record],
        }
        if version is not None:
            out["version"] = version
        return out

    def summary_lines(self) -> list[str]:
        o, k = self.object_scores, self.kv_scores
        return [
            f"object    precision={o.precision:.4f} recall={o.recall:.4f} f1={o.f1:.4f}",
            f"key-value precision={k.precision:.4f} recall={k.recall:.4f} f1={k.f1:.4f}",
            f"records={len(self.per_record)} parse_failures={self.parse_failures}",
        ]


def _score_one(item) -> tuple[EvalCounts, str | None]:
    gold, text = item
    try:
        gen = parse_extraction(text)
    except ExtractionParseError as exc:
        return miss_counts(gold), exc.reason
    return score_record(gold, gen), None


def score_corpus(
    records: Iterable[tuple[Extraction, str]],
    ids: Sequence[str] | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Score ``(gold, generated text)`` pairs and micro-average the counts.

    Unparseable generations count every gold object and pair as a false
    negative instead of raising.
    """
    records = list(records)
    if ids is None:
        ids = [str(i) for i in range(len(records))]
    if len(ids) != len(records):
        raise ValueError("ids and records differ in length")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_one, records))
    else:
        results = [_score_one(r) for r in records]
    totals = EvalCounts()
    for counts, _ in results:
        totals += counts
    failed = tuple(rid for rid, (_, err) in zip(ids, results) if err is not None)
    return EvalReport(
        per_record=tuple((rid, counts) for rid, (counts, _) in zip(ids, results)),
        totals=totals,
        object_scores=totals.object_scores,
        kv_scores=totals.kv_scores,
        parse_failures=len(failed),
        failed_ids=failed,
    )
