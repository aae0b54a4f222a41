"""Weak compositions, multinomial coefficients and inverse-multinomial sums.

All sums are exact :class:`fractions.Fraction` values; floats appear only in
reports.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .errors import CapExceeded, SumMismatch

K_CAP = 64
N_CAP = 16


class Selector(enum.Enum):
    ALL = "all"
    AT_LEAST_TWO_POSITIVE = "at_least_two_positive"
    ALL_POSITIVE = "all_positive"
    ALL_POSITIVE_THREE_GT1 = "all_positive_three_gt1"

    def accepts(self, parts) -> bool:
        if self is Selector.ALL:
            return True
        if self is Selector.AT_LEAST_TWO_POSITIVE:
            return sum(1 for p in parts if p > 0) >= 2
        if min(parts, default=1) < 1:
            return False
        if self is Selector.ALL_POSITIVE:
            return True
        return sum(1 for p in parts if p > 1) >= 3


def _check_caps(k: int, N: int) -> None:
    if k < 0 or N < 0:
        raise ValueError("k and N must be nonnegative")
    if k > K_CAP or N > N_CAP:
        raise CapExceeded(f"(k={k}, N={N}) exceeds caps k <= {K_CAP}, N <= {N_CAP}")


def _weak(k: int, N: int, lo: int) -> Iterator[tuple[int, ...]]:
    # lexicographic, every part >= lo
    if N == 0:
        if k == 0:
            yield ()
        return
    if N == 1:
        if k >= lo:
            yield (k,)
        return
    for first in range(lo, k - lo * (N - 1) + 1):
        for rest in _weak(k - first, N - 1, lo):
            yield (first,) + rest


def enumerate_compositions(k: int, N: int, sel: Selector = Selector.ALL) -> list[tuple[int, ...]]:
    """All ``N``-tuples of nonnegative integers summing to ``k`` accepted by ``sel``.

    Order is lexicographic, so output is reproducible byte for byte.
    """
    _check_caps(k, N)
    lo = 1 if sel in (Selector.ALL_POSITIVE, Selector.ALL_POSITIVE_THREE_GT1) else 0
    gen = _weak(k, N, lo)
    if sel in (Selector.ALL, Selector.ALL_POSITIVE):
        return list(gen)
    return [c for c in gen if sel.accepts(c)]


def multinomial(k: int, parts) -> int:
    """``k! / prod(parts_i!)`` in exact integer arithmetic."""
    if sum(parts) != k:
        raise SumMismatch(f"parts {tuple(parts)} do not sum to {k}")
    if any(p < 0 for p in parts):
        raise ValueError("parts must be nonnegative")
    out = math.factorial(k)
    for p in parts:
        out //= math.factorial(p)
    return out


def _factorial_product_sum(compositions, fact) -> int:
    total = 0
    for c in compositions:
        prod = 1
        for p in c:
            prod *= fact[p]
        total += prod
    return total


def inverse_multinomial_sum(k: int, N: int, sel: Selector = Selector.ALL) -> Fraction:
    """Exact ``sum over enumerate_compositions(k, N, sel) of 1/multinomial``."""
    comps = enumerate_compositions(k, N, sel)
    fact = [math.factorial(i) for i in range(k + 1)]
    return Fraction(_factorial_product_sum(comps, fact), fact[k])


def inverse_multinomial_sum_dp(k: int, N: int, sel: Selector = Selector.ALL) -> Fraction:
    """Same quantity as :func:`inverse_multinomial_sum` via slot-by-slot dynamic programming.

    State is (running sum, positive parts capped at 2, parts > 1 capped at 3);
    no tuple is ever materialized.
    """
    _check_caps(k, N)
    fact = [math.factorial(i) for i in range(k + 1)]
    lo = 1 if sel in (Selector.ALL_POSITIVE, Selector.ALL_POSITIVE_THREE_GT1) else 0
    table = {(0, 0, 0): 1}
    for _ in range(N):
        nxt: dict[tuple[int, int, int], int] = {}
        for (s, npos, ngt1), w in table.items():
            for v in range(lo, k - s + 1):
                key = (s + v, min(npos + (v > 0), 2), min(ngt1 + (v > 1), 3))
                nxt[key] = nxt.get(key, 0) + w * fact[v]
        table = nxt
    total = 0
    for (s, npos, ngt1), w in table.items():
        if s != k:
            continue
        if sel is Selector.AT_LEAST_TWO_POSITIVE and npos < 2:
            continue
        if sel is Selector.ALL_POSITIVE_THREE_GT1 and ngt1 < 3:
            continue
        total += w
    return Fraction(total, fact[k])


def partition_identity_rhs(k: int, N: int, all_positive: dict[int, Fraction]) -> Fraction:
    """Right side of the split of ``[k_1..k_N]_k`` by zero set.

    ``all_positive[m]`` is the ALL_POSITIVE sum with ``m`` slots at this
    ``k``; the all-zero term counts 1 only when ``k == 0``.
    """
    total = Fraction(int(k == 0))
    for alpha in range(N):
        total += math.comb(N, alpha) * all_positive[N - alpha]
    return total


@dataclass
class InverseMultinomialReport:
    n_max: int
    k_max: int
    k_check: int
    rows: list[tuple[int, int, str, Fraction]] = field(repr=False)
    sup_all: dict[int, Fraction]
    sup_all_check: dict[int, Fraction]
    sup_positive: dict[int, Fraction]
    sup_positive_check: dict[int, Fraction]
    C_fitted: Fraction
    three_gt1_max: Fraction
    partition_ok: bool

    @property
    def stable(self) -> bool:
        return self.sup_all == self.sup_all_check and self.sup_positive == self.sup_positive_check

    @property
    def passed(self) -> bool:
        return self.three_gt1_max <= 4 and self.partition_ok and self.stable

    def summary(self) -> dict:
        return {
            "N_max": self.n_max,
            "k_max": self.k_max,
            "C_fitted": float(self.C_fitted),
            "C_fitted_exact": str(self.C_fitted),
            "sup_by_N": {str(N): str(v) for N, v in self.sup_all.items()},
            "three_gt1_max": float(self.three_gt1_max),
            "three_gt1_max_exact": str(self.three_gt1_max),
            "stable_in_k": self.stable,
            "partition_identity": self.partition_ok,
            "pass": self.passed,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "k", "selector", "exact", "double"])
        for N, k, sel, v in self.rows:
            w.writerow([N, k, sel, str(v), repr(float(v))])
        return buf.getvalue()


def verify_lemma(n_max: int = 8, k_max: int = 20, k_check: int = 15) -> InverseMultinomialReport:
    """Brute-force check of the inverse-multinomial bound.

    For each ``N <= n_max`` and ``1 <= k <= k_max`` every weak composition is
    enumerated once and classified into the four selectors.  The fitted
    constant is the smallest ``C`` with ``sup_k sum_ALL <= C 2^N`` for all
    ``N``; stability compares suprema over ``k <= k_check`` and ``k <= k_max``.
    """
    _check_caps(k_max, n_max)
    if not 1 <= k_check <= k_max:
        raise ValueError("need 1 <= k_check <= k_max")
    fact = [math.factorial(i) for i in range(k_max + 1)]
    rows = []
    sums: dict[tuple[int, int, Selector], Fraction] = {}
    for N in range(1, n_max + 1):
        for k in range(1, k_max + 1):
            acc = dict.fromkeys(Selector, 0)
            for c in _weak(k, N, 0):
                prod = 1
                npos = ngt1 = 0
                for p in c:
                    prod *= fact[p]
                    npos += p > 0
                    ngt1 += p > 1
                acc[Selector.ALL] += prod
                if npos >= 2:
                    acc[Selector.AT_LEAST_TWO_POSITIVE] += prod
                if npos == N:
                    acc[Selector.ALL_POSITIVE] += prod
                    if ngt1 >= 3:
                        acc[Selector.ALL_POSITIVE_THREE_GT1] += prod
            for sel in Selector:
                v = Fraction(acc[sel], fact[k])
                sums[N, k, sel] = v
                rows.append((N, k, sel.value, v))

    def sup(sel, N, upto):
        return max(sums[N, k, sel] for k in range(1, upto + 1))

    Ns = range(1, n_max + 1)
    sup_all = {N: sup(Selector.ALL, N, k_max) for N in Ns}
    partition_ok = all(
        sums[N, k, Selector.ALL]
        == partition_identity_rhs(k, N, {m: sums[m, k, Selector.ALL_POSITIVE] for m in range(1, N + 1)})
        for N in Ns
        for k in range(1, k_max + 1)
    )
    return InverseMultinomialReport(
        n_max=n_max,
        k_max=k_max,
        k_check=k_check,
        rows=rows,
        sup_all=sup_all,
        sup_all_check={N: sup(Selector.ALL, N, k_check) for N in Ns},
        sup_positive={N: sup(Selector.ALL_POSITIVE, N, k_max) for N in Ns},
        sup_positive_check={N: sup(Selector.ALL_POSITIVE, N, k_check) for N in Ns},
        C_fitted=max(sup_all[N] / 2**N for N in Ns),
        three_gt1_max=max(v for (_, _, sel), v in sums.items() if sel is Selector.ALL_POSITIVE_THREE_GT1),
        partition_ok=partition_ok,
    )
