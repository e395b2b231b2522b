"""Summary statistics and the two nonparametric group tests.

Both tests report two-sided p-values.  In exact mode the p-value is the
null-distribution mass at least as far from the null mean as the observed
statistic; ties are handled with midranks, which keeps the exact mode valid
(it is then a permutation test over the observed rank multiset).  Above the
exact-size cutoffs a normal approximation with tie correction is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import (
    AllZeroDifferences,
    EmptyInput,
    LengthMismatch,
    SampleTooSmall,
    ZeroValidationLoss,
)

SIGNIFICANCE_LEVEL = 0.05

# largest n for which the exact null distribution is enumerated
WILCOXON_EXACT_MAX_N = 25
MANN_WHITNEY_EXACT_MAX_N = 14


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float  # population denominator n by default
    median: float
    n: int


@dataclass(frozen=True)
class ComparisonResult:
    test: str
    statistic: float
    p_value: float
    n_a: int
    n_b: int

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL


@dataclass(frozen=True)
class RatioSeries:
    per_epoch_ratios: tuple[float, ...]
    mean: float
    std: float

    @property
    def overfit_flag(self) -> bool:
        return self.mean < 1.0


def summarize(values: Sequence[float], population_std: bool = True) -> SummaryStats:
    if len(values) == 0:
        raise EmptyInput("no values to summarize")
    arr = np.asarray(values, dtype=np.float64)
    ddof = 0 if population_std else 1
    return SummaryStats(
        mean=float(arr.mean()),
        std=float(arr.std(ddof=ddof)) if len(arr) > ddof else 0.0,
        median=float(np.median(arr)),
        n=len(arr),
    )


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Midranks (average ranks for ties), 1-based."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _normal_two_sided(z: float) -> float:
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def _exact_two_sided_from_counts(counts: np.ndarray, observed: float, mean: float) -> float:
    """Mass of a discrete null distribution at least as extreme as observed.

    ``counts[s]`` is the number of outcomes with statistic value s (in
    whatever integer units the caller chose); extremity is distance from
    ``mean`` in those same units.
    """
    dev = abs(observed - mean)
    lo_edge = mean - dev
    hi_edge = mean + dev
    lo = counts[: int(math.floor(lo_edge + 1e-9)) + 1].sum()
    hi = counts[int(math.ceil(hi_edge - 1e-9)):].sum()
    if dev < 1e-9:  # observed sits on the mean: both tails cover everything
        return 1.0
    return min(1.0, float(lo + hi) / counts.sum())


def wilcoxon_signed_rank(
    a: Sequence[float], b: Sequence[float], mode: str = "auto"
) -> ComparisonResult:
    """Paired signed-rank test; zero differences are dropped.

    Exact mode enumerates the 2^n sign assignments over the observed
    (mid)ranks via a subset-sum count; it applies whenever the post-drop n
    is at most WILCOXON_EXACT_MAX_N.  The statistic is min(W+, W-).
    """
    if len(a) != len(b):
        raise LengthMismatch(f"paired test needs equal lengths, got {len(a)} vs {len(b)}")
    if len(a) < 6:
        raise SampleTooSmall("signed-rank test needs at least 6 pairs")
    if mode not in ("auto", "exact", "approx"):
        raise ValueError(f"unknown mode {mode!r}")

    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    diff = diff[diff != 0.0]
    n = len(diff)
    if n == 0:
        raise AllZeroDifferences("every pair is identical")

    ranks = _rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    total = float(ranks.sum())
    statistic = min(w_plus, total - w_plus)

    exact = mode == "exact" or (mode == "auto" and n <= WILCOXON_EXACT_MAX_N)
    if exact:
        # doubled ranks are integers even with .5 midranks
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        dist = np.zeros(int(doubled.sum()) + 1, dtype=np.float64)
        dist[0] = 1.0
        for r in doubled:
            shifted = np.zeros_like(dist)
            shifted[r:] = dist[:-r]
            dist += shifted
        p = _exact_two_sided_from_counts(dist, 2.0 * w_plus, float(doubled.sum()) / 2.0)
    else:
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_sizes = np.unique(ranks, return_counts=True)
        var -= float((tie_sizes.astype(np.float64) ** 3 - tie_sizes).sum()) / 48.0
        p = _normal_two_sided((statistic - mean) / math.sqrt(var))

    return ComparisonResult(
        test="wilcoxon_signed_rank", statistic=statistic, p_value=p,
        n_a=len(a), n_b=len(b),
    )


def mann_whitney_u(
    a: Sequence[float], b: Sequence[float], mode: str = "auto"
) -> ComparisonResult:
    """Unpaired rank-sum test.

    Exact mode enumerates every assignment of the pooled (mid)ranks to the
    first group when n_a + n_b is at most MANN_WHITNEY_EXACT_MAX_N; the
    approximation uses the tie-corrected normal with continuity correction.
    The statistic is min(U_a, U_b).
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("both samples must be nonempty")
    if len(a) < 3 or len(b) < 3:
        raise SampleTooSmall("rank-sum test needs at least 3 values per group")
    if mode not in ("auto", "exact", "approx"):
        raise ValueError(f"unknown mode {mode!r}")

    n1, n2 = len(a), len(b)
    pooled = np.concatenate([np.asarray(a, np.float64), np.asarray(b, np.float64)])
    ranks = _rankdata(pooled)
    u1 = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    statistic = min(u1, n1 * n2 - u1)

    exact = mode == "exact" or (mode == "auto" and n1 + n2 <= MANN_WHITNEY_EXACT_MAX_N)
    if exact:
        dev = abs(u1 - mu)
        extreme = 0
        total = 0
        for chosen in combinations(range(n1 + n2), n1):
            u = float(ranks[list(chosen)].sum()) - n1 * (n1 + 1) / 2.0
            total += 1
            if abs(u - mu) >= dev - 1e-9:
                extreme += 1
        p = extreme / total
    else:
        n = n1 + n2
        _, tie_sizes = np.unique(pooled, return_counts=True)
        tie_term = float((tie_sizes.astype(np.float64) ** 3 - tie_sizes).sum()) / (n * (n - 1))
        var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
        z = (statistic - mu + 0.5) / math.sqrt(var)  # continuity correction
        p = _normal_two_sided(z)

    return ComparisonResult(
        test="mann_whitney_u", statistic=statistic, p_value=p, n_a=n1, n_b=n2,
    )


def train_val_ratio(run) -> RatioSeries:
    """Per-epoch train:validation loss ratios of a finished run.

    A mean ratio below 1 (training loss below validation loss) is the
    overfitting heuristic surfaced as ``overfit_flag``.
    """
    train_losses = [r.loss for r in run.records if r.phase == "train"]
    val_losses = [r.loss for r in run.records if r.phase == "validation"]
    if not train_losses or len(train_losses) != len(val_losses):
        raise EmptyInput("run must have matching train and validation records")
    if any(v == 0.0 for v in val_losses):
        raise ZeroValidationLoss("validation loss of 0 makes the ratio undefined")
    ratios = tuple(t / v for t, v in zip(train_losses, val_losses))
    arr = np.asarray(ratios)
    return RatioSeries(
        per_epoch_ratios=ratios, mean=float(arr.mean()), std=float(arr.std())
    )
