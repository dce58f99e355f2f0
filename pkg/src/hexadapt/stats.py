"""Nearest-rank percentiles, rank tests, and rank correlation.

The percentile convention deliberately avoids interpolation: the
reported value is always an actual sample (rank ceil(p/100 * n)).
The Mann-Whitney test enumerates the exact permutation distribution
(with midranks, so ties are handled) when the pooled sample is small,
and falls back to the tie-corrected normal approximation otherwise.
"""
from __future__ import annotations

import math
from itertools import combinations


def percentile_nearest_rank(samples, p: float) -> float:
    if not 0.0 < p <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {p}")
    data = sorted(samples)
    if not data:
        raise ValueError("empty sample")
    rank = math.ceil(p / 100.0 * len(data))
    return data[rank - 1]


def _midranks(values) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _u_from_ranks(rank_sum: float, n_a: int) -> float:
    return rank_sum - n_a * (n_a + 1) / 2.0


EXACT_LIMIT = 20  # pooled size above which the normal approximation is used


def mannwhitney_u(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon-Mann-Whitney test; returns (U_a, p)."""
    a, b = list(a), list(b)
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = len(a), len(b)
    pooled = a + b
    ranks = _midranks(pooled)
    u_obs = _u_from_ranks(sum(ranks[:n_a]), n_a)

    if n_a + n_b <= EXACT_LIMIT:
        total = 0
        le = ge = 0
        for pick in combinations(range(n_a + n_b), n_a):
            u = _u_from_ranks(sum(ranks[i] for i in pick), n_a)
            total += 1
            le += u <= u_obs
            ge += u >= u_obs
        p = min(1.0, 2.0 * min(le / total, ge / total))
        return u_obs, p

    mu = n_a * n_b / 2.0
    n = n_a + n_b
    tie_term = 0.0
    seen: dict[float, int] = {}
    for v in pooled:
        seen[v] = seen.get(v, 0) + 1
    for t in seen.values():
        tie_term += t ** 3 - t
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        return u_obs, 1.0
    z = (u_obs - mu) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return u_obs, p


def spearman_rho(x, y) -> float:
    """Spearman rank correlation with midranks; 0.0 on degenerate input."""
    if len(x) != len(y):
        raise ValueError("length mismatch")
    if len(x) < 2:
        return 0.0
    rx, ry = _midranks(list(x)), _midranks(list(y))
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)
