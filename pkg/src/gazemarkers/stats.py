"""Nonparametric group comparison battery: Mann-Whitney U, Cohen's d,
permutation testing, and the significance rule.

The Mann-Whitney statistic follows the "U of the first sample" convention
counting pairs (a_i, b_j) with a_i < b_j, ties half-weighted.  Small
tie-free samples get an exact two-sided p from the full null distribution
of U; everything else uses the normal approximation with tie and
continuity corrections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateDataError

SIGNIFICANCE_ALPHA = 0.01  # significant iff p_mw < alpha
EXACT_MAX_N = 8  # exact p when max(n_a, n_b) <= this and no ties
DEFAULT_N_PERM = 4999  # add-one estimator floor = 1/5000 = 0.0002


@dataclass(frozen=True)
class GroupComparison:
    attribute: str
    n_case: int
    n_control: int
    mean_case: float
    mean_control: float
    u: float
    p_mw: float
    d: float
    p_perm: float
    significant: bool


def _midranks(pooled: np.ndarray) -> np.ndarray:
    """Ranks 1..N with ties assigned the mean of their covered ranks."""
    order = np.argsort(pooled, kind="stable")
    sorted_vals = pooled[order]
    ranks = np.empty(len(pooled), dtype=np.float64)
    i = 0
    n = len(pooled)
    while i < n:
        j = i
        while j < n and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # mean of ranks i+1 .. j
        i = j
    return ranks


@lru_cache(maxsize=64)
def _u_distribution(n_a: int, n_b: int) -> tuple[int, ...]:
    """Null counts of U = u for u in 0..n_a*n_b, over all rank labelings.

    Subset-sum dynamic program over the rank-sum of sample a; exact
    integer counts (total = C(n_a + n_b, n_a)).
    """
    n = n_a + n_b
    min_sum = n_a * (n_a + 1) // 2
    max_sum = n_a * (2 * n - n_a + 1) // 2
    width = max_sum + 1
    counts = [[0] * width for _ in range(n_a + 1)]
    counts[0][0] = 1
    for v in range(1, n + 1):
        for k in range(min(v, n_a), 0, -1):
            row_prev, row = counts[k - 1], counts[k]
            for s in range(max_sum, v - 1, -1):
                c = row_prev[s - v]
                if c:
                    row[s] += c
    # U = n_a*n_b + n_a(n_a+1)/2 - rank_sum
    u_counts = [0] * (n_a * n_b + 1)
    offset = n_a * n_b + min_sum
    for s in range(min_sum, max_sum + 1):
        u_counts[offset - s] = counts[n_a][s]
    return tuple(u_counts)


def exact_mwu_p(u: float, n_a: int, n_b: int) -> float:
    """Exact two-sided p for tie-free data: min(1, 2*min(P(U<=u), P(U>=u)))."""
    dist = _u_distribution(n_a, n_b)
    total = sum(dist)
    ui = int(round(u))
    c_le = sum(dist[: ui + 1])
    c_ge = sum(dist[ui:])
    return min(1.0, 2.0 * min(c_le, c_ge) / total)


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Mann-Whitney U of sample a (pairs a_i < b_j, half ties) and two-sided p.

    Exact enumeration p when both samples have at most ``EXACT_MAX_N``
    values and the pooled data is tie-free; otherwise the normal
    approximation with tie correction and 0.5 continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise DegenerateDataError("mann_whitney_u requires non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r_a = float(ranks[:n_a].sum())
    u_a = n_a * n_b + n_a * (n_a + 1) / 2.0 - r_a

    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))

    if not has_ties and max(n_a, n_b) <= EXACT_MAX_N:
        return u_a, exact_mwu_p(u_a, n_a, n_b)

    n = n_a + n_b
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    var_u = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var_u <= 0:
        raise DegenerateDataError("all pooled values identical; U statistic degenerate")
    mu = n_a * n_b / 2.0
    big_u = max(u_a, n_a * n_b - u_a)
    z = (big_u - mu - 0.5) / math.sqrt(var_u)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))  # = 2 * normal_sf(z)
    return u_a, p


def cohens_d(a, b) -> float:
    """Standardized mean difference (a minus b) over the pooled SD."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n_a, n_b = len(a), len(b)
    if n_a < 2 or n_b < 2:
        raise DegenerateDataError("cohens_d requires at least 2 values per sample")
    var_a = float(np.var(a, ddof=1))
    var_b = float(np.var(b, ddof=1))
    pooled = ((n_a - 1) * var_a + (n_b - 1) * var_b) / (n_a + n_b - 2)
    if pooled <= 0:
        raise DegenerateDataError("degenerate samples: zero pooled variance")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


def permutation_test(
    a,
    b,
    statistic=None,
    n_perm: int = DEFAULT_N_PERM,
    seed: int | np.random.Generator | None = 0,
) -> float:
    """Label-shuffling p value with the add-one estimator.

    p = (#{|stat_perm| >= |stat_obs|} + 1) / (n_perm + 1), so 1/(n_perm+1)
    is the attainable floor.  The default statistic is the difference of
    group means.  Deterministic for a fixed seed.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n_a, n_b = len(a), len(b)
    if n_a + n_b < 2:
        raise DegenerateDataError("permutation_test requires at least 2 values overall")
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pooled = np.concatenate([a, b])

    if statistic is None:
        observed = abs(pooled[:n_a].mean() - pooled[n_a:].mean())
        # one shuffled layout per row; row-wise argsort of uniforms is a
        # uniformly random permutation
        idx = np.argsort(rng.random((n_perm, n_a + n_b)), axis=1)
        shuffled = pooled[idx]
        stats = np.abs(shuffled[:, :n_a].mean(axis=1) - shuffled[:, n_a:].mean(axis=1))
        exceed = int(np.count_nonzero(stats >= observed))
    else:
        observed = abs(statistic(pooled[:n_a], pooled[n_a:]))
        exceed = 0
        for _ in range(n_perm):
            perm = rng.permutation(pooled)
            if abs(statistic(perm[:n_a], perm[n_a:])) >= observed:
                exceed += 1
    return (exceed + 1) / (n_perm + 1)


def compare_groups(
    case,
    control,
    attribute: str,
    n_perm: int = DEFAULT_N_PERM,
    seed: int | np.random.Generator | None = 0,
) -> GroupComparison:
    """One comparison row: group means, U, p_mw, Cohen's d, p_perm, verdict."""
    case = np.asarray(case, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    if len(case) < 2 or len(control) < 2:
        raise DegenerateDataError(
            f"{attribute}: need at least 2 observations per group "
            f"(got {len(case)} case, {len(control)} control)"
        )
    u, p_mw = mann_whitney_u(case, control)
    d = cohens_d(case, control)
    p_perm = permutation_test(case, control, n_perm=n_perm, seed=seed)
    return GroupComparison(
        attribute=attribute,
        n_case=len(case),
        n_control=len(control),
        mean_case=float(case.mean()),
        mean_control=float(control.mean()),
        u=float(u),
        p_mw=float(p_mw),
        d=float(d),
        p_perm=float(p_perm),
        significant=bool(p_mw < SIGNIFICANCE_ALPHA),
    )
