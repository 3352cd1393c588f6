"""Hypothesis tests used to compare accuracy and similarity across nets.

Distribution tails come from ``scipy.special``; the test statistics, exact
rank-sum enumeration, effect sizes and the dependent-correlation test are
implemented here.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special
from scipy.stats import rankdata

__all__ = [
    "TestResult",
    "norm_cdf",
    "norm_sf",
    "t_cdf",
    "t_sf",
    "chi2_sf",
    "f_sf",
    "welch_t",
    "welch_anova",
    "kruskal_wallis",
    "wilcoxon_ranksum",
    "ranksum_exact_p",
    "bonferroni",
    "dependent_corr_test",
    "sign_test",
    "spearman",
    "pairwise",
    "write_results_csv",
    "read_group_csv",
]

EXACT_MAX_N = 20


@dataclass
class TestResult:
    test: str
    statistic: float
    df: tuple = ()
    p: float = 1.0
    effect: float | None = None
    effect_name: str = ""
    comparison: str = ""
    notes: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class


# --- distribution functions ---------------------------------------------------

def norm_cdf(x):
    return special.ndtr(x)


def norm_sf(x):
    return special.ndtr(-np.asarray(x, dtype=np.float64))


def t_cdf(x, df):
    return special.stdtr(df, x)


def t_sf(x, df):
    return special.stdtr(df, -np.asarray(x, dtype=np.float64))


def chi2_sf(x, df):
    return special.chdtrc(df, x)


def f_sf(x, df1, df2):
    return special.fdtrc(df1, df2, x)


def _clip_p(p) -> float:
    return float(min(1.0, max(0.0, p)))


def _sample(a) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError("samples must be finite")
    return v


# --- parametric -----------------------------------------------------------------

def welch_t(a, b) -> TestResult:
    """Welch's unequal-variance t test with Cohen's d (pooled SD)."""
    a, b = _sample(a), _sample(b)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("welch_t needs at least two observations per group")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if ma == mb:
            return TestResult("welch_t", 0.0, (float(na + nb - 2),), 1.0, 0.0, "cohen_d")
        t = math.copysign(math.inf, ma - mb)
        return TestResult("welch_t", t, (float(na + nb - 2),), 0.0, t, "cohen_d",
                          notes={"infinite_t": True})
    t = (ma - mb) / math.sqrt(se2)
    # Welch-Satterthwaite df, written in shares of se2 to avoid underflow
    ua, ub = va / na / se2, vb / nb / se2
    df = 1.0 / (ua * ua / (na - 1) + ub * ub / (nb - 1))
    p = 2.0 * t_sf(abs(t), df)
    d = (ma - mb) / pooled
    return TestResult("welch_t", t, (df,), _clip_p(p), d, "cohen_d")


def welch_anova(groups: Sequence) -> TestResult:
    """Welch's heteroscedastic one-way ANOVA; effect size eta^2 from F."""
    gs = [_sample(g) for g in groups]
    k = len(gs)
    if k < 2 or any(g.size < 2 for g in gs):
        raise ValueError("welch_anova needs >= 2 groups of >= 2 observations")
    n = np.array([g.size for g in gs], dtype=np.float64)
    m = np.array([g.mean() for g in gs])
    v = np.array([g.var(ddof=1) for g in gs])
    df1 = k - 1.0
    if np.any(v == 0):
        if np.all(m == m[0]):
            return TestResult("welch_anova", 0.0, (df1, math.inf), 1.0, 0.0, "eta_sq")
        return TestResult("welch_anova", math.inf, (df1, math.inf), 0.0, 1.0, "eta_sq",
                          notes={"infinite_F": True})
    w = n / v
    sw = w.sum()
    mw = (w * m).sum() / sw
    a = (w * (m - mw) ** 2).sum() / df1
    lam = ((1.0 - w / sw) ** 2 / (n - 1.0)).sum()
    b = 1.0 + 2.0 * (k - 2.0) / (k * k - 1.0) * lam
    f = a / b
    df2 = (k * k - 1.0) / (3.0 * lam)
    p = f_sf(f, df1, df2)
    eta = f * df1 / (f * df1 + df2)
    return TestResult("welch_anova", float(f), (df1, float(df2)), _clip_p(p), float(eta), "eta_sq")


# --- rank tests -----------------------------------------------------------------

def _tie_term(ranks_or_values) -> float:
    _, counts = np.unique(ranks_or_values, return_counts=True)
    counts = counts.astype(np.float64)
    return float((counts ** 3 - counts).sum())


def kruskal_wallis(groups: Sequence) -> TestResult:
    """Kruskal-Wallis H with tie correction; eta^2 = (H - k + 1) / (n - k)."""
    gs = [_sample(g) for g in groups]
    k = len(gs)
    if k < 2 or any(g.size == 0 for g in gs):
        raise ValueError("kruskal_wallis needs >= 2 non-empty groups")
    allv = np.concatenate(gs)
    n = allv.size
    if n < 3:
        raise ValueError("kruskal_wallis needs at least three observations")
    ranks = rankdata(allv)
    bounds = np.cumsum([0] + [g.size for g in gs])
    h = 12.0 / (n * (n + 1)) * sum(ranks[lo:hi].sum() ** 2 / (hi - lo)
                                   for lo, hi in zip(bounds[:-1], bounds[1:])) - 3.0 * (n + 1)
    corr = 1.0 - _tie_term(allv) / (n ** 3 - n)
    if corr <= 0:
        h = 0.0
    else:
        h = max(0.0, h / corr)
    p = chi2_sf(h, k - 1) if h > 0 else 1.0
    eta = (h - k + 1.0) / (n - k) if n > k else 0.0
    return TestResult("kruskal_wallis", float(h), (float(k - 1),), _clip_p(p), float(eta), "eta_sq")


@lru_cache(maxsize=256)
def _ranksum_counts(n_a: int, n: int) -> tuple:
    """Number of size-``n_a`` subsets of {1..n} with each possible rank sum."""
    max_sum = sum(range(n - n_a + 1, n + 1))
    # counts[j][s]: subsets of size j with sum s, built item by item
    counts = [[0] * (max_sum + 1) for _ in range(n_a + 1)]
    counts[0][0] = 1
    for item in range(1, n + 1):
        for j in range(min(item, n_a), 0, -1):
            row, prev = counts[j], counts[j - 1]
            for s in range(max_sum, item - 1, -1):
                if prev[s - item]:
                    row[s] += prev[s - item]
    return tuple(counts[n_a])


def ranksum_exact_p(w: float, n_a: int, n_b: int) -> float:
    """Exact two-sided p for an untied rank sum ``w`` of the first sample."""
    counts = _ranksum_counts(n_a, n_a + n_b)
    total = math.comb(n_a + n_b, n_a)
    w = int(round(w))
    lower = sum(counts[: w + 1])
    upper = sum(counts[w:])
    return _clip_p(2 * min(lower, upper) / total)


def wilcoxon_ranksum(a, b, method: str = "auto") -> TestResult:
    """Wilcoxon rank-sum (Mann-Whitney) test; statistic is the rank sum of ``a``.

    ``method='auto'`` enumerates the exact null when the pooled size is at
    most 20 and there are no ties, else uses the tie- and
    continuity-corrected normal approximation.  Effect size r = |z|/sqrt(n).
    """
    a, b = _sample(a), _sample(b)
    na, nb = a.size, b.size
    if na < 1 or nb < 1:
        raise ValueError("wilcoxon_ranksum needs non-empty samples")
    allv = np.concatenate([a, b])
    n = na + nb
    ranks = rankdata(allv)
    w = float(ranks[:na].sum())
    ties = _tie_term(allv)
    mu = na * (n + 1) / 2.0
    var = na * nb / 12.0 * ((n + 1) - ties / (n * (n - 1))) if n > 1 else 0.0
    diff = w - mu
    if var <= 0 or abs(diff) <= 0.5:
        z = 0.0
    else:
        z = (diff - math.copysign(0.5, diff)) / math.sqrt(var)
    if method not in ("auto", "exact", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    use_exact = method == "exact" or (method == "auto" and n <= EXACT_MAX_N and ties == 0)
    if use_exact:
        if ties:
            raise ValueError("exact rank-sum p requires untied data")
        p = ranksum_exact_p(w, na, nb)
        used = "exact"
    else:
        p = 2.0 * norm_sf(abs(z))
        used = "asymptotic"
    r = abs(z) / math.sqrt(n)
    return TestResult("wilcoxon_ranksum", w, (), _clip_p(p), r, "r",
                      notes={"z": z, "method": used})


def bonferroni(p_values) -> list[float]:
    p = [float(v) for v in p_values]
    if any(not 0.0 <= v <= 1.0 for v in p):
        raise ValueError("p values must lie in [0, 1]")
    m = len(p)
    return [min(1.0, m * v) for v in p]


def dependent_corr_test(r12: float, r13: float, r23: float, n: int) -> TestResult:
    """Compare two overlapping dependent correlations r12 vs r13.

    Averaged Fisher-Z procedure with the Hittner et al. (2003) covariance
    term; variable 1 is shared, r23 links the two compared variables.
    """
    if n < 4:
        raise ValueError("dependent_corr_test needs n >= 4")
    if max(abs(r12), abs(r13), abs(r23)) >= 1:
        raise ValueError("correlations must lie strictly inside (-1, 1)")
    z1, z2 = math.atanh(r12), math.atanh(r13)
    rbar = math.tanh((z1 + z2) / 2.0)
    rb2 = rbar * rbar
    c = (r23 * (1 - 2 * rb2) - 0.5 * rb2 * (1 - 2 * rb2 - r23 * r23)) / (1 - rb2) ** 2
    if abs(c) >= 1:
        raise ValueError(f"degenerate covariance term c={c:.6g}")
    z = (z1 - z2) * math.sqrt((n - 3) / (2.0 - 2.0 * c))
    p = 2.0 * norm_sf(abs(z))
    return TestResult("dependent_corr", z, (), _clip_p(p), z1 - z2, "cohen_q",
                      notes={"c": c})


def sign_test(differences) -> TestResult:
    """Exact one-sided sign test that positive differences dominate.

    Zero differences are dropped.  The statistic is the number of positives.
    """
    d = _sample(differences)
    d = d[d != 0]
    n, k = d.size, int(np.count_nonzero(d > 0))
    if n == 0:
        return TestResult("sign_test", 0.0, (0.0,), 1.0)
    p = sum(math.comb(n, i) for i in range(k, n + 1)) / 2.0 ** n
    return TestResult("sign_test", float(k), (float(n),), _clip_p(p), k / n, "fraction_positive")


def spearman(x, y) -> float:
    x, y = _sample(x), _sample(y)
    if x.size != y.size or x.size < 2:
        raise ValueError("spearman needs two equal-length samples of size >= 2")
    rx, ry = rankdata(x), rankdata(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        raise ValueError("spearman undefined for constant input")
    return float(rx @ ry) / den


def pairwise(groups: dict, test=wilcoxon_ranksum) -> list[TestResult]:
    """All pairwise tests between named groups, Bonferroni adjusted.

    The adjusted p is stored in ``notes['p_adj']``.
    """
    names = list(groups)
    results = []
    for a, b in itertools.combinations(names, 2):
        res = test(groups[a], groups[b])
        res.comparison = f"{a} vs {b}"
        results.append(res)
    for res, padj in zip(results, bonferroni([r.p for r in results])):
        res.notes["p_adj"] = padj
    return results


# --- CSV ------------------------------------------------------------------------

RESULT_HEADER = ["test", "comparison", "statistic", "df1", "df2", "p", "p_adj", "effect", "effect_name"]


def write_results_csv(path: str | os.PathLike, results: Sequence[TestResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_HEADER)
        for r in results:
            df = list(r.df) + ["", ""]
            p_adj = r.notes.get("p_adj", "")
            w.writerow([r.test, r.comparison, f"{r.statistic:.10g}",
                        "" if df[0] == "" else f"{df[0]:.10g}",
                        "" if df[1] == "" else f"{df[1]:.10g}",
                        f"{r.p:.10g}", "" if p_adj == "" else f"{p_adj:.10g}",
                        "" if r.effect is None else f"{r.effect:.10g}", r.effect_name])


def read_group_csv(path: str | os.PathLike) -> dict[str, list[float]]:
    """Read long-format ``group,value`` rows into ordered groups."""
    groups: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"group", "value"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns group,value")
        for row in reader:
            groups.setdefault(row["group"], []).append(float(row["value"]))
    return groups
