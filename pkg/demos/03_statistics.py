"""The statistical tests on toy data.

Run: python3 demos/03_statistics.py
"""
import numpy as np

from gazeguide import stats
from gazeguide.metrics import bootstrap_ci

rng = np.random.default_rng(0)
std = rng.normal(0.88, 0.02, 10)
hs = rng.normal(0.82, 0.03, 10)
as_ = rng.normal(0.81, 0.03, 10)

r = stats.welch_anova([std, hs, as_])
print("Welch ANOVA   F(%.0f, %.1f) = %.2f, p = %.2g" % (*r.df, r.statistic, r.p))
r = stats.welch_t(std, hs)
print("Welch t       t(%.1f) = %.2f, p = %.2g, d = %.2f" % (r.df[0], r.statistic, r.p, r.effect))

z = {"STD": rng.normal(0.24, 0.1, 15), "HS": rng.normal(0.22, 0.1, 15), "AS": rng.normal(0.10, 0.1, 15)}
r = stats.kruskal_wallis(list(z.values()))
print("Kruskal-Wallis H = %.2f, p = %.2g" % (r.statistic, r.p))
for res in stats.pairwise(z):
    print("  %-10s W = %.0f  p = %.3g" % (res.comparison, res.statistic, res.p))

# is the net more similar to humans than to a second net?  (r12 vs r13, overlap r23)
r = stats.dependent_corr_test(0.45, 0.30, 0.50, 120)
print("Hittner z = %.2f, p = %.3g" % (r.statistic, r.p))

lo, hi = bootstrap_ci(z["AS"])
print("AS mean z %.3f, 95%% CI [%.3f, %.3f]" % (z["AS"].mean(), lo, hi))
