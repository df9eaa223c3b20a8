"""
Composite scores and internal consistency
=========================================

Composite scores average the items of each factor. Cronbach's alpha,
with a Feldt confidence interval, summarises how consistently the items
of a factor move together.
"""

from mcms.descriptives import composite_correlations, composite_stats, cronbach_alpha
from mcms.scale import builtin_mcms
from mcms.simulate import mcms_config, simulate_responses

scale = builtin_mcms()
data = simulate_responses(mcms_config(1500, seed=2, mode="likert"))
responses = data.genuine("ALL")

###############################################################################
# Means and standard deviations of the six composites.

stats = composite_stats(responses, scale)
for f, mu, sd in zip(stats.factors, stats.mean, stats.sd):
    print(f"{f:30s} {mu:5.2f} ({sd:.2f})")

###############################################################################
# Alpha per factor with a 95% interval.

for factor in scale.factors:
    a = cronbach_alpha(responses, factor)
    print(f"{factor.name:30s} alpha {a.alpha:.2f} [{a.ci_low:.2f}, {a.ci_high:.2f}]")

###############################################################################
# Pearson correlations between composites, lower triangle.

table = composite_correlations(responses, scale)
print(table.r.round(2))
