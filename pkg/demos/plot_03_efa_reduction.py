"""
Trimming an item pool with exploratory factor analysis
======================================================

Principal-axis factoring with a promax rotation, followed by rule-based
item removal: items that load on the wrong factor, load weakly or
cross-load are dropped one at a time and the solution is re-estimated
after every removal.
"""

import dataclasses

import numpy as np

from mcms.efa import ROUND_ONE, extract_factors, reduce_item_pool, rotate_promax
from mcms.ingest import compute_sample_moments
from mcms.scale import builtin_mcms
from mcms.simulate import mcms_config, plant_noninvariance, simulate_responses

scale = builtin_mcms()
cfg = mcms_config(5000, seed=3)

###############################################################################
# Weaken one item so the reduction rules have something to find: its
# loading drops to 0.3 and its residual variance rises to keep the item
# variance near 1.

k = scale.items.index("Ident3")
cfg = plant_noninvariance(cfg, [("ALL", "lambda[Ident3,Identified Regulation]", 0.3 - 1.014)])
gp = cfg.groups["ALL"]
residuals = np.array(gp.residuals)
residuals[k] = 0.91
cfg = dataclasses.replace(cfg, groups={"ALL": dataclasses.replace(gp, residuals=residuals)})
responses = simulate_responses(cfg).genuine("ALL")

###############################################################################
# A six-factor promax solution on the full pool.

solution = rotate_promax(extract_factors(compute_sample_moments(responses), 6))
print("eigenvalues", solution.eigenvalues.round(2))
print("largest absolute loading per item")
print(np.abs(solution.loadings).max(axis=1).round(2))

###############################################################################
# The reduction loop reports each removal with its reason.

kept, log = reduce_item_pool(responses, scale, ROUND_ONE)
for removal in log:
    print(removal.line())
print(len(kept), "items kept")
