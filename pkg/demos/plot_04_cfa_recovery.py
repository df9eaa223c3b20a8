"""
Recovering a confirmatory factor model
======================================

Data are generated from the published six-factor structure and the
independent-clusters model is fitted back by maximum likelihood. The
estimates should land close to the generating values, and the fit
indices should show close fit.
"""

import numpy as np

from mcms import published
from mcms.ingest import compute_sample_moments
from mcms.scale import builtin_mcms
from mcms.sem import MCMS_RESTRICTED_PAIRS, compile_model, fit_model
from mcms.simulate import mcms_config, simulate_responses

scale = builtin_mcms()
moments = compute_sample_moments(simulate_responses(mcms_config(5000, seed=4)).genuine("ALL"))

###############################################################################
# Free model: each item on its own factor, marker loadings fixed to 1,
# all factor covariances free.

spec = compile_model(scale, mean_structure=True)
fit = fit_model(spec, moments)
ix = fit.indices
print(f"chi2 {ix.chisq:.1f}, S-B chi2 {ix.chisq_sb:.1f} on {ix.df} df (c = {ix.sb_scale:.3f})")
print(f"CFI {ix.cfi:.3f}  TLI {ix.tli:.3f}  RMSEA {ix.rmsea:.3f} "
      f"[{ix.rmsea_ci90[0]:.3f}, {ix.rmsea_ci90[1]:.3f}]  SRMR {ix.srmr:.3f}")

###############################################################################
# Compare estimates with the generating values.

lam, phi, th, tau, _ = fit.matrices()
err = np.abs(lam - published.loading_matrix(scale.items)).max()
print("max loading error", round(err, 4))
print("max factor correlation error",
      round(np.abs(fit.factor_correlations() - published.factor_correlations()).max(), 4))
print("max intercept error", round(np.abs(tau - published.intercepts(scale.items)).max(), 4))

###############################################################################
# Robust and normal-theory standard errors agree for normal data.

print("robust / normal SE ratio range",
      np.round([(fit.se_robust / fit.se).min(), (fit.se_robust / fit.se).max()], 3))

###############################################################################
# The restricted model fixes two covariances at zero, gaining two df.

restricted = fit_model(compile_model(scale, MCMS_RESTRICTED_PAIRS, mean_structure=True),
                       moments)
print("restricted df", restricted.df, "CFI", round(restricted.indices.cfi, 3))
