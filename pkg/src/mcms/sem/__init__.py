"""Confirmatory factor analysis by maximum likelihood with robust statistics."""

from .estimation import (
    ConvergenceError,
    FitResult,
    Problem,
    fit_model,
    fit_multigroup,
    fit_table,
    fml,
    implied_moments,
)
from .indices import (
    FitIndices,
    compute_indices,
    fit_indices,
    noncentral_chisq_cdf,
    rmsea,
    rmsea_ci,
    srmr,
)
from .params import ParameterTable, slot_label
from .robust import robust_se, satorra_bentler
from .spec import (
    FREE,
    MCMS_RESTRICTED_PAIRS,
    FactorModelSpec,
    compile_model,
    dump_spec,
    parse_spec,
    spec_from_dict,
    spec_to_dict,
)
