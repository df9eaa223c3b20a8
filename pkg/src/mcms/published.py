"""Published MCMS estimates and sample statistics.

These are the pooled-sample estimates reported for the 18-item scale and
serve as simulation defaults and as arithmetic checks. Factor order is the
order of :func:`mcms.scale.builtin_mcms`.
"""

import numpy as np

FACTOR_ORDER = (
    "Amotivation",
    "Material External Regulation",
    "Social External Regulation",
    "Introjected Regulation",
    "Identified Regulation",
    "Intrinsic Motivation",
)

# item -> (loading, intercept); markers are fixed at 1
LOADINGS_INTERCEPTS = {
    "Am1": (1.0, 1.824),
    "Am2": (0.882, 1.683),
    "Am3": (0.955, 2.012),
    "ExMat1": (1.0, 5.987),
    "ExMat2": (0.708, 6.101),
    "ExMat3": (0.946, 6.059),
    "ExSoc1": (1.0, 2.285),
    "ExSoc2": (0.844, 2.041),
    "ExSoc3": (0.937, 3.086),
    "Introj1": (1.0, 2.251),
    "Introj2": (1.001, 2.309),
    "Introj3": (1.08, 2.186),
    "Ident1": (1.0, 4.274),
    "Ident2": (1.098, 3.967),
    "Ident3": (1.014, 4.56),
    "Intrin1": (1.0, 5.623),
    "Intrin2": (0.88, 5.758),
    "Intrin3": (0.995, 5.637),
}

# lower triangle, rows in FACTOR_ORDER starting at the second factor
_CORR_ROWS = [
    [-0.263],
    [0.051, 0.128],
    [0.151, 0.108, 0.600],
    [-0.222, 0.440, 0.458, 0.449],
    [-0.523, 0.362, 0.283, 0.230, 0.525],
]


def factor_correlations() -> np.ndarray:
    q = len(FACTOR_ORDER)
    r = np.eye(q)
    for i, row in enumerate(_CORR_ROWS, start=1):
        for j, v in enumerate(row):
            r[i, j] = r[j, i] = v
    return r


def loading_matrix(items) -> np.ndarray:
    """p x 6 loading matrix with each item on its own factor."""
    prefixes = ("Am", "ExMat", "ExSoc", "Introj", "Ident", "Intrin")
    lam = np.zeros((len(items), len(prefixes)))
    for i, item in enumerate(items):
        k = prefixes.index(item.rstrip("0123456789"))
        lam[i, k] = LOADINGS_INTERCEPTS[item][0]
    return lam


def intercepts(items) -> np.ndarray:
    return np.array([LOADINGS_INTERCEPTS[i][1] for i in items])


# group -> (N raw, spam percent, N clean)
SAMPLE_SIZES = {
    "ALL": (9000, 35, 5857),
    "HIGH": (2700, 28, 1952),
    "MID": (2700, 32, 1835),
    "LOW": (2700, 44, 1508),
    "USA": (900, 20, 722),
    "ESP": (900, 25, 677),
    "DEU": (900, 35, 554),
    "BRA": (900, 45, 496),
    "RUS": (900, 25, 677),
    "MEX": (900, 26, 662),
    "IND": (900, 32, 608),
    "IDN": (900, 55, 401),
    "PHL": (900, 45, 499),
    "VEN": (900, 37, 563),
}

INCOME_GROUPS = {
    "HIGH": ("USA", "ESP", "DEU"),
    "MID": ("BRA", "RUS", "MEX"),
    "LOW": ("IND", "IDN", "PHL"),
}

# pooled-sample CFA: N, S-B chi-square, df, CFI, TLI, RMSEA, CI low, CI high, SRMR
POOLED_FIT = (5857, 1590.49, 120, 0.965, 0.955, 0.046, 0.044, 0.048, 0.037)

# invariance ladders: level -> (CFI, CFI delta, RMSEA, RMSEA delta)
INVARIANCE_LADDERS = {
    "income": {
        "configural": (0.964, None, 0.046, None),
        "metric": (0.963, 0.001, 0.045, 0.001),
        "full_scalar": (0.952, 0.011, 0.049, 0.005),
        "partial_scalar": (0.955, 0.008, 0.048, 0.004),
    },
    "countries": {
        "configural": (0.96, None, 0.047, None),
        "metric": (0.959, 0.001, 0.046, 0.001),
        "full_scalar": (0.930, 0.028, 0.058, 0.011),
        "partial_scalar": (0.952, 0.007, 0.049, 0.002),
    },
}

FREED_INTERCEPTS = {
    "income": ("Am3",),
    "countries": ("Am3", "ExMat2", "ExSoc3", "Introj2", "Ident2"),
}
