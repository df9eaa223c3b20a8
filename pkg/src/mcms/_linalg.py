import functools

import numpy as np


@functools.lru_cache(maxsize=None)
def vech_indices(p):
    """Row/column indices of the lower triangle in column-major vech order."""
    rows, cols = [], []
    for j in range(p):
        for i in range(j, p):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def vech(a):
    r, c = vech_indices(a.shape[0])
    return a[r, c]


@functools.lru_cache(maxsize=None)
def duplication_matrix(p):
    """D such that vec(A) = D vech(A) for symmetric A (vec is column-major)."""
    r, c = vech_indices(p)
    d = np.zeros((p * p, len(r)))
    for k, (i, j) in enumerate(zip(r, c)):
        d[j * p + i, k] = 1.0
        d[i * p + j, k] = 1.0
    d.setflags(write=False)
    return d


@functools.lru_cache(maxsize=None)
def elimination_pinv(p):
    """Moore-Penrose inverse of the duplication matrix."""
    d = duplication_matrix(p)
    out = np.linalg.solve(d.T @ d, d.T)
    out.setflags(write=False)
    return out


def normal_weight(sigma_inv):
    """Normal-theory weight 0.5 * D'(S^-1 kron S^-1)D on vech coordinates."""
    p = sigma_inv.shape[0]
    r, c = vech_indices(p)
    # entry (ij),(kl) of D'(A kron A)D / 2 for symmetric A
    a = sigma_inv
    w = a[r[:, None], r[None, :]] * a[c[:, None], c[None, :]]
    w += a[r[:, None], c[None, :]] * a[c[:, None], r[None, :]]
    w *= 0.5
    off = r != c
    w[off, :] *= 2.0
    w[:, off] *= 2.0
    return 0.5 * w


def normal_gamma(sigma):
    """Normal-theory asymptotic covariance of vech(S): 2 D+(S kron S)D+'."""
    p = sigma.shape[0]
    r, c = vech_indices(p)
    s = sigma
    return s[r[:, None], r[None, :]] * s[c[:, None], c[None, :]] + s[
        r[:, None], c[None, :]
    ] * s[c[:, None], r[None, :]]


def is_positive_definite(a):
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True
