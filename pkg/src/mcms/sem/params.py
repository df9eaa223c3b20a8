"""Mapping between a flat parameter vector and model matrix slots.

A :class:`ParameterTable` covers one or more groups. Every free slot of
every group's pattern gets an index into the shared vector; slots whose
label is listed in ``ties`` share one index across groups, which is how
cross-group equality constraints are expressed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spec import FactorModelSpec

MATRICES = ("lambda", "phi", "theta", "tau", "kappa")


def slot_label(spec: FactorModelSpec, matrix: str, row: int, col: int = 0) -> str:
    if matrix == "lambda":
        return f"lambda[{spec.items[row]},{spec.factors[col]}]"
    if matrix == "phi":
        r, c = max(row, col), min(row, col)
        return f"phi[{spec.factors[r]},{spec.factors[c]}]"
    if matrix in ("theta", "tau"):
        return f"{matrix}[{spec.items[row]}]"
    if matrix == "kappa":
        return f"kappa[{spec.factors[row]}]"
    raise ValueError(matrix)


@dataclass(frozen=True)
class Slot:
    group: int
    matrix: str
    row: int
    col: int
    label: str


class _GroupIndex:
    """Index arrays (-1 = fixed) and fixed values for one group."""

    def __init__(self, spec: FactorModelSpec):
        self.spec = spec
        self.lam_val = np.nan_to_num(spec.loadings)
        self.phi_val = np.nan_to_num(spec.factor_cov)
        self.th_val = np.nan_to_num(spec.residuals)
        self.tau_val = np.nan_to_num(spec.intercepts)
        self.kap_val = np.nan_to_num(spec.factor_means)
        self.lam_idx = np.full(spec.loadings.shape, -1)
        self.phi_idx = np.full(spec.factor_cov.shape, -1)
        self.th_idx = np.full(spec.p, -1)
        self.tau_idx = np.full(spec.p, -1)
        self.kap_idx = np.full(spec.q, -1)


class ParameterTable:
    """Free-parameter layout over one or more groups.

    Parameters
    ----------
    specs : sequence of FactorModelSpec
        One pattern per group. All must share items, factors and the
        mean-structure flag.
    groups : sequence of str, optional
        Group labels, defaults to ``("ALL",)`` for a single group.
    ties : iterable of str
        Slot labels (e.g. ``"lambda[Am2,Amotivation]"``) held equal
        across all groups in which the slot is free.
    """

    def __init__(self, specs: Sequence[FactorModelSpec], groups=None, ties=()):
        specs = list(specs)
        if groups is None:
            groups = ["ALL"] if len(specs) == 1 else [f"G{g + 1}" for g in range(len(specs))]
        if len(groups) != len(specs):
            raise ValueError("need one group label per spec")
        first = specs[0]
        for s in specs[1:]:
            if s.items != first.items or s.factors != first.factors:
                raise ValueError("group specs must share items and factors")
            if s.mean_structure != first.mean_structure:
                raise ValueError("group specs must agree on the mean structure")
        self.specs = tuple(specs)
        self.groups = tuple(groups)
        self.ties = frozenset(ties)
        self.mean_structure = first.mean_structure
        self.slots: list[list[Slot]] = []
        self.base_labels: list[str] = []
        self._index = [_GroupIndex(s) for s in specs]
        tied_at: dict[str, int] = {}

        def assign(g, matrix, row, col):
            label = slot_label(specs[g], matrix, row, col)
            slot = Slot(g, matrix, row, col, label)
            if label in self.ties and label in tied_at:
                k = tied_at[label]
                self.slots[k].append(slot)
                return k
            k = len(self.slots)
            self.slots.append([slot])
            self.base_labels.append(label)
            if label in self.ties:
                tied_at[label] = k
            return k

        for g, spec in enumerate(specs):
            ix = self._index[g]
            for i, j in zip(*np.nonzero(np.isnan(spec.loadings))):
                ix.lam_idx[i, j] = assign(g, "lambda", i, j)
            for j in range(spec.q):
                for i in range(j, spec.q):
                    if np.isnan(spec.factor_cov[i, j]):
                        k = assign(g, "phi", i, j)
                        ix.phi_idx[i, j] = ix.phi_idx[j, i] = k
            for i in np.nonzero(np.isnan(spec.residuals))[0]:
                ix.th_idx[i] = assign(g, "theta", i, 0)
            if self.mean_structure:
                for i in np.nonzero(np.isnan(spec.intercepts))[0]:
                    ix.tau_idx[i] = assign(g, "tau", i, 0)
                for i in np.nonzero(np.isnan(spec.factor_means))[0]:
                    ix.kap_idx[i] = assign(g, "kappa", i, 0)

        self.size = len(self.slots)
        lower = np.full(self.size, -np.inf)
        for k, slots in enumerate(self.slots):
            s = slots[0]
            if s.matrix == "theta" or (s.matrix == "phi" and s.row == s.col):
                lower[k] = 0.0
        self.variance_mask = np.isfinite(lower)

    @property
    def n_groups(self) -> int:
        return len(self.specs)

    def labels(self) -> list[str]:
        """One label per free parameter; prefixed with the group when G > 1."""
        if self.n_groups == 1:
            return list(self.base_labels)
        out = []
        for k, slots in enumerate(self.slots):
            if len(slots) > 1:
                out.append(f"*:{self.base_labels[k]}")
            else:
                out.append(f"{self.groups[slots[0].group]}:{self.base_labels[k]}")
        return out

    def n_moments(self) -> int:
        return sum(s.n_moments() for s in self.specs)

    def df(self) -> int:
        return self.n_moments() - self.size

    def matrices(self, theta, g: int = 0):
        """(Lambda, Phi, theta_diag, tau, kappa) of group ``g``."""
        ix = self._index[g]
        theta = np.asarray(theta, dtype=float)

        def fill(val, idx):
            out = val.copy()
            m = idx >= 0
            out[m] = theta[idx[m]]
            return out

        return (
            fill(ix.lam_val, ix.lam_idx),
            fill(ix.phi_val, ix.phi_idx),
            fill(ix.th_val, ix.th_idx),
            fill(ix.tau_val, ix.tau_idx),
            fill(ix.kap_val, ix.kap_idx),
        )

    def accumulate(self, g: int, out, d_lam, d_phi, d_th, d_tau=None, d_kap=None):
        """Add matrix-element derivatives of group ``g`` into ``out``."""
        ix = self._index[g]
        pairs = [(ix.lam_idx, d_lam), (ix.phi_idx, d_phi), (ix.th_idx, d_th)]
        if d_tau is not None:
            pairs += [(ix.tau_idx, d_tau), (ix.kap_idx, d_kap)]
        for idx, d in pairs:
            m = idx >= 0
            if m.any():
                out += np.bincount(idx[m], weights=d[m], minlength=self.size)
        return out

    def index_arrays(self, g: int):
        ix = self._index[g]
        return ix.lam_idx, ix.phi_idx, ix.th_idx, ix.tau_idx, ix.kap_idx

    def pack(self, per_group_values) -> np.ndarray:
        """Build a vector from per-group matrix tuples (first slot wins)."""
        theta = np.zeros(self.size)
        for k, slots in enumerate(self.slots):
            s = slots[0]
            mats = per_group_values[s.group]
            m = MATRICES.index(s.matrix)
            value = mats[m]
            theta[k] = value[s.row, s.col] if value.ndim == 2 else value[s.row]
        return theta

    def value(self, theta, label: str, group: int = 0) -> float:
        """Current value of a slot (free or fixed) in one group."""
        spec = self.specs[group]
        mats = self.matrices(theta, group)
        matrix, rest = label.split("[", 1)
        names = rest.rstrip("]").split(",")
        if matrix == "lambda":
            return float(mats[0][spec.items.index(names[0]), spec.factors.index(names[1])])
        if matrix == "phi":
            return float(mats[1][spec.factors.index(names[0]), spec.factors.index(names[1])])
        if matrix == "theta":
            return float(mats[2][spec.items.index(names[0])])
        if matrix == "tau":
            return float(mats[3][spec.items.index(names[0])])
        if matrix == "kappa":
            return float(mats[4][spec.factors.index(names[0])])
        raise KeyError(label)
