"""Response-file ingestion, spam filtering, group splitting and sample moments."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ._linalg import normal_gamma, vech_indices
from .scale import Attention, ResponseMatrix, ResponseRecord, ScaleDefinition

log = logging.getLogger(__name__)

ID_COLUMN = "respondent_id"
GROUP_COLUMN = "group"
ATTENTION_COLUMN = "attention"


class HeaderMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SpamRules:
    """Quality-control rules a response must satisfy to be kept.

    ``expected_test_answers`` maps each embedded test item to the scale
    point respondents were told to pick; the attention question must be
    answered with ``attention_required``.
    """

    expected_test_answers: Mapping[str, int]
    attention_required: Attention = Attention.YES
    n_attention_options: int = 3

    @property
    def n_test_items(self) -> int:
        return len(self.expected_test_answers)

    def check(self, response_min: int, response_max: int) -> None:
        if self.n_test_items < 1:
            raise ValueError("spam rules need at least one test item")
        for code, value in self.expected_test_answers.items():
            if not response_min <= value <= response_max:
                raise ValueError(f"expected answer {value} for {code} is out of range")

    def random_pass_probability(self, n_points: int) -> float:
        """Chance that a uniformly random responder passes every check."""
        return (1.0 / n_points) ** self.n_test_items / self.n_attention_options


@dataclass(frozen=True)
class GroupTally:
    n_raw: int
    n_clean: int

    @property
    def spam_rate(self) -> float:
        return 1.0 - self.n_clean / self.n_raw if self.n_raw else 0.0


@dataclass(frozen=True)
class IngestSummary:
    n_raw: int
    n_clean: int
    per_group: Mapping[str, GroupTally] = field(default_factory=dict)

    @property
    def spam_rate(self) -> float:
        return 1.0 - self.n_clean / self.n_raw if self.n_raw else 0.0

    def to_dict(self) -> dict:
        return {
            "n_raw": self.n_raw,
            "n_clean": self.n_clean,
            "spam_rate": self.spam_rate,
            "per_group": {
                g: {"n_raw": t.n_raw, "n_clean": t.n_clean, "spam_rate": t.spam_rate}
                for g, t in sorted(self.per_group.items())
            },
        }


@dataclass(frozen=True)
class Rejection:
    respondent_id: str
    reason: str

    def __str__(self):
        return f"{self.respondent_id}\t{self.reason}"


def _read_text(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    return Path(source).read_text(encoding="utf-8")


def parse_responses(
    source, scale: ScaleDefinition, rejected: list | None = None
) -> list[ResponseRecord]:
    """Parse a comma-delimited response file into records.

    Columns other than the id, group, attention and scale item columns are
    treated as embedded test items. Rows with missing, unparseable or
    out-of-range item answers are skipped; each skip is logged and, if
    ``rejected`` is given, appended to it as a :class:`Rejection`.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise HeaderMismatch("response file is empty") from None

    required = [ID_COLUMN, GROUP_COLUMN, *scale.items]
    missing = [c for c in required if c not in header]
    if missing:
        raise HeaderMismatch(f"response file header lacks columns: {', '.join(missing)}")
    col = {name: k for k, name in enumerate(header)}
    known = set(required) | {ATTENTION_COLUMN}
    test_items = [h for h in header if h not in known]
    lo, hi = scale.response_min, scale.response_max

    def reject(rid, reason):
        log.info("rejected %s: %s", rid, reason)
        if rejected is not None:
            rejected.append(Rejection(rid, reason))

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        rid = row[col[ID_COLUMN]].strip() if len(row) > col[ID_COLUMN] else f"line{lineno}"
        if len(row) != len(header):
            reject(rid, "wrong number of fields")
            continue
        answers = {}
        reason = None
        for item in scale.items:
            cell = row[col[item]].strip()
            if cell == "":
                reason = f"missing answer for {item}"
                break
            try:
                value = int(cell)
            except ValueError:
                reason = f"unparseable answer {cell!r} for {item}"
                break
            if not lo <= value <= hi:
                reason = f"out of range answer {value} for {item}"
                break
            answers[item] = value
        if reason is not None:
            reject(rid, reason)
            continue
        tests = {}
        for item in test_items:
            cell = row[col[item]].strip()
            try:
                tests[item] = int(cell)
            except ValueError:
                pass
        attention = Attention.MISSING
        if ATTENTION_COLUMN in col:
            try:
                attention = Attention.parse(row[col[ATTENTION_COLUMN]])
            except ValueError:
                attention = Attention.MISSING
        records.append(
            ResponseRecord(
                respondent_id=rid,
                group=row[col[GROUP_COLUMN]].strip(),
                item_answers=answers,
                test_item_answers=tests,
                attention_answer=attention,
            )
        )
    return records


def write_responses(records: Iterable[ResponseRecord], scale: ScaleDefinition, dest=None) -> str:
    """Serialize records in the response file format; returns the text."""
    records = list(records)
    test_items = sorted({k for r in records for k in r.test_item_answers})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([ID_COLUMN, GROUP_COLUMN, *scale.items, *test_items, ATTENTION_COLUMN])
    for r in records:
        writer.writerow(
            [
                r.respondent_id,
                r.group,
                *(r.item_answers.get(i, "") for i in scale.items),
                *(r.test_item_answers.get(t, "") for t in test_items),
                r.attention_answer.value if r.attention_answer is not Attention.MISSING else "",
            ]
        )
    text = buf.getvalue()
    if dest is not None:
        Path(dest).write_text(text, encoding="utf-8")
    return text


def passes_spam_rules(record: ResponseRecord, rules: SpamRules) -> bool:
    if record.attention_answer is not rules.attention_required:
        return False
    return all(
        record.test_item_answers.get(code) == value
        for code, value in rules.expected_test_answers.items()
    )


def apply_spam_filter(records, rules: SpamRules):
    """Split records into (clean, rejected, summary).

    A record is clean iff every test item carries its expected answer and
    the attention question was answered as required.
    """
    records = list(records)
    if records:
        present = set().union(*(r.test_item_answers.keys() for r in records))
        absent = [c for c in rules.expected_test_answers if c not in present]
        if absent:
            raise ValueError(f"test items not found in any record: {', '.join(absent)}")
    clean, rejected = [], []
    raw_counts: Counter = Counter()
    clean_counts: Counter = Counter()
    for r in records:
        raw_counts[r.group] += 1
        if passes_spam_rules(r, rules):
            clean.append(r)
            clean_counts[r.group] += 1
        else:
            rejected.append(r)
    per_group = {g: GroupTally(raw_counts[g], clean_counts[g]) for g in sorted(raw_counts)}
    summary = IngestSummary(len(records), len(clean), per_group)
    return clean, rejected, summary


def records_to_matrix(records, scale: ScaleDefinition, group: str = "ALL") -> ResponseMatrix:
    rows = np.array([[r.item_answers[i] for i in scale.items] for r in records], dtype=int)
    return ResponseMatrix(scale.items, rows.reshape(len(records), len(scale.items)), group)


def split_groups(records, scale: ScaleDefinition) -> dict[str, ResponseMatrix]:
    """Partition complete records into one response matrix per group label."""
    by_group = defaultdict(list)
    for r in records:
        by_group[r.group].append(r)
    return {g: records_to_matrix(rs, scale, g) for g, rs in sorted(by_group.items())}


def merge_groups(matrices: Iterable[ResponseMatrix], group: str = "ALL") -> ResponseMatrix:
    matrices = list(matrices)
    items = matrices[0].items
    if any(m.items != items for m in matrices):
        raise ValueError("matrices do not share an item order")
    return ResponseMatrix(items, np.vstack([m.rows for m in matrices]), group)


@dataclass(frozen=True)
class SampleMoments:
    """First, second and fourth-order sample moments of one group.

    ``gamma`` is the asymptotic covariance matrix of the vech'd covariance
    elements, ``s_ijkl - s_ij s_kl`` with N-divisor moments. ``third`` holds
    the centered third moments between each item and each vech element,
    needed for the robust statistics of models with a mean structure.
    """

    items: tuple[str, ...]
    n: int
    mean: np.ndarray
    cov: np.ndarray
    cov_ml: np.ndarray
    gamma: np.ndarray
    third: np.ndarray
    group: str = "ALL"

    @property
    def p(self) -> int:
        return len(self.items)

    def gamma_full(self, mean_structure: bool) -> np.ndarray:
        if not mean_structure:
            return self.gamma
        return np.block([[self.cov_ml, self.third], [self.third.T, self.gamma]])

    def reorder(self, items) -> "SampleMoments":
        """Moments restricted/permuted to ``items``."""
        idx = np.array([self.items.index(i) for i in items])
        p_old = self.p
        r, c = vech_indices(p_old)
        pos = {(i, j): k for k, (i, j) in enumerate(zip(r, c))}
        rn, cn = vech_indices(len(idx))
        sel = []
        for i, j in zip(rn, cn):
            a, b = idx[i], idx[j]
            sel.append(pos[(max(a, b), min(a, b))])
        sel = np.array(sel)
        return SampleMoments(
            items=tuple(items),
            n=self.n,
            mean=self.mean[idx],
            cov=self.cov[np.ix_(idx, idx)],
            cov_ml=self.cov_ml[np.ix_(idx, idx)],
            gamma=self.gamma[np.ix_(sel, sel)],
            third=self.third[np.ix_(idx, sel)],
            group=self.group,
        )


def compute_sample_moments(m: ResponseMatrix) -> SampleMoments:
    x = np.asarray(m.rows, dtype=float)
    n, p = x.shape
    if n < 2:
        raise ValueError("sample moments need at least two rows")
    if n < p + 1:
        warnings.warn(
            f"group {m.group}: n={n} < p+1={p + 1}, covariance matrix is singular",
            RuntimeWarning,
            stacklevel=2,
        )
    mean = x.mean(axis=0)
    z = x - mean
    cov_ml = z.T @ z / n
    cov_ml = (cov_ml + cov_ml.T) / 2
    cov = cov_ml * n / (n - 1)
    r, c = vech_indices(p)
    prods = z[:, r] * z[:, c]
    s = cov_ml[r, c]
    gamma = prods.T @ prods / n - np.outer(s, s)
    gamma = (gamma + gamma.T) / 2
    third = z.T @ prods / n
    return SampleMoments(
        items=m.items,
        n=n,
        mean=mean,
        cov=cov,
        cov_ml=cov_ml,
        gamma=gamma,
        third=third,
        group=m.group,
    )


def population_moments(items, cov, mean=None, n=1000, group="ALL") -> SampleMoments:
    """Moments of a hypothetical sample whose N-1 covariance is exactly ``cov``.

    Fourth moments take their normal-theory values and third moments are
    zero. Useful for fitting a model to known population moments.
    """
    cov = np.array(cov, dtype=float)
    p = cov.shape[0]
    mean = np.zeros(p) if mean is None else np.asarray(mean, dtype=float)
    cov_ml = cov * (n - 1) / n
    r, _ = vech_indices(p)
    return SampleMoments(
        items=tuple(items),
        n=int(n),
        mean=mean,
        cov=cov,
        cov_ml=cov_ml,
        gamma=normal_gamma(cov_ml),
        third=np.zeros((p, len(r))),
        group=group,
    )
