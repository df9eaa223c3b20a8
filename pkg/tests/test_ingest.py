import io

import numpy as np
import pytest

from mcms._linalg import elimination_pinv
from mcms.ingest import (
    HeaderMismatch,
    IngestSummary,
    SpamRules,
    apply_spam_filter,
    compute_sample_moments,
    parse_responses,
    split_groups,
    write_responses,
)
from mcms.scale import (
    Attention,
    FactorDef,
    ResponseMatrix,
    ResponseRecord,
    ScaleDefinition,
)

SMALL = ScaleDefinition(
    "small", "", 1, 7, (FactorDef("A", ("a1", "a2")), FactorDef("B", ("b1", "b2")))
)
RULES = SpamRules({"T1": 2, "T2": 6})
HEADER = "respondent_id,group,a1,a2,b1,b2,T1,T2,attention\n"


def _csv(*rows):
    return io.StringIO(HEADER + "".join(r + "\n" for r in rows))


def _record(tests=(2, 6), attention=Attention.YES, group="USA", rid="r"):
    return ResponseRecord(
        rid, group, {"a1": 1, "a2": 2, "b1": 3, "b2": 4},
        {"T1": tests[0], "T2": tests[1]}, attention,
    )


def test_parse_well_formed():
    recs = parse_responses(
        _csv("r1,USA,1,2,3,4,2,6,Yes", "r2,USA,7,7,7,7,2,6,No", "r3,IND,1,1,1,1,1,1,"), SMALL
    )
    assert [r.respondent_id for r in recs] == ["r1", "r2", "r3"]
    assert recs[0].item_answers == {"a1": 1, "a2": 2, "b1": 3, "b2": 4}
    assert recs[0].test_item_answers == {"T1": 2, "T2": 6}
    assert recs[2].attention_answer is Attention.MISSING


def test_out_of_range_row_excluded():
    rejected = []
    recs = parse_responses(_csv("r1,USA,9,2,3,4,2,6,Yes", "r2,USA,1,2,3,4,2,6,Yes"), SMALL,
                           rejected)
    assert [r.respondent_id for r in recs] == ["r2"]
    assert rejected[0].respondent_id == "r1"
    assert "out of range" in rejected[0].reason


@pytest.mark.parametrize(
    "row, reason",
    [("r1,USA,x,2,3,4,2,6,Yes", "unparseable"), ("r1,USA,,2,3,4,2,6,Yes", "missing answer"),
     ("r1,USA,1,2,3", "wrong number of fields")],
)
def test_malformed_rows(row, reason):
    rejected = []
    assert parse_responses(_csv(row), SMALL, rejected) == []
    assert reason in rejected[0].reason


def test_header_missing_item():
    text = io.StringIO("respondent_id,group,a1,a2,b1,T1,T2,attention\nr,USA,1,1,1,1,1,Yes\n")
    with pytest.raises(HeaderMismatch, match="b2"):
        parse_responses(text, SMALL)


def test_unreadable_file(tmp_path):
    with pytest.raises(OSError):
        parse_responses(tmp_path / "nope.csv", SMALL)


def test_write_parse_round_trip():
    recs = [_record(rid="a"), _record((1, 1), Attention.NO, "IND", "b")]
    again = parse_responses(io.StringIO(write_responses(recs, SMALL)), SMALL)
    assert again == recs


def test_spam_filter_rules():
    good = _record(rid="good")
    off_by_one = _record((3, 6), rid="off")
    inattentive = _record(attention=Attention.DONT_KNOW, rid="dk")
    clean, rejected, summary = apply_spam_filter([good, off_by_one, inattentive], RULES)
    assert clean == [good]
    assert {r.respondent_id for r in rejected} == {"off", "dk"}
    assert summary.n_raw == 3 and summary.n_clean == 1
    assert summary.spam_rate == pytest.approx(2 / 3)


def test_spam_filter_deterministic():
    recs = [_record((k % 7 + 1, 6), rid=str(k)) for k in range(30)]
    assert apply_spam_filter(recs, RULES)[0] == apply_spam_filter(recs, RULES)[0]


def test_spam_filter_missing_test_item():
    with pytest.raises(ValueError, match="T9"):
        apply_spam_filter([_record()], SpamRules({"T9": 1}))


def test_random_pass_probability():
    rules = SpamRules({"T1": 1, "T2": 2, "T3": 3})
    assert rules.random_pass_probability(7) == pytest.approx(1 / 1029)
    assert rules.random_pass_probability(7) == pytest.approx(0.000972, abs=1e-6)


def test_spam_rate_usa():
    s = IngestSummary(900, 722)
    assert s.spam_rate == pytest.approx(0.198, abs=1e-3)
    assert round(100 * s.spam_rate) == 20


def test_split_groups_partition():
    recs = [_record(group="USA", rid="1"), _record(group="USA", rid="2"),
            _record(group="IND", rid="3")]
    groups = split_groups(recs, SMALL)
    assert {g: m.n for g, m in groups.items()} == {"IND": 1, "USA": 2}
    assert sum(m.n for m in groups.values()) == len(recs)
    assert groups["USA"].items == SMALL.items
    assert split_groups([], SMALL) == {}


def test_moments_hand_arithmetic():
    with pytest.warns(RuntimeWarning):
        m = compute_sample_moments(ResponseMatrix(("x", "y"), [[1, 2], [3, 4]]))
    np.testing.assert_allclose(m.mean, [2, 3])
    np.testing.assert_allclose(m.cov, [[2, 2], [2, 2]])
    np.testing.assert_allclose(m.cov_ml, [[1, 1], [1, 1]])


def test_identical_rows_zero_covariance():
    with pytest.warns(RuntimeWarning):
        m = compute_sample_moments(ResponseMatrix(("x", "y"), [[3, 5], [3, 5]]))
    assert not m.cov.any()


def test_moments_need_two_rows():
    with pytest.raises(ValueError):
        compute_sample_moments(ResponseMatrix(("x",), [[1]]))


def test_small_sample_warns():
    with pytest.warns(RuntimeWarning):
        compute_sample_moments(ResponseMatrix(("x", "y", "z"), [[1, 2, 3], [2, 2, 1]]))


def test_cov_ml_relation(rng):
    m = compute_sample_moments(ResponseMatrix(tuple("abcd"), rng.normal(size=(37, 4))))
    np.testing.assert_allclose(m.cov_ml * m.n / (m.n - 1), m.cov, rtol=1e-12)
    np.testing.assert_allclose(m.gamma, m.gamma.T)


def test_gamma_matches_normal_theory(rng):
    sigma = np.array([[2.0, 0.6, 0.3], [0.6, 1.0, 0.2], [0.3, 0.2, 1.5]])
    x = rng.multivariate_normal(np.zeros(3), sigma, size=200_000)
    m = compute_sample_moments(ResponseMatrix(("a", "b", "c"), x))
    K = elimination_pinv(3)
    oracle = 2 * K @ np.kron(sigma, sigma) @ K.T
    np.testing.assert_allclose(m.gamma, oracle, atol=0.05)


def test_reorder_matches_recomputation(rng):
    x = rng.standard_t(6, size=(80, 3))
    m = compute_sample_moments(ResponseMatrix(("a", "b", "c"), x))
    direct = compute_sample_moments(ResponseMatrix(("c", "a", "b"), x[:, [2, 0, 1]]))
    r = m.reorder(("c", "a", "b"))
    for name in ("mean", "cov", "cov_ml", "gamma", "third"):
        np.testing.assert_allclose(getattr(r, name), getattr(direct, name), atol=1e-12)
