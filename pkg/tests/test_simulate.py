import dataclasses
import io

import numpy as np
import pytest

from mcms.ingest import (
    SpamRules,
    apply_spam_filter,
    compute_sample_moments,
    parse_responses,
)
from mcms.simulate import (
    GroupParameters,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
    mcms_config,
    mcms_parameters,
    plant_noninvariance,
    simulate_responses,
)


def test_same_seed_same_data():
    a = simulate_responses(mcms_config(200, ("A", "B"), seed=9))
    b = simulate_responses(mcms_config(200, ("A", "B"), seed=9))
    c = simulate_responses(mcms_config(200, ("A", "B"), seed=10))
    for g in ("A", "B"):
        np.testing.assert_array_equal(a.matrices[g].rows, b.matrices[g].rows)
    assert not np.array_equal(a.matrices["A"].rows, c.matrices["A"].rows)


def test_degenerate_likert_is_rounded_intercepts():
    gp = mcms_parameters(50)
    gp = dataclasses.replace(gp, factor_cov=np.zeros_like(gp.factor_cov),
                             residuals=np.zeros_like(gp.residuals),
                             intercepts=np.linspace(0.2, 8.4, len(gp.intercepts)))
    cfg = dataclasses.replace(mcms_config(50), groups={"ALL": gp}, mode="likert")
    rows = simulate_responses(cfg).matrices["ALL"].rows
    expected = np.floor(np.clip(gp.intercepts, 1, 7) + 0.5)
    np.testing.assert_array_equal(rows, np.tile(expected, (50, 1)))


def test_large_sample_covariance():
    cfg = mcms_config(200_000, seed=2)
    m = compute_sample_moments(simulate_responses(cfg).genuine("ALL"))
    gp = cfg.groups["ALL"]
    assert np.abs(m.cov - gp.implied_cov()).max() < 0.01
    np.testing.assert_allclose(m.mean, gp.implied_mean(), atol=0.01)


def test_t_latent_keeps_covariance():
    cfg = mcms_config(100_000, seed=4, latent="t", latent_df=8.0)
    m = compute_sample_moments(simulate_responses(cfg).genuine("ALL"))
    assert np.abs(m.cov - cfg.groups["ALL"].implied_cov()).mean() < 0.02


def test_spam_fraction_recovered_by_filter(mcms):
    cfg = mcms_config(4000, seed=6, mode="likert", spam_fraction=0.35)
    data = simulate_responses(cfg)
    assert data.is_spam["ALL"].mean() == pytest.approx(0.35, abs=1e-3)
    records = parse_responses(io.StringIO(data.write(mcms)), mcms)
    _, _, summary = apply_spam_filter(records, SpamRules(data.test_items))
    assert summary.spam_rate == pytest.approx(0.35, abs=0.015)


def test_plant_edits_one_group_only():
    cfg = mcms_config(10, ("A", "B"))
    planted = plant_noninvariance(cfg, [("B", "tau[Am3]", 0.5),
                                        ("B", "phi[Amotivation,Intrinsic Motivation]", 0.1)])
    a, b = planted.groups["A"], planted.groups["B"]
    assert a == cfg.groups["A"]
    k = cfg.items.index("Am3")
    assert b.intercepts[k] == pytest.approx(cfg.groups["B"].intercepts[k] + 0.5)
    assert b.factor_cov[0, 5] == b.factor_cov[5, 0]
    back = plant_noninvariance(planted, [("B", "tau[Am3]", -0.5),
                                         ("B", "phi[Amotivation,Intrinsic Motivation]", -0.1)])
    np.testing.assert_allclose(back.groups["B"].intercepts, cfg.groups["B"].intercepts)
    np.testing.assert_allclose(back.groups["B"].factor_cov, cfg.groups["B"].factor_cov)


def test_plant_unknown_group():
    with pytest.raises(KeyError):
        plant_noninvariance(mcms_config(10), [("Z", "tau[Am1]", 1.0)])


def test_config_round_trip(tmp_path):
    cfg = plant_noninvariance(mcms_config(120, ("A", "B"), seed=8, mode="likert",
                                          spam_fraction=0.1), [("A", "tau[Am1]", 0.3)])
    again = config_from_dict(config_to_dict(cfg))
    assert config_to_dict(again) == config_to_dict(cfg)
    path = tmp_path / "sim.yaml"
    path.write_text(dump_config(cfg))
    loaded = load_config(path)
    np.testing.assert_array_equal(simulate_responses(loaded).matrices["A"].rows,
                                  simulate_responses(cfg).matrices["A"].rows)


def test_defaults_shorthand():
    cfg = config_from_dict({"groups": {"X": {"defaults": "mcms", "n": 30, "residual": 0.4}}})
    gp = cfg.groups["X"]
    assert gp.n == 30 and np.all(gp.residuals == 0.4)
    assert gp.loadings.shape == (18, 6)


@pytest.mark.parametrize("change, message", [
    ({"mode": "ordinal"}, "mode"),
    ({"latent": "cauchy"}, "latent"),
    ({"latent": "t", "latent_df": 2.0}, "degrees of freedom"),
    ({"spam_fraction": 1.0}, "spam_fraction"),
])
def test_invalid_config(change, message):
    cfg = dataclasses.replace(mcms_config(10), **change)
    with pytest.raises(ValueError, match=message):
        simulate_responses(cfg)


def test_non_psd_factor_cov_rejected():
    gp = mcms_parameters(10)
    bad = GroupParameters(gp.loadings, -np.eye(6), gp.residuals, gp.intercepts,
                          gp.factor_means, 10)
    cfg = dataclasses.replace(mcms_config(10), groups={"ALL": bad})
    assert any("semidefinite" in p for p in cfg.validate())
