import numpy as np
import pytest
from scipy.stats import kstest

from boostfwer.simulate import (
    SimConfig,
    config_from_json,
    dgp_sample,
    run_experiment,
    sweep,
    sweep_csv_text,
)

TRUNCNORM15 = {"kind": "truncnorm", "params": {"theta": -1.5, "trunc_bound": 6.0}}
TRUNCNORM20 = {"kind": "truncnorm", "params": {"theta": -2.0, "trunc_bound": 6.0}}
UNIFORM = {"kind": "uniform", "params": {}}


def cfg(**kw):
    base = dict(family=TRUNCNORM20, K=30, B=10, alpha=0.05,
                methods=("bonferroni",), n_rep=200, seed=1)
    base.update(kw)
    return SimConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError, match="3B"):
        cfg(K=10)
    with pytest.raises(ValueError, match="n_rep"):
        cfg(n_rep=10)
    with pytest.raises(ValueError, match="rho"):
        cfg(dependence="equicorrelated", rho=1.0)
    with pytest.raises(ValueError, match="configuration"):
        cfg(configuration="bogus")


def test_dgp_deterministic_per_replicate():
    c = cfg(configuration="scattered", fraction=0.4)
    p1, l1 = dgp_sample(c, 17)
    p2, l2 = dgp_sample(c, 17)
    assert np.array_equal(p1, p2) and np.array_equal(l1, l2)
    p3, _ = dgp_sample(c, 18)
    assert not np.array_equal(p1, p3)


def test_dgp_null_is_uniform_ks():
    c = cfg(family=UNIFORM, configuration="complete_null", n_rep=100)
    draws = np.concatenate([dgp_sample(c, r)[0] for r in range(334)])
    stat = kstest(draws, "uniform").statistic
    # 1% critical value of the KS statistic at n = 10020
    assert stat < 1.63 / np.sqrt(draws.size)


def test_dgp_alternative_matches_family_cdf():
    c = cfg(configuration="full_alternative", n_rep=100)
    g = c.density
    draws = np.concatenate([dgp_sample(c, r)[0] for r in range(400)])
    ks = kstest(draws, g.cdf).statistic
    assert ks < 1.63 / np.sqrt(draws.size)


def test_dgp_equicorrelated_near_one_collapses():
    c = cfg(configuration="complete_null", dependence="equicorrelated",
            rho=0.999)
    p, _ = dgp_sample(c, 3)
    assert p.max() - p.min() < 0.15


def test_dgp_sparse_blocks_layout():
    c = cfg(configuration="sparse_blocks")
    _, labels = dgp_sample(c, 0)
    assert labels[:15].all() and not labels[15:].any()


def test_dgp_h_ell_layout():
    c = cfg(configuration="h_ell", ell=5)
    _, labels = dgp_sample(c, 0)
    assert labels[:5].all() and not labels[5:].any()


def test_dgp_two_sided_null_transform_uniform():
    c = cfg(configuration="complete_null", null_transform="two_sided",
            dependence="equicorrelated", rho=0.4, n_rep=100)
    draws = np.concatenate([dgp_sample(c, r)[0] for r in range(334)])
    assert kstest(draws, "uniform").statistic < 1.63 / np.sqrt(draws.size)


def test_run_experiment_complete_null_validity():
    c = cfg(configuration="complete_null",
            methods=("bonferroni", "holm", "hommel"), n_rep=2000, seed=5)
    res = run_experiment(c)
    for method, rec in res.records.items():
        fwer = rec["fwer_by_ell"][0]
        assert fwer <= 0.05 + 3 * rec["mc_se_fwer"], method
    assert np.isnan(res.records["holm"]["avg_power"])


def test_run_experiment_boost_beats_bonferroni():
    c = cfg(methods=("boost", "bonferroni"), n_rep=1500, seed=9,
            n_per_axis=50)
    res = run_experiment(c)
    boost = res.records["boost"]["avg_power"]
    bonf = res.records["bonferroni"]["avg_power"]
    assert boost > bonf
    # oracle values: pi3(alpha/B) vs G(alpha/K)
    assert boost == pytest.approx(0.2796, abs=0.04)
    assert bonf == pytest.approx(float(c.density.cdf(0.05 / 30)), abs=0.04)


def test_run_experiment_mixed_config_power_normalization():
    c = cfg(configuration="h_ell", ell=6, methods=("bonferroni",),
            n_rep=500, seed=2)
    res = run_experiment(c)
    rec = res.records["bonferroni"]
    assert 0.0 <= rec["avg_power"] <= 1.0
    assert rec["fwer_by_ell"].keys() == {6}


def test_threaded_run_bit_identical():
    c = cfg(methods=("boost", "hommel"), n_rep=400, seed=11, n_per_axis=40)
    r1 = run_experiment(c, threads=1)
    r2 = run_experiment(c, threads=3)
    for m in c.methods:
        a, b = r1.records[m], r2.records[m]
        assert a["avg_power"] == b["avg_power"]
        assert a["fwer_by_ell"] == b["fwer_by_ell"]


def test_sweep_rows_and_determinism():
    c1 = cfg(n_rep=150, seed=3)
    c2 = cfg(n_rep=150, seed=3, family=TRUNCNORM15)
    text1 = sweep_csv_text(sweep([c1, c2]))
    text2 = sweep_csv_text(sweep([c1, c2]))
    assert text1 == text2
    header = text1.splitlines()[0]
    assert header == "family,theta,K,B,alpha,method,metric,value,mc_se,n_rep,seed"
    assert "truncnorm,-1.5" in text1


def test_sweep_empty_configs():
    assert sweep_csv_text(sweep([])).strip() == \
        "family,theta,K,B,alpha,method,metric,value,mc_se,n_rep,seed"


def test_config_json_roundtrip():
    doc = {
        "family": TRUNCNORM20, "K": 30, "B": 10, "alpha": 0.05,
        "methods": ["boost", "hommel"], "n_rep": 500, "seed": 42,
        "configuration": {"kind": "h_ell", "ell": 5},
        "dependence": {"kind": "equicorrelated", "rho": 0.4},
    }
    c = config_from_json(doc)
    assert c.configuration == "h_ell" and c.ell == 5
    assert c.dependence == "equicorrelated" and c.rho == 0.4
    c2 = config_from_json('{"family": {"kind": "uniform", "params": {}}, '
                          '"K": 3, "B": 1, "alpha": 0.1, "n_rep": 100, '
                          '"seed": 0, "methods": ["holm"]}')
    assert c2.B == 1


def test_minp_context_reused_and_valid():
    c = cfg(configuration="complete_null", methods=("minp_resampling",),
            n_rep=1000, seed=13, n_resamples=1000)
    res = run_experiment(c)
    fwer = res.records["minp_resampling"]["fwer_by_ell"][0]
    assert fwer <= 0.05 + 3 * res.records["minp_resampling"]["mc_se_fwer"]


def test_block_methods_under_dependence_run():
    c = cfg(configuration="complete_null", dependence="one_factor",
            mean_loading=0.5, methods=("block_holm", "meinshausen",
                                       "hartog_evalue"), n_rep=300, seed=21)
    res = run_experiment(c)
    for rec in res.records.values():
        assert rec["fwer_by_ell"][0] <= 0.1
