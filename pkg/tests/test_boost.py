import numpy as np
import pytest

from boostfwer.boost import (
    BlockPartition,
    FoldSplit,
    boost_run,
    deflate_alpha,
    plugin_boost_run,
    read_pvalues_csv,
    rejections_to_json,
)
from boostfwer.densities import truncnorm_density
from boostfwer.solver import clear_solver_cache, default_grid

G15 = truncnorm_density(-1.5)
G20 = truncnorm_density(-2.0)


def make_partition(n_blocks):
    return BlockPartition({f"b{b}": (f"h{3*b}", f"h{3*b+1}", f"h{3*b+2}")
                           for b in range(n_blocks)})


def test_partition_validation():
    with pytest.raises(ValueError, match="members"):
        BlockPartition({"b0": ("a", "b")})
    with pytest.raises(ValueError, match="two blocks"):
        BlockPartition({"b0": ("a", "b", "c"), "b1": ("c", "d", "e")})
    part = BlockPartition.from_assignments(
        {"x": 1, "y": 1, "z": 1, "u": 2, "v": 2, "w": 2})
    assert part.n_blocks == 2


def test_fold_split_validation():
    part = make_partition(4)
    with pytest.raises(ValueError, match="overlap"):
        FoldSplit(estimation=("b0",), testing=("b0", "b1"))
    with pytest.raises(ValueError, match="non-empty"):
        FoldSplit(estimation=("b0",), testing=())
    halves = FoldSplit.halves(part)
    assert set(halves.estimation) | set(halves.testing) == set(part.block_ids())
    swapped = FoldSplit.halves(part, swap=True)
    assert set(swapped.estimation) == set(halves.testing)


def test_boost_all_pvalues_one_rejects_nothing():
    part = make_partition(3)
    pvals = {h: 1.0 for h in part.hypothesis_ids}
    res = boost_run(pvals, part, 0.005, G20)
    assert len(res.rejected) == 0
    assert all(r == 0 for r in res.per_block.values())


def test_boost_tiny_block_rejects_all_three():
    part = make_partition(2)
    pvals = {h: 0.99 for h in part.hypothesis_ids}
    for h in part.blocks["b0"]:
        pvals[h] = 1e-12
    res = boost_run(pvals, part, 0.005, G20)
    assert res.per_block["b0"] == 3
    assert set(part.blocks["b0"]) <= res.rejected
    assert res.per_block["b1"] == 0


def test_boost_rejects_prefix_of_sorted_pvalues():
    part = make_partition(4)
    rng = np.random.default_rng(0)
    pvals = {h: float(p) for h, p in zip(part.hypothesis_ids,
                                         rng.random(12) ** 3)}
    res = boost_run(pvals, part, 0.0167, G15)
    for bid, members in part.blocks.items():
        ordered = sorted(members, key=lambda h: (pvals[h], h))
        r = res.per_block[bid]
        assert set(ordered[:r]) <= res.rejected
        assert not set(ordered[r:]) & res.rejected


def test_boost_equal_levels_cache_invariance():
    part = make_partition(5)
    rng = np.random.default_rng(11)
    pvals = {h: float(p) for h, p in zip(part.hypothesis_ids, rng.random(15))}
    grid = default_grid(G15, n_per_axis=40)
    clear_solver_cache()
    res_cached = boost_run(pvals, part, 0.005, G15, grid, cache=True)
    clear_solver_cache()
    res_fresh = boost_run(pvals, part, 0.005, G15, grid, cache=False)
    assert res_cached.rejected == res_fresh.rejected
    assert res_cached.per_block == res_fresh.per_block


def test_boost_input_validation():
    part = make_partition(2)
    pvals = {h: 0.5 for h in part.hypothesis_ids}
    with pytest.raises(ValueError, match="missing"):
        boost_run({"h0": 0.2}, part, 0.005, G15)
    bad = dict(pvals)
    bad["h0"] = 1.5
    with pytest.raises(ValueError, match="0, 1"):
        boost_run(bad, part, 0.005, G15)
    with pytest.warns(UserWarning, match="budget"):
        boost_run(pvals, part, 0.6, G15, default_grid(G15, n_per_axis=20))


def test_per_block_levels_mapping():
    part = make_partition(2)
    pvals = {h: 0.9 for h in part.hypothesis_ids}
    levels = {"b0": 0.005, "b1": 0.02}
    res = boost_run(pvals, part, levels, G15, default_grid(G15, n_per_axis=30))
    assert set(res.per_block) == {"b0", "b1"}


# ---------------------------------------------------------------------------
# deflation


def test_deflate_closed_form():
    n = 1000
    expect = 0.05 - 0.01 * 10 * (np.log(n) / n) ** (1 / 3)
    assert deflate_alpha(0.05, 0.01, 10, n) == pytest.approx(expect, abs=1e-12)
    assert expect == pytest.approx(0.031, abs=1e-3)


def test_deflate_l3_zero_is_identity():
    assert deflate_alpha(0.05, 0.0, 10, 100) == 0.05


def test_deflate_exhausted_budget_errors():
    with pytest.raises(ValueError, match="exhaust"):
        deflate_alpha(0.05, 1.0, 10, 100)
    with pytest.raises(ValueError, match="n >= 2"):
        deflate_alpha(0.05, 0.01, 10, 1)


def test_deflation_curve_shape_matches_regime():
    # the penalty decays like (log n / n)^{1/3}: strictly shrinking in n and
    # convex-ish over decades
    ns = np.array([300, 1000, 3000, 10000, 30000])
    levels = np.array([deflate_alpha(0.05, 1e-2, 10, int(n)) for n in ns])
    assert np.all(np.diff(levels) > 0)
    assert levels[0] > 0.02 and levels[-1] < 0.05


# ---------------------------------------------------------------------------
# plug-in runs


def test_plugin_uniform_estimation_fold_controls_null():
    from boostfwer.quadrature import build_qgrid

    rng = np.random.default_rng(20240811)
    part = make_partition(8)
    fold = FoldSplit.halves(part)
    grid = build_qgrid(24)  # shared unwarped grid keeps the loop fast
    n_rep = 400
    false_any = 0
    for _ in range(n_rep):
        pvals = {h: float(v) for h, v in zip(part.hypothesis_ids,
                                             rng.random(24))}
        res = plugin_boost_run(pvals, part, fold, alpha=0.05, grid=grid)
        false_any += bool(res.rejected)
    fwer = false_any / n_rep
    se = np.sqrt(0.05 * 0.95 / n_rep)
    assert fwer <= 0.05 + 3 * se


def test_plugin_rejections_restricted_to_testing_fold():
    rng = np.random.default_rng(3)
    part = make_partition(6)
    fold = FoldSplit.halves(part)
    pvals = {h: float(v) for h, v in zip(part.hypothesis_ids,
                                         G20.ppf(rng.random(18)))}
    res = plugin_boost_run(pvals, part, fold, alpha=0.1)
    testing_ids = {h for b in fold.testing for h in part.blocks[b]}
    assert res.rejected <= testing_ids
    assert set(res.per_block) == set(fold.testing)


def test_plugin_swap_protocol_covers_all_blocks_with_valid_union():
    from boostfwer.quadrature import build_qgrid

    rng = np.random.default_rng(99)
    part = make_partition(6)
    grid = build_qgrid(24)
    n_rep = 300
    false_any = 0
    for _ in range(n_rep):
        pvals = {h: float(v) for h, v in zip(part.hypothesis_ids,
                                             rng.random(18))}
        r1 = plugin_boost_run(pvals, part, FoldSplit.halves(part), 0.025,
                              grid=grid)
        r2 = plugin_boost_run(pvals, part, FoldSplit.halves(part, swap=True),
                              0.025, grid=grid)
        assert set(r1.per_block) | set(r2.per_block) == set(part.block_ids())
        false_any += bool(r1.rejected | r2.rejected)
    se = np.sqrt(0.05 * 0.95 / n_rep)
    assert false_any / n_rep <= 0.05 + 3 * se


def test_plugin_validation():
    part = make_partition(4)
    pvals = {h: 0.5 for h in part.hypothesis_ids}
    fold = FoldSplit.halves(part)
    with pytest.raises(ValueError, match="estimator"):
        plugin_boost_run(pvals, part, fold, 0.05, estimator="kde")
    with pytest.raises(ValueError, match="budget"):
        plugin_boost_run(pvals, part, fold, 0.05, budget="kkt")
    with pytest.raises(ValueError, match="unknown blocks"):
        plugin_boost_run(pvals, part, FoldSplit(("zz",), ("b0",)), 0.05)


def test_plugin_oracle_deficit_does_not_grow_with_testing_blocks():
    # per-hypothesis power gap to the known-density rule, evaluated through
    # the grid functionals; the gap must not trend upward in the number of
    # testing blocks
    from boostfwer.densities import fit_grenander, grenander_density
    from boostfwer.quadrature import build_qgrid
    from boostfwer.solver import (K3Rule, compute_optimal_mu, evaluate_rule,
                                  pi3_value)

    g = G15
    rng = np.random.default_rng(7)
    ghat = grenander_density(fit_grenander(g.ppf(rng.random(2000))))
    eval_grid = build_qgrid(40, warp=g)
    ghat_grid = build_qgrid(40, warp=ghat)
    deficits = []
    for b_t in (2, 5, 10, 20):
        level = 0.05 / b_t
        oracle = pi3_value(level, g, eval_grid)
        mu, diag = compute_optimal_mu(level, ghat, ghat_grid)
        assert diag.flag == "success"
        realized = evaluate_rule(K3Rule(mu, ghat, ghat_grid), g,
                                 eval_grid).avg_power
        deficits.append(oracle - realized)
    assert max(deficits) <= max(deficits[0], 0.0) + 0.02


# ---------------------------------------------------------------------------
# file formats


def test_pvalue_csv_roundtrip(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text(
        "hypothesis_id,block_id,p_value\n"
        "h0,b0,0.001\nh1,b0,0.5\nh2,b0,0.9\n"
        "h3,b1,0.2\nh4,b1,0.4\nh5,b1,0.6\n")
    pvals, part = read_pvalues_csv(path)
    assert pvals["h0"] == 0.001
    assert part.n_blocks == 2
    res = boost_run(pvals, part, 0.025, G15, default_grid(G15, n_per_axis=30))
    text = rejections_to_json(res, extra={"alpha": 0.05})
    assert '"per_block"' in text and '"alpha"' in text


def test_pvalue_csv_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("hypothesis_id,block_id,p_value\nh0,b0,1.2\n")
    with pytest.raises(ValueError, match=":2"):
        read_pvalues_csv(path)
    path.write_text("hypothesis_id,block_id\nh0,b0\n")
    with pytest.raises(ValueError, match="p_value"):
        read_pvalues_csv(path)
