"""discovery: axis sweeps, region atlases, and solver-free data generation."""

import json

import numpy as np
import pytest

from mpqpnet import discovery as dv
from mpqpnet.errors import InfeasibleStart, ParseError, ValidationError
from mpqpnet.kkt import is_optimal, kkt_report
from mpqpnet.qp_core import FullSolution, ParamPoint, solution_from_mu

from conftest import theta_e


# ---------------------------------------------------------------------------
# discover
# ---------------------------------------------------------------------------


def test_tiny_two_regions(tiny, tiny_atlas):
    atlas = tiny_atlas
    assert len(atlas.regions) == 2
    assert atlas.regions[0].active_set.indices == ()
    assert atlas.regions[1].active_set.indices == (0,)
    # breakpoint at 0.6 located to within one step
    assert abs(atlas.regions[0].hi_value() - 0.6) <= atlas.alpha + 1e-12
    assert atlas.regions[0].lo_value() == pytest.approx(0.0, abs=1e-12)
    assert atlas.regions[1].hi_value() >= 1.1 - atlas.alpha - 1e-9
    assert atlas.infeasible_from is None


def test_tiny_coarse_step_still_two_regions(tiny):
    atlas = dv.discover(tiny, ParamPoint.zeros(tiny), axis=2, alpha=0.5,
                        theta_plus=1.1)
    assert [r.active_set.indices for r in atlas.regions] == [(), (0,)]


def test_tiny_refined_boundary(tiny):
    atlas = dv.discover(tiny, ParamPoint.zeros(tiny), axis=2, alpha=0.05,
                        theta_plus=1.1, refine=True)
    # bisection narrows the breakpoint to the KKT-tolerance halo around 0.6
    # (tol is on squared residuals, so the halo is ~sqrt(m*tol) ~ 1e-4 wide)
    assert abs(atlas.regions[0].hi_value() - 0.6) < 1e-3
    assert atlas.refined


def test_tiny_infeasible_tail(tiny):
    atlas = dv.discover(tiny, ParamPoint.zeros(tiny), axis=2, alpha=0.05,
                        theta_plus=1.3)
    assert atlas.infeasible_from is not None
    assert 1.1 < atlas.infeasible_from <= 1.1 + 0.05 + 1e-9


def test_infeasible_start_raises(tiny):
    with pytest.raises(InfeasibleStart):
        dv.discover(tiny, theta_e(tiny, 1.2), axis=2, alpha=0.05, theta_plus=0.1)


def test_non_varying_axis_rejected(tiny):
    with pytest.raises(ValidationError):
        dv.discover(tiny, ParamPoint.zeros(tiny), axis=0, alpha=0.05,
                    theta_plus=1.0)


def test_case6_five_active_sets(atlas6):
    seen = {r.active_set.indices for r in atlas6.regions}
    assert len(atlas6.regions) == 5
    assert len(seen) == 5
    assert () in seen


def test_region_slopes_stored(atlas6):
    for r in atlas6.regions:
        assert r.slopes.shape == (len(r.active_set), 3)
        assert r.intercept.shape == (len(r.active_set),)


# ---------------------------------------------------------------------------
# populate
# ---------------------------------------------------------------------------


def test_populate_counts_and_labels(tiny, tiny_atlas, tiny_data):
    ds = tiny_data
    assert len(ds) == 1000
    assert ds.inputs.shape == (1000, 1)
    assert ds.targets.shape == (1000, 2)
    assert set(np.unique(ds.region_id)) == {0, 1}
    for rid in (0, 1):
        region = tiny_atlas.regions[rid]
        vals = ds.inputs[ds.region_id == rid, 0]
        assert vals.min() >= region.lo_value() - 1e-12
        assert vals.max() <= region.hi_value() + 1e-12


def test_populate_rows_pass_kkt(tiny, tiny_data):
    rng = np.random.default_rng(0)
    for i in rng.choice(len(tiny_data), size=100, replace=False):
        theta = float(tiny_data.inputs[i, 0])
        mu = tiny_data.targets[i]
        x, lam = solution_from_mu(tiny, mu, theta_e(tiny, theta))
        rep = kkt_report(tiny, theta_e(tiny, theta), FullSolution(x, lam, mu))
        assert is_optimal(rep, 1e-9)


def test_populate_deterministic(tiny, tiny_atlas):
    a = dv.populate(tiny, tiny_atlas, per_region=40, seed=123)
    b = dv.populate(tiny, tiny_atlas, per_region=40, seed=123)
    c = dv.populate(tiny, tiny_atlas, per_region=40, seed=124)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)
    assert not np.array_equal(a.inputs, c.inputs)


def test_populate_one_per_region(prob6, atlas6):
    ds = dv.populate(prob6, atlas6, per_region=1, seed=0)
    assert len(ds) == len(atlas6.regions)


# ---------------------------------------------------------------------------
# second axis extension
# ---------------------------------------------------------------------------


def test_second_axis_degenerate_on_tiny(tiny, tiny_atlas):
    # only one varying coordinate exists: extension must shrink to nothing
    with pytest.warns(UserWarning):
        ds = dv.second_axis_extend(tiny, tiny_atlas, axis2=2, per_region=10,
                                   seed=0)
    assert len(ds) == 0


def test_second_axis_case6(prob6, atlas6, case6):
    from mpqpnet import dcopf
    axis2 = dcopf.axis_for_bus(case6, 5)
    ds = dv.second_axis_extend(prob6, atlas6, axis2, per_region=50, seed=9)
    sampled = len(ds) + ds.meta["drops"]
    assert sampled > 0
    # first-axis active sets transfer: at least 90% of rows verified
    assert len(ds) >= 0.9 * sampled
    assert ds.inputs.shape[1] == prob6.n_varying


def test_merge_datasets(tiny, tiny_atlas):
    a = dv.populate(tiny, tiny_atlas, per_region=5, seed=1)
    b = dv.populate(tiny, tiny_atlas, per_region=3, seed=2)
    merged = dv.merge_datasets(a, b)
    assert len(merged) == len(a) + len(b)
    assert np.array_equal(merged.inputs[: len(a)], a.inputs)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def test_atlas_json_round_trip(tiny, tiny_atlas):
    clone = dv.atlas_from_json(dv.atlas_to_json(tiny_atlas))
    assert clone.axis == tiny_atlas.axis
    assert clone.alpha == tiny_atlas.alpha
    assert clone.problem.fingerprint == tiny.fingerprint
    assert len(clone.regions) == len(tiny_atlas.regions)
    for r, s in zip(clone.regions, tiny_atlas.regions):
        assert r.active_set == s.active_set
        assert np.array_equal(r.slopes, s.slopes)
        assert np.array_equal(r.intercept, s.intercept)
        assert np.array_equal(r.lo.to_stacked(), s.lo.to_stacked())
        assert np.array_equal(r.hi.to_stacked(), s.hi.to_stacked())


def test_atlas_tamper_detected(tiny_atlas):
    doc = json.loads(dv.atlas_to_json(tiny_atlas))
    doc["problem"]["Q"][0][0] = 3.0
    with pytest.raises(ParseError):
        dv.atlas_from_dict(doc)


def test_dataset_csv_round_trip(tiny_data):
    clone = dv.dataset_from_csv(dv.dataset_to_csv(tiny_data))
    assert np.array_equal(clone.inputs, tiny_data.inputs)
    assert np.array_equal(clone.targets, tiny_data.targets)
    assert np.array_equal(clone.region_id, tiny_data.region_id)
