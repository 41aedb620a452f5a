"""dcopf: case fixtures, the QP builder, MATPOWER import, dataset recipes."""

import numpy as np
import pytest

from mpqpnet import dcopf
from mpqpnet.errors import ParseError, ValidationError
from mpqpnet.oracle import solve_active_set
from mpqpnet.qp_core import ParamPoint, QpProblem, assemble_kkt

MATPOWER_SAMPLE = """
function mpc = case3_sample
mpc.version = '2';
mpc.baseMVA = 100;
% bus:  id type Pd  (remaining columns are ignored)
mpc.bus = [
    1  3   0  0  0  0  1  1  0  230  1  1.1  0.9;
    2  1  40  0  0  0  1  1  0  230  1  1.1  0.9;
    3  1  30  0  0  0  1  1  0  230  1  1.1  0.9;
];
mpc.gen = [
    1  0  0  0  0  1  100  1  120  0;
    3  0  0  0  0  1  100  1   80  0;
    3  0  0  0  0  1  100  0   50  0;  % out of service, must be skipped
];
mpc.branch = [
    1  2  0.0  0.10  0  0  0  0  0  0  1;
    2  3  0.0  0.20  0  0  0  0  0  0  1;
    1  3  0.0  0.25  0  0  0  0  0  0  1;
];
mpc.gencost = [
    2  0  0  3  0.011  5.0  100;
    2  0  0  3  0.020  4.0   80;
    2  0  0  3  0.030  9.0   10;
];
"""


# ---------------------------------------------------------------------------
# fixtures and validation
# ---------------------------------------------------------------------------


def test_packaged_cases_present():
    names = dcopf.list_cases()
    for expected in ("case2", "case6", "case30", "case57"):
        assert expected in names


def test_unknown_case_rejected():
    with pytest.raises(ValidationError):
        dcopf.load_case("case9999")


@pytest.mark.parametrize("name,nb,ng", [
    ("case2", 2, 1), ("case6", 6, 3), ("case30", 30, 6), ("case57", 57, 7),
])
def test_case_dimensions(name, nb, ng):
    case = dcopf.load_case(name)
    assert case.n_bus == nb
    assert case.n_gen == ng
    prob = dcopf.build_qp(case)
    assert prob.n == ng + nb
    assert prob.m1 == nb + 1
    assert prob.m2 == 2 * ng
    assert prob.x_block_split == ng
    assert prob.n_varying == len(case.load_buses())


def test_case_capacity_exceeds_demand():
    for name in ("case2", "case6", "case30", "case57"):
        case = dcopf.load_case(name)
        assert case.total_capacity() > case.total_demand()


def test_disconnected_network_rejected():
    with pytest.raises(ValidationError):
        dcopf.GridCase(
            name="broken", base_mva=100.0, ref_bus=1,
            buses=(dcopf.Bus(1), dcopf.Bus(2, 0.5), dcopf.Bus(3, 0.5)),
            branches=(dcopf.Branch(1, 2, 5.0),),  # bus 3 unreachable
            generators=(dcopf.Gen(1, 10.0, 100.0, 0.0, 2.0),),
        )


def test_bad_generator_rejected():
    with pytest.raises(ValidationError):
        dcopf.GridCase(
            name="badgen", base_mva=100.0, ref_bus=1,
            buses=(dcopf.Bus(1), dcopf.Bus(2, 0.5)),
            branches=(dcopf.Branch(1, 2, 5.0),),
            generators=(dcopf.Gen(1, 0.0, 100.0, 0.0, 2.0),),  # q must be > 0
        )


def test_case_json_round_trip(case6):
    clone = dcopf.parse_case(dcopf.serialize_case(case6))
    assert clone == case6


# ---------------------------------------------------------------------------
# QP builder
# ---------------------------------------------------------------------------


def test_build_qp_structure(case6, prob6):
    ng, nb = case6.n_gen, case6.n_bus
    # quadratic block: diag(q) on generators, zero on angles
    assert np.array_equal(np.diag(prob6.Q)[:ng], [g.q for g in case6.generators])
    assert np.all(prob6.Q[ng:, ng:] == 0.0)
    assert np.array_equal(prob6.C[:ng], [g.c for g in case6.generators])
    assert np.all(prob6.C[ng:] == 0.0)
    # KKT gen entries carry 2q, angle entries none (reference-row aside)
    J = assemble_kkt(prob6)
    assert np.array_equal(np.diag(J)[:ng], [2 * g.q for g in case6.generators])
    assert np.all(np.diag(J)[ng:prob6.n] == 0.0)
    # balance right-hand side is the demand vector, then the reference row
    assert np.array_equal(prob6.be[:nb], [b.demand for b in case6.buses])
    assert prob6.be[nb] == 0.0
    # box rows: uppers then lowers
    assert np.array_equal(prob6.bc[:ng], [g.pmax for g in case6.generators])
    assert np.array_equal(prob6.bc[ng:], [-g.pmin for g in case6.generators])
    # only load-bus balance slots vary
    expected_axes = sorted(dcopf.axis_for_bus(case6, b) for b in case6.load_buses())
    assert list(prob6.varying_idx) == expected_axes


def test_case2_matches_hand_dimensions():
    case = dcopf.load_case("case2")
    prob = dcopf.build_qp(case)
    assert (prob.n, prob.m1, prob.m2) == (3, 3, 2)
    sol = solve_active_set(prob, ParamPoint.zeros(prob)).solution
    # the single generator serves the whole 0.5 pu load
    assert sol.x[0] == pytest.approx(0.5, abs=1e-12)


def test_relaxed_bounds_equal_equality_solution(case6, prob6):
    from mpqpnet.qp_core import solve_equality
    relaxed = QpProblem(
        Q=prob6.Q, C=prob6.C, C0=prob6.C0, Ae=prob6.Ae, be=prob6.be,
        Ac=prob6.Ac, bc=np.full(prob6.m2, 1e6),
        varying_mask=prob6.varying_mask, x_block_split=prob6.x_block_split)
    res = solve_active_set(relaxed, ParamPoint.zeros(relaxed))
    eq_x, _eq_lam = solve_equality(prob6, ParamPoint.zeros(prob6))
    assert np.max(np.abs(res.solution.x - eq_x)) < 1e-8


def test_axis_for_bus(case6, prob6):
    axis = dcopf.axis_for_bus(case6, 4)
    assert prob6.varying_mask[axis]
    with pytest.raises(ValidationError):
        dcopf.axis_for_bus(case6, 99)


def test_sweep_start(case6, prob6):
    p = dcopf.sweep_start(case6, 4, baseline=0.01)
    idx = case6.bus_index()
    # swept bus lands at zero demand, other load buses at the baseline
    assert p.theta_e[idx[4]] == pytest.approx(-0.7, abs=1e-12)
    assert p.theta_e[idx[5]] == pytest.approx(-0.69, abs=1e-12)
    assert p.theta_e[idx[6]] == pytest.approx(-0.69, abs=1e-12)
    assert np.all(p.theta_e[[idx[1], idx[2], idx[3]]] == 0.0)
    assert np.all(p.theta_c == 0.0) and np.all(p.theta_C == 0.0)


# ---------------------------------------------------------------------------
# MATPOWER import
# ---------------------------------------------------------------------------


def test_parse_matpower_sample():
    case = dcopf.parse_matpower(MATPOWER_SAMPLE, name="case3_sample")
    assert case.base_mva == 100.0
    assert case.ref_bus == 1
    assert case.n_bus == 3
    assert case.n_gen == 2  # status-0 unit dropped
    assert case.buses[1].demand == pytest.approx(0.4)
    # per-unit cost conversion: q = c2 * base^2, c = c1 * base
    assert case.generators[0].q == pytest.approx(0.011 * 100 * 100)
    assert case.generators[0].c == pytest.approx(5.0 * 100)
    assert case.generators[1].pmax == pytest.approx(0.8)
    # susceptance is 1/x
    assert case.branches[0].susceptance == pytest.approx(10.0)
    prob = dcopf.build_qp(case)
    solve_active_set(prob, ParamPoint.zeros(prob))  # importable case solves


def test_parse_matpower_round_trip():
    case = dcopf.parse_matpower(MATPOWER_SAMPLE)
    clone = dcopf.parse_case(dcopf.serialize_case(case))
    assert clone == case


def test_parse_matpower_rejects_piecewise_costs():
    bad = MATPOWER_SAMPLE.replace("2  0  0  3  0.011", "1  0  0  3  0.011")
    with pytest.raises(ParseError):
        dcopf.parse_matpower(bad)


def test_parse_case_sniffs_format(case6):
    assert dcopf.parse_case(dcopf.serialize_case(case6)) == case6
    assert dcopf.parse_case(MATPOWER_SAMPLE).n_bus == 3
    with pytest.raises(ParseError):
        dcopf.parse_case("not a case at all")


# ---------------------------------------------------------------------------
# dataset recipes
# ---------------------------------------------------------------------------


def test_realistic_dataset(case6, prob6):
    pts = dcopf.make_realistic_dataset(case6, 50, seed=5)
    assert len(pts) == 50
    idx = case6.bus_index()
    load_rows = [idx[b] for b in case6.load_buses()]
    for p in pts:
        scale = p.theta_e[load_rows] / 0.7 + 1.0
        assert np.all(scale >= 0.6 - 1e-12) and np.all(scale <= 1.4 + 1e-12)
        mask = np.ones(case6.n_bus + 1, dtype=bool)
        mask[load_rows] = False
        assert np.all(p.theta_e[mask] == 0.0)
    again = dcopf.make_realistic_dataset(case6, 50, seed=5)
    assert all(np.array_equal(a.theta_e, b.theta_e) for a, b in zip(pts, again))


def test_extreme_dataset(case6):
    pts = dcopf.make_extreme_dataset(case6, 60, seed=6)
    assert len(pts) == 60
    base = np.array([b.demand for b in case6.buses] + [0.0])
    # singled-out bus in [0, capacity], the other load buses sit at 0.01
    cap = case6.total_capacity() + 0.01 * (len(case6.load_buses()) - 1)
    for p in pts:
        total = float(np.sum(base[:case6.n_bus] + p.theta_e[:case6.n_bus]))
        assert 0.0 <= total <= cap + 1e-9
    again = dcopf.make_extreme_dataset(case6, 60, seed=6)
    assert all(np.array_equal(a.theta_e, b.theta_e) for a, b in zip(pts, again))
