"""Shared fixtures.

The expensive artifacts (atlases, datasets, trained networks) are built once
per session and reused by both the unit tests and the acceptance gate.
"""

import numpy as np
import pytest

from mpqpnet import baseline as bl
from mpqpnet import dcopf
from mpqpnet import discovery as dv
from mpqpnet import psnn as ps
from mpqpnet.qp_core import ParamPoint, QpProblem


def make_tiny() -> QpProblem:
    """min x1^2 + x2^2  s.t.  x1 + x2 = theta_e;  x1 <= 0.3, x2 <= 0.8.

    Closed forms used throughout the tests: the interior optimum x = theta/2
    leaves region {} at theta = 0.6 (x1 hits 0.3); beyond that mu1 = 2*theta
    - 1.2; the instance is infeasible past theta = 1.1 (sum of upper bounds).
    """
    mask = np.zeros(5, dtype=bool)
    mask[2] = True  # the theta_e slot is the only runtime parameter
    return QpProblem(
        Q=np.eye(2),
        C=np.zeros(2),
        C0=0.0,
        Ae=np.array([[1.0, 1.0]]),
        be=np.zeros(1),
        Ac=np.eye(2),
        bc=np.array([0.3, 0.8]),
        varying_mask=mask,
    )


def theta_e(problem: QpProblem, value: float) -> ParamPoint:
    """TINY convenience: a point with only the equality slot perturbed."""
    return ParamPoint(np.zeros(problem.n), np.array([value]), np.zeros(problem.m2))


@pytest.fixture(scope="session")
def tiny() -> QpProblem:
    return make_tiny()


@pytest.fixture(scope="session")
def tiny_atlas(tiny):
    return dv.discover(tiny, ParamPoint.zeros(tiny), axis=2, alpha=0.05,
                       theta_plus=1.1)


@pytest.fixture(scope="session")
def tiny_data(tiny, tiny_atlas):
    return dv.populate(tiny, tiny_atlas, per_region=500, seed=42)


@pytest.fixture(scope="session")
def tiny_val(tiny, tiny_atlas):
    return dv.populate(tiny, tiny_atlas, per_region=100, seed=43)


@pytest.fixture(scope="session")
def case6() -> dcopf.GridCase:
    return dcopf.load_case("case6")


@pytest.fixture(scope="session")
def prob6(case6) -> QpProblem:
    return dcopf.build_qp(case6)


@pytest.fixture(scope="session")
def atlas6(case6, prob6):
    bus = 4
    return dv.discover(prob6, dcopf.sweep_start(case6, bus),
                       dcopf.axis_for_bus(case6, bus), alpha=0.01,
                       theta_plus=case6.total_capacity())


@pytest.fixture(scope="session")
def data6(prob6, atlas6):
    # 5 regions x 200 = the paper-protocol 1000 training rows
    return dv.populate(prob6, atlas6, per_region=200, seed=7)


@pytest.fixture(scope="session")
def val6(prob6, atlas6):
    return dv.populate(prob6, atlas6, per_region=60, seed=8)


@pytest.fixture(scope="session")
def trained6(prob6, atlas6, data6, val6):
    """Trained 6-bus PSNN: analytic intercept start, random second layer."""
    net = ps.build_mu_net(atlas6, seed=0, analytic_init=True)
    cfg = ps.TrainConfig(learning_rate=1e-2, seed=0)
    trained, history = ps.train(net, data6, val6, cfg)
    return trained, history


@pytest.fixture(scope="session")
def model6(prob6, trained6):
    net, _ = trained6
    return ps.build_model(prob6, net)


@pytest.fixture(scope="session")
def dnn6(case6, prob6):
    """Baseline DNN trained on oracle-labeled realistic samples."""
    pts_train = dcopf.make_realistic_dataset(case6, 1500, seed=21)
    pts_val = dcopf.make_realistic_dataset(case6, 300, seed=22)
    train_ds = bl.make_solution_dataset(prob6, pts_train)
    val_ds = bl.make_solution_dataset(prob6, pts_val)
    cfg = bl.BaselineConfig(max_epochs=400, seed=0)
    model = bl.init_dnn(prob6, cfg)
    trained, history = bl.train_baseline(model, train_ds, val_ds, cfg)
    return trained, history
