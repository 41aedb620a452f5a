"""Exact multiparametric QP solutions, critical-region discovery, and
partially supervised networks for DC optimal power flow."""

from .errors import (
    CycleDetected,
    DegenerateActiveSet,
    FingerprintMismatch,
    Infeasible,
    InfeasibleStart,
    MpqpError,
    NonFiniteLoss,
    NumericError,
    OracleLimit,
    ParseError,
    RegionExhausted,
    SingularKkt,
    ValidationError,
)
from .qp_core import (
    ActiveSet,
    FullSolution,
    ParamPoint,
    QpProblem,
    assemble_expanded_kkt,
    assemble_kkt,
    kkt_inverse,
    objective,
    problem_from_json,
    problem_to_json,
    region_solution,
    slope_matrix,
    solution_from_mu,
    solve_equality,
)
from .kkt import KktReport, is_optimal, kkt_report, kkt_report_batch, summarize
from .oracle import OracleResult, check_feasible, solve_active_set, solve_enumerate
from .dcopf import (
    GridCase,
    build_qp,
    list_cases,
    load_case,
    make_extreme_dataset,
    make_realistic_dataset,
    parse_case,
    sweep_start,
)
from .discovery import (
    CriticalRegion,
    LabeledDataset,
    RegionAtlas,
    atlas_from_json,
    atlas_to_json,
    dataset_from_csv,
    dataset_to_csv,
    discover,
    merge_datasets,
    populate,
    second_axis_extend,
)
from .psnn import (
    MuNet,
    PsnnModel,
    TrainConfig,
    analytic_second_layer,
    batch_predict,
    batch_predict_arrays,
    build_model,
    build_mu_net,
    gradient_check,
    model_from_json,
    model_to_json,
    mu_forward,
    predict_solution,
    train,
)
from .baseline import (
    BaselineConfig,
    DnnModel,
    baseline_from_json,
    baseline_to_json,
    init_dnn,
    make_solution_dataset,
    train_baseline,
)
from .bench import (
    BenchConfig,
    SimConfig,
    SimResult,
    benchmark,
    simulate_uncertainty,
    sweep_report,
)

__version__ = "0.1.0"
