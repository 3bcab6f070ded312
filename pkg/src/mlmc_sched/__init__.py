"""Multilevel Monte Carlo estimation with parallel scheduling strategies,
evaluated on a simulated machine, plus a desk-scale 3D PDE backend."""

from .streams import RandomStream, split_stream
from .perf import (
    MachineConfig,
    RunTimeModel,
    RuntimeFactorDistribution,
    LevelMetrics,
    surrogate_time,
    strong_efficiency,
    level_metrics,
    theoretical_optimum,
    imbalance_gap,
    draw_cost_factor,
    fit_serial_fraction,
)
from .backends import (
    SampleRecord,
    SampleFailed,
    SyntheticRates,
    SyntheticBackend,
    synthetic_sample,
    records_to_csv,
)
from .estimator import (
    ConvergenceRates,
    Tolerance,
    LevelStats,
    MlmcResult,
    SerialScheduler,
    mc_statistics,
    mlmc_combine,
    optimal_sample_counts,
    bias_estimate,
    needs_new_level,
    predict_epsilon_cost,
    run_adaptive,
)
from .sched_homog import (
    ThetaChoice,
    StaticSchedule,
    select_theta,
    select_theta_robust,
    expected_makespan,
    choose_thetas,
    build_static_schedule,
)
from .sched_hetero import (
    HeteroProblem,
    ScheduleMatrix,
    SaConfig,
    Objective,
    initial_guess_s0,
    level_kseq_solve,
    repair,
    mutate,
    objective,
    sa_optimize,
    sa_study,
)
from .machine_sim import (
    ExecutionMode,
    SimReport,
    simulate,
    simulate_static_batch,
    efficiency_report,
    export_timeline_csv,
    export_timeline_svg,
)
from .grids import GridHierarchy, VertexField
from .multigrid import CycleSpec
from .randomfield import (
    CovarianceParams,
    FieldSampler,
    sample_white_noise,
    sample_log_coefficient,
)
from .pde import (
    PdeBackend,
    apply_operator,
    fmg_solve,
    qoi,
    pde_correction_sample,
    save_field,
    load_field,
)

__version__ = "0.1.0"
