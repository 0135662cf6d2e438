from funlong.studies.report import StudyReport, evaluate_rule
from funlong.studies.runners import (
    REGIMES,
    StudyConfig,
    resolve_target,
    run_censoring_recovery,
    run_dr_grid,
    run_ee_unbiasedness,
    run_equivalence,
    run_mesh_convergence,
    run_study,
)
