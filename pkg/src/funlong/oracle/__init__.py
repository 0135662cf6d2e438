from funlong.oracle.measure import (
    PathMeasure,
    enumerate_intervened_measure,
    enumerate_observational_measure,
    exact_target,
    measure_to_dataset,
    prefix_masses,
    process_l1_norm,
    tv_distance,
)
from funlong.oracle.processes import (
    ExactProcessTable,
    TableProcess,
    exact_g_process,
    exact_q_process,
    max_martingale_gap,
)
