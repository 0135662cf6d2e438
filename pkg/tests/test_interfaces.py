"""Interface-level contracts: report serialization, scalar process
evaluation on guarded prefixes, and the finite-measure norm helper."""
import json
import math

import numpy as np
import pytest

from funlong.core.data import history_prefix
from funlong.core.grid import Partition
from funlong.core.targets import terminal_outcome
from funlong.dgp import simulate_discrete_regular
from funlong.dgp.instances import two_visit_always_treat, two_visit_feedback
from funlong.estimators import DiscreteTruePropensity, EstimateReport, ModelQProcess, ipw_estimate
from funlong.core.view import PartitionView
from funlong.oracle.measure import (
    enumerate_intervened_measure,
    enumerate_observational_measure,
    measure_to_dataset,
    process_l1_norm,
)
from funlong.oracle.processes import exact_g_process, exact_q_process

CFG = two_visit_feedback()
REG = two_visit_always_treat()
NU = terminal_outcome()


def test_report_json_and_csv_row():
    r = EstimateReport(estimate=0.5, se=0.01, n=100, estimator="ipw",
                       partition_k=2, horizon="finite",
                       nuisance_modes={"propensity": "true_oracle"})
    payload = json.loads(r.to_json())
    assert payload["estimate"] == 0.5 and payload["estimator"] == "ipw"
    row = r.csv_row()
    assert list(row["estimate"]) == [0.5]
    with pytest.raises(ValueError):
        EstimateReport(estimate=0.0, se=-1.0, n=1, estimator="ipw",
                       partition_k=1, horizon="finite")


def test_scalar_process_evaluation_matches_batch():
    m = enumerate_observational_measure(CFG)
    m_int = enumerate_intervened_measure(CFG, REG)
    h = exact_g_process(m, REG, NU, CFG).as_process()
    q = exact_q_process(m, m_int).as_process()
    ds = simulate_discrete_regular(CFG, 40, seed=31)
    part = Partition(CFG.grid_points)
    view = PartitionView(ds, part, target=NU)
    h_cols = h.columns(view)
    for i in (0, 7, 13):
        for j in (0, 1, 2):
            prefix = history_prefix(ds.trajectory(i), j, "G", partition=part)
            assert h.evaluate(prefix) == pytest.approx(h_cols[i, j], abs=1e-12)
    q_model = ModelQProcess(REG, DiscreteTruePropensity(CFG))
    q_cols = q_model.columns(view)
    for i in (0, 5):
        prefix = history_prefix(ds.trajectory(i), 2, "G", partition=part)
        assert q_model.evaluate(prefix) == pytest.approx(q_cols[i, 2], abs=1e-12)


def test_scalar_process_rejects_f_prefix():
    m = enumerate_observational_measure(CFG)
    h = exact_g_process(m, REG, NU, CFG).as_process()
    ds = simulate_discrete_regular(CFG, 2, seed=1)
    prefix = history_prefix(ds.trajectory(0), 1, "F")
    with pytest.raises(ValueError):
        h.evaluate(prefix)


def test_process_l1_norm_on_measure():
    m = enumerate_observational_measure(CFG)
    nu_vals = NU.evaluate_batch(measure_to_dataset(m))
    # mean |nu| under the law equals the L1 norm of nu
    assert process_l1_norm(m, nu_vals) == pytest.approx(float(np.sum(m.weights * np.abs(nu_vals))))
    assert process_l1_norm(m, np.ones(m.n_paths)) == pytest.approx(1.0, abs=1e-12)


def test_regime_mean_weight_sanity():
    ds = simulate_discrete_regular(CFG, 30_000, seed=77)
    r = ipw_estimate(ds, Partition(CFG.grid_points), REG, DiscreteTruePropensity(CFG),
                     None, NU)
    assert math.isfinite(r.se)
    assert r.nuisance_modes["propensity"] == "true_oracle"
