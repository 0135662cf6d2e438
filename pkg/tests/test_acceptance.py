"""Acceptance suite: one test per criterion, each printing a pass/fail line
with its runtime and asserting the declared tolerance and budget.

Monte Carlo criteria run on fixed seeds, and every generator here is
bitwise reproducible, so the suite is deterministic end to end.
"""
import math
import time
import numpy as np

from funlong.core.grid import Partition
from funlong.core.targets import terminal_outcome
from funlong.core.view import PartitionView
from funlong.dgp import simulate_discrete_regular, simulate_linear_gaussian_diffusion
from funlong.dgp.instances import (
    ctmc_all_on_regime,
    ctmc_slow_feedback,
    diffusion_feedback,
    diffusion_regime,
    two_visit_always_treat,
    two_visit_feedback,
)
from funlong.estimators import (
    DiscreteTruePropensity,
    ExactFiniteState,
    FeatureSpec,
    LeastSquaresBasis,
    ModelQProcess,
    dr_estimate,
    fit_h_process,
    fit_propensity,
    gcomp_estimate,
    ipw_estimate,
)
from funlong.oracle.ctmc_exact import intervened_terminal_mean, projected_intervened_measure
from funlong.oracle.linear_gaussian import closed_form_linear_gaussian
from funlong.oracle.measure import (
    enumerate_intervened_measure,
    enumerate_observational_measure,
    exact_target,
    measure_to_dataset,
    tv_distance,
)
from funlong.oracle.processes import exact_g_process, exact_q_process, max_martingale_gap
from funlong.studies import StudyConfig, run_study

NU = terminal_outcome()
CFG = two_visit_feedback()
REG = two_visit_always_treat()
PART = Partition(CFG.grid_points)
M_OBS = enumerate_observational_measure(CFG)
M_INT = enumerate_intervened_measure(CFG, REG)
TARGET = exact_target(M_INT, NU)


class _Clock:
    def __init__(self, name, budget_s):
        self.name = name
        self.budget = budget_s

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, exc_type, *rest):
        self.elapsed = time.monotonic() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        print(f"\n[{self.name}] {status} ({self.elapsed:.1f}s, budget {self.budget}s)")
        if exc_type is None:
            assert self.elapsed < self.budget, f"{self.name} exceeded runtime budget"
        return False


def test_criterion_01_exact_identification_triple():
    with _Clock("criterion 1: exact identification triple", 60):
        pop = measure_to_dataset(M_OBS)
        h = exact_g_process(M_OBS, REG, NU, CFG).as_process()
        q = exact_q_process(M_OBS, M_INT).as_process()
        r_g = gcomp_estimate(pop, PART, REG, ExactFiniteState(), NU, n_boot=0)
        r_i = ipw_estimate(pop, PART, REG, DiscreteTruePropensity(CFG), None, NU)
        r_d = dr_estimate(pop, PART, h, q, REG, NU)
        for name, r in (("gcomp", r_g), ("ipw", r_i), ("dr", r_d)):
            assert abs(r.estimate - TARGET) <= 1e-12, name


def test_criterion_02_sample_level_consistency():
    with _Clock("criterion 2: sample-level consistency, 20 seeds", 60):
        n = 100_000
        h = exact_g_process(M_OBS, REG, NU, CFG).as_process()
        prop = DiscreteTruePropensity(CFG)
        hits = 0
        for seed in range(20):
            ds = simulate_discrete_regular(CFG, n, seed=9000 + seed)
            r_i = ipw_estimate(ds, PART, REG, prop, None, NU)
            r_g = gcomp_estimate(ds, PART, REG, ExactFiniteState(), NU,
                                 n_boot=200, seed=seed)
            r_d = dr_estimate(ds, PART, h, ModelQProcess(REG, prop), REG, NU)
            ok = all(abs(r.estimate - TARGET) <= 3.0 * r.se for r in (r_i, r_g, r_d))
            hits += int(ok)
        assert hits >= 18, f"only {hits}/20 seeds passed"


def test_criterion_03_double_robustness_grid():
    with _Clock("criterion 3: double robustness grid", 300):
        sc = StudyConfig(kind="dr_grid", instance="two_visit_feedback",
                         regime="two_visit_always", n=100_000, replicates=20,
                         seed=101, options={"n_boot": 100})
        rep = run_study(sc)
        assert rep.all_passed, rep.failed_rows()
        hits = [r for r in rep.rows if r["tag"] == "neg_cell_hits"][0]
        assert hits["estimate"] >= 18

        sc_d = StudyConfig(kind="dr_grid", instance="diffusion_feedback",
                           regime="diffusion_dose", n=30_000, replicates=20, seed=202)
        rep_d = run_study(sc_d)
        assert rep_d.all_passed, rep_d.failed_rows()
        hits_d = [r for r in rep_d.rows if r["tag"] == "neg_cell_hits"][0]
        assert hits_d["estimate"] >= 18


def test_criterion_04_estimating_equation_unbiasedness():
    with _Clock("criterion 4: estimating-equation unbiasedness", 120):
        sc = StudyConfig(kind="ee_unbiasedness", instance="two_visit_feedback",
                         regime="two_visit_always", n=100_000, seed=303)
        rep = run_study(sc)
        assert rep.all_passed, rep.failed_rows()
        batteries = [r for r in rep.rows if r["tag"].startswith(("xi_out[H*", "xi_trt[h"))]
        assert len(batteries) == 10
        negatives = [r for r in rep.rows if r["rule"] == "outside_3se"]
        assert len(negatives) == 2


def test_criterion_05_intervenable_tv_convergence():
    with _Clock("criterion 5: partition-limit convergence of intervened measures", 60):
        cfg = ctmc_slow_feedback()
        reg = ctmc_all_on_regime()
        tvs, targets = [], []
        for k in (2, 4, 8, 16, 32, 64):
            m1 = projected_intervened_measure(cfg, reg, k)
            m2 = projected_intervened_measure(cfg, reg, 2 * k)
            tvs.append(tv_distance(m1, m2))
            targets.append(intervened_terminal_mean(cfg, reg, k))
        targets.append(intervened_terminal_mean(cfg, reg, 128))
        assert all(b < a for a, b in zip(tvs, tvs[1:])), tvs
        assert tvs[-1] < 1e-3
        diffs = [abs(b - a) for a, b in zip(targets, targets[1:])]
        assert diffs[-1] < 1e-3


def test_criterion_06_mesh_convergence_of_estimators():
    with _Clock("criterion 6: estimator mesh convergence (n=1e5, h=1/512)", 300):
        cfg = diffusion_feedback()
        assert cfg.n_fine == 512
        reg = diffusion_regime()
        cf = closed_form_linear_gaussian(cfg, reg, NU)
        ds = simulate_linear_gaussian_diffusion(cfg, 100_000, seed=404)
        upd = cfg.update_grid_points
        errors = {}
        for k in (2, 64):
            part = Partition(tuple(upd[:: 64 // k]))
            view = PartitionView(ds, part)
            prop = fit_propensity(view, family="gaussian")
            h = fit_h_process(ds, part, reg, LeastSquaresBasis(FeatureSpec("poly", degree=2)), NU)
            r = dr_estimate(ds, part, h, ModelQProcess(reg, prop), reg, NU)
            errors[k] = (abs(r.estimate - cf), r.se)
        assert errors[64][0] < errors[2][0]
        assert errors[64][0] <= 3.0 * errors[64][1]


def test_criterion_07_discrete_equivalence():
    with _Clock("criterion 7: discrete equivalence", 10):
        sc = StudyConfig(kind="equivalence", instance="two_visit_feedback",
                         regime="two_visit_always", n=20_000, seed=505)
        rep = run_study(sc)
        assert rep.all_passed
        for r in rep.rows:
            assert r["abs_error"] <= 1e-12


def test_criterion_08_martingale_checks():
    with _Clock("criterion 8: martingale checks", 10):
        h = exact_g_process(M_OBS, REG, NU, CFG)
        q = exact_q_process(M_OBS, M_INT)
        assert max_martingale_gap(M_INT, h, nu_terminal=True) <= 1e-12
        assert max_martingale_gap(M_OBS, q) <= 1e-12
        ds = simulate_discrete_regular(CFG, 100_000, seed=606)
        r = ipw_estimate(ds, PART, REG, DiscreteTruePropensity(CFG), None,
                         terminal_outcome())
        mean_w = r.extras["mean_terminal_weight"]
        # SE of the terminal weight mean, conservative plug-in
        view = PartitionView(ds, PART)
        term = ModelQProcess(REG, DiscreteTruePropensity(CFG)).terminal_batch(view)
        se_w = term.std() / math.sqrt(ds.n)
        assert abs(mean_w - 1.0) <= 3.0 * se_w


def test_criterion_09_censoring_recovery():
    with _Clock("criterion 9: censoring recovery", 300):
        sc = StudyConfig(kind="censoring_recovery", instance="survival_feedback",
                         regime="mostly_treat", target="survival:6",
                         n=100_000, seed=707, options={"truth_n": 200_000})
        rep = run_study(sc)
        assert rep.all_passed, rep.failed_rows()
        frac = [r for r in rep.rows if r["tag"] == "censoring_fraction"][0]["estimate"]
        assert 0.1 <= frac <= 0.35


def test_criterion_10_determinism(tmp_path):
    with _Clock("criterion 10: bitwise determinism from manifest", 120):
        from funlong.cli import main

        cfg = tmp_path / "study.cfg"
        cfg.write_text("""
[run]
kind = study
[study.grid]
study_kind = dr_grid
instance = two_visit_feedback
regime = two_visit_always
n = 30000
replicates = 3
seed = 808
option.n_boot = 50
[study.ee]
study_kind = ee_unbiasedness
instance = two_visit_feedback
regime = two_visit_always
n = 20000
seed = 808
""")
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["study", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["study", "--config", str(out1 / "resolved.cfg"),
                     "--out", str(out2)]) == 0
        for sub in ("grid", "ee"):
            a = (out1 / sub / "report.csv").read_bytes()
            b = (out2 / sub / "report.csv").read_bytes()
            assert a == b, f"{sub} report differs between runs"
        ds1 = simulate_discrete_regular(CFG, 2000, seed=4242)
        ds2 = simulate_discrete_regular(CFG, 2000, seed=4242)
        assert np.array_equal(ds1.a, ds2.a) and np.array_equal(ds1.l, ds2.l)
