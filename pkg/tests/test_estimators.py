import math

import numpy as np
import pytest

from funlong.core.errors import PositivityError
from funlong.core.grid import Partition, make_infinite_partition
from funlong.core.processes import ConstantProcess, FunctionProcess
from funlong.core.regimes import PointMassRegime, bernoulli_regime
from funlong.core.targets import constant_target, survival_beyond, terminal_outcome
from funlong.core.view import PartitionView
from funlong.dgp import simulate_discrete_regular, simulate_linear_gaussian_diffusion
from funlong.dgp.instances import (
    coin_flip,
    coin_flip_regime,
    diffusion_feedback,
    diffusion_regime,
    logistic_design,
    mostly_treat,
    small_censored,
    survival_feedback,
    two_visit_always_treat,
    two_visit_feedback,
)
from funlong.dgp.interventional import simulate_interventional, simulate_observational
from funlong.estimators import (
    DiscreteTrueCensoring,
    DiscreteTruePropensity,
    ExactFiniteState,
    FeatureSpec,
    LeastSquaresBasis,
    ModelQProcess,
    dr_estimate,
    fit_censoring,
    fit_h_process,
    fit_propensity,
    gcomp_estimate,
    ipw_estimate,
    ipw_weight_path,
    xi_out,
    xi_trt,
)
from funlong.oracle.measure import (
    enumerate_intervened_measure,
    enumerate_observational_measure,
    exact_target,
    measure_to_dataset,
)
from funlong.oracle.processes import exact_g_process, exact_q_process

NU = terminal_outcome()
CFG = two_visit_feedback()
REG = two_visit_always_treat()
PART = Partition(CFG.grid_points)
M_OBS = enumerate_observational_measure(CFG)
M_INT = enumerate_intervened_measure(CFG, REG)
TARGET = exact_target(M_INT, NU)
H_TRUE = exact_g_process(M_OBS, REG, NU, CFG).as_process()
Q_TRUE = exact_q_process(M_OBS, M_INT).as_process()


# ------------------------------------------------------------------ weights


def test_weights_identity_when_regime_is_propensity():
    cfg = coin_flip()
    ds = simulate_discrete_regular(cfg, 200, seed=1)
    view = PartitionView(ds, ds.grid)
    q = ModelQProcess(coin_flip_regime(), DiscreteTruePropensity(cfg))
    assert np.allclose(q.columns(view), 1.0, atol=1e-12)


def test_weight_path_matches_exact_q():
    ds = simulate_discrete_regular(CFG, 64, seed=5)
    prop = DiscreteTruePropensity(CFG)
    view = PartitionView(ds, PART)
    model_cols = ModelQProcess(REG, prop).columns(view)
    exact_cols = Q_TRUE.columns(view)
    assert np.allclose(model_cols, exact_cols, atol=1e-12)
    # single-subject path including terminal entry
    w = ipw_weight_path(ds.trajectory(0), PART, REG, prop)
    assert np.allclose(w[:-1], model_cols[0]) and w[-1] == pytest.approx(model_cols[0, -1])


def test_weight_of_always_treated_subject():
    ds = simulate_discrete_regular(CFG, 4000, seed=9)
    w = ModelQProcess(REG, DiscreteTruePropensity(CFG)).terminal_batch(PartitionView(ds, PART))
    treated = (ds.a[:, 1] == 1) & (ds.a[:, 2] == 1) & (ds.l[:, 0, 0] == 1)
    if np.any(treated):
        i = int(np.argmax(treated))
        p2 = 0.2 + 0.3 + 0.3 * ds.l[i, 1, 0]
        assert w[i] == pytest.approx(1.0 / (0.7 * p2), abs=1e-12)


def test_censored_subject_terminal_weight_zero():
    cfg = small_censored()
    ds = simulate_observational(cfg, 4000, seed=3)
    q = ModelQProcess(bernoulli_regime(lambda j, h: 0.6), DiscreteTruePropensity(cfg),
                      DiscreteTrueCensoring(cfg))
    term = q.terminal_batch(PartitionView(ds, Partition(cfg.grid_points)))
    censored = np.isfinite(ds.x) & (ds.delta == 0)
    assert np.any(censored)
    assert np.all(term[censored] == 0.0)


def test_positivity_error_names_index():
    ds = simulate_discrete_regular(CFG, 50, seed=2)
    bad = PointMassRegime((1.0, 1.0, 1.0))
    with pytest.raises(PositivityError) as err:
        ipw_estimate(ds, PART, bad, DiscreteTruePropensity(CFG), None, NU)
    assert err.value.index == 0


def test_weight_truncation_flag():
    ds = simulate_discrete_regular(CFG, 5000, seed=4)
    prop = DiscreteTruePropensity(CFG)
    full = ipw_estimate(ds, PART, REG, prop, None, NU)
    trunc = ipw_estimate(ds, PART, REG, prop, None, NU, truncate_quantile=0.8)
    assert trunc.extras["truncate_quantile"] == 0.8
    assert trunc.estimate < full.estimate  # capping positive ratios shrinks it


# ------------------------------------------------------------------ population exactness


def test_population_triple_equals_oracle():
    pop = measure_to_dataset(M_OBS)
    r_i = ipw_estimate(pop, PART, REG, DiscreteTruePropensity(CFG), None, NU)
    r_g = gcomp_estimate(pop, PART, REG, ExactFiniteState(), NU, n_boot=0)
    r_d = dr_estimate(pop, PART, H_TRUE, Q_TRUE, REG, NU)
    for r in (r_i, r_g, r_d):
        assert abs(r.estimate - TARGET) <= 1e-12


def test_gcomp_constant_target_exact():
    ds = simulate_discrete_regular(CFG, 500, seed=6)
    r = gcomp_estimate(ds, PART, REG, ExactFiniteState(), constant_target(2.5), n_boot=0)
    assert r.estimate == pytest.approx(2.5, abs=1e-12)


def test_dr_reductions():
    pop = measure_to_dataset(M_OBS)
    zero_q = ConstantProcess(0.0, label="Q-like")
    r = dr_estimate(pop, PART, H_TRUE, zero_q, REG, NU)
    assert abs(r.estimate - TARGET) <= 1e-12  # anchor-only reduction
    zero_h = ConstantProcess(0.0, label="H-like")
    r2 = dr_estimate(pop, PART, zero_h, Q_TRUE, REG, NU)
    ipw = ipw_estimate(pop, PART, REG, DiscreteTruePropensity(CFG), None, NU)
    assert abs(r2.estimate - ipw.estimate) <= 1e-12  # pure reweighting reduction


def test_dr_internal_identity_gap_small():
    ds = simulate_discrete_regular(CFG, 20_000, seed=8)
    r = dr_estimate(ds, PART, H_TRUE, ModelQProcess(REG, DiscreteTruePropensity(CFG)), REG, NU)
    assert r.extras["identity_gap"] <= 1e-12 * 8


def test_weight_mean_identity():
    ds = simulate_discrete_regular(CFG, 100_000, seed=10)
    r = ipw_estimate(ds, PART, REG, DiscreteTruePropensity(CFG), None, NU)
    mean_w = r.extras["mean_terminal_weight"]
    assert abs(mean_w - 1.0) <= 3 * 0.01


# ------------------------------------------------------------------ sample consistency


def test_sample_estimators_hit_oracle():
    ds = simulate_discrete_regular(CFG, 50_000, seed=12)
    prop = DiscreteTruePropensity(CFG)
    r_i = ipw_estimate(ds, PART, REG, prop, None, NU)
    r_g = gcomp_estimate(ds, PART, REG, ExactFiniteState(), NU, n_boot=100, seed=1)
    r_d = dr_estimate(ds, PART, H_TRUE, ModelQProcess(REG, prop), REG, NU)
    for r in (r_i, r_g, r_d):
        assert abs(r.estimate - TARGET) <= 3.5 * r.se


def test_null_effect_ipw_matches_marginal():
    cfg = coin_flip()
    ds = simulate_discrete_regular(cfg, 50_000, seed=14)
    reg = PointMassRegime((1.0, 1.0, 1.0))
    r = ipw_estimate(ds, ds.grid, reg, DiscreteTruePropensity(cfg), None, NU)
    marginal = float(ds.l[:, -1, 0].mean())
    assert abs(r.estimate - marginal) <= 3.5 * r.se


# ------------------------------------------------------------------ estimating equations


def test_xi_out_zero_q_is_zero():
    ds = simulate_discrete_regular(CFG, 2000, seed=16)
    mean, se = xi_out(ds, PART, H_TRUE, ConstantProcess(0.0, label="Q-like"), REG, NU)
    assert mean == 0.0 and se == 0.0


def test_xi_trt_zero_h_is_zero():
    ds = simulate_discrete_regular(CFG, 2000, seed=17)
    mean, se = xi_trt(ds, PART, ConstantProcess(0.0), Q_TRUE, REG, NU)
    assert abs(mean) <= 1e-15


def test_xi_out_true_h_unbiased_any_q():
    ds = simulate_discrete_regular(CFG, 100_000, seed=18)
    q = FunctionProcess(lambda b: 1.0 + 0.5 * (b.a[:, b.j] - 0.5), label="Q-like")
    mean, se = xi_out(ds, PART, H_TRUE, q, REG, NU)
    assert abs(mean) <= 3.5 * se


def test_xi_trt_true_q_unbiased_any_h():
    ds = simulate_discrete_regular(CFG, 100_000, seed=19)
    h = FunctionProcess(lambda b: 0.3 + 0.2 * b.a[:, b.j], label="H-like")
    mean, se = xi_trt(ds, PART, h, Q_TRUE, REG, NU)
    assert abs(mean) <= 3.5 * se


def test_ee_characterization_population():
    # only the true g-computation process zeroes the outcome residual
    # against the full spanning set of history indicators
    from funlong.core.processes import PerturbedProcess

    pop = measure_to_dataset(M_OBS)
    detectors = []
    for j in range(PART.n_intervals + 1):
        for code in range(8):
            def det(b, j=j, code=code):
                if b.j != j:
                    return np.zeros(b.n)
                bits = [(code >> i) & 1 for i in range(3)]
                out = np.ones(b.n)
                out *= (b.a[:, b.j] == bits[0])
                if b.j >= 1:
                    out *= (b.a[:, b.j - 1] == bits[1])
                    out *= (b.l[:, b.j - 1, 0] == bits[2])
                return out
            detectors.append(FunctionProcess(det, label="Q-like"))

    def worst(h):
        vals = []
        for q in detectors:
            mean, _ = xi_out(pop, PART, h, q, REG, NU)
            vals.append(abs(mean))
        return max(vals)

    assert worst(H_TRUE) <= 1e-12
    up = PerturbedProcess(H_TRUE, at=1, where=lambda b: (b.a[:, 1] == 1.0) & (b.l[:, 0, 0] == 1.0), bump=0.5)
    down = PerturbedProcess(H_TRUE, at=2, where=lambda b: b.a[:, 2] == 1.0, bump=-0.3)
    assert worst(up) > 1e-3
    assert worst(down) > 1e-3


# ------------------------------------------------------------------ nuisance fits


def test_logistic_propensity_recovery():
    cfg = logistic_design()
    ds = simulate_discrete_regular(cfg, 100_000, seed=20)
    prop = fit_propensity(PartitionView(ds, ds.grid), family="logistic")
    beta = prop.fits[2].beta  # (intercept, a_prev, l_prev)
    assert abs(beta[0] + 0.4) <= 0.05
    assert abs(beta[1] - 0.6) <= 0.05
    assert abs(beta[2] - 0.8) <= 0.05


def test_constant_treatment_flagged_degenerate():
    ds = simulate_discrete_regular(CFG, 500, seed=21)
    prop = fit_propensity(PartitionView(ds, PART), family="tabular")
    assert 0 in prop.flags["degenerate_indices"]  # index-0 null slot


def test_misspecified_mode_drops_confounders():
    ds = simulate_discrete_regular(CFG, 20_000, seed=22)
    prop = fit_propensity(PartitionView(ds, PART), family="tabular", include_l=False)
    assert prop.mode == "misspecified"
    batch = PartitionView(ds, PART).g_batch(1)
    dens = prop.density_batch(batch)
    same_a = batch.a[:, 1] == 1.0
    assert np.allclose(dens[same_a], dens[same_a][0])  # no l variation left


def test_gaussian_propensity_recovery():
    cfg = diffusion_feedback()
    ds = simulate_linear_gaussian_diffusion(cfg, 50_000, seed=23)
    part = Partition(cfg.update_grid_points)
    prop = fit_propensity(PartitionView(ds, part), family="gaussian")
    from funlong.estimators.nuisance import DiffusionGridPropensity

    truth = DiffusionGridPropensity(cfg, part.points)
    beta = prop.fits[32].beta
    assert abs(beta[0] - truth.mean_const) <= 0.05
    assert abs(beta[1] - truth.mean_aprev) <= 0.05
    assert abs(beta[2] - truth.mean_lprev) <= 0.05
    assert abs(prop.fits[32].sd - math.sqrt(truth.var)) <= 0.02


def test_censoring_fit_trivial_without_events():
    ds = simulate_discrete_regular(CFG, 2000, seed=24)
    model = fit_censoring(PartitionView(ds, PART))
    assert "note" in model.flags


def test_censoring_fit_recovers_constant_hazard():
    cfg = survival_feedback(l_dependent_censoring=False)
    ds = simulate_observational(cfg, 100_000, seed=25)
    part = Partition(cfg.grid_points)
    model = fit_censoring(PartitionView(ds, part), include_l=True)
    batch = PartitionView(ds, part).g_batch(3)
    surv = model.step_survival_batch(batch)
    at_risk = ~(batch.dead_prev | batch.cens_prev)
    assert np.all(np.abs((1.0 - surv[at_risk]) - 0.07) <= 0.01)


def test_censoring_fit_recovers_l_coefficient():
    cfg = survival_feedback(l_dependent_censoring=True)
    ds = simulate_observational(cfg, 100_000, seed=26)
    part = Partition(cfg.grid_points)
    model = fit_censoring(PartitionView(ds, part), include_l=True)
    view = PartitionView(ds, part)
    batch = view.g_batch(4)
    surv = model.step_survival_batch(batch)
    haz = 1.0 - surv
    at_risk = view.at_risk(3)
    l_prev = batch.l[:, 3, 0]
    h1 = haz[at_risk & (l_prev == 1)].mean()
    h0 = haz[at_risk & (l_prev == 0)].mean()
    assert abs((h1 - h0) - 0.15) <= 0.05


# ------------------------------------------------------------------ censored estimation


def test_censored_population_exactness():
    cfg = small_censored()
    reg = bernoulli_regime(lambda j, h: 0.6)
    nu = survival_beyond(2.0)
    m = enumerate_observational_measure(cfg)
    mi = enumerate_intervened_measure(cfg, reg)
    target = exact_target(mi, nu)
    pop = measure_to_dataset(m)
    part = Partition(cfg.grid_points)
    prop = DiscreteTruePropensity(cfg)
    cens = DiscreteTrueCensoring(cfg)
    r_i = ipw_estimate(pop, part, reg, prop, cens, nu)
    r_g = gcomp_estimate(pop, part, reg, ExactFiniteState(), nu, censored=True, n_boot=0)
    h = fit_h_process(pop, part, reg, ExactFiniteState(), nu, censored=True)
    r_d = dr_estimate(pop, part, h, ModelQProcess(reg, prop, cens), reg, nu)
    for r in (r_i, r_g, r_d):
        assert abs(r.estimate - target) <= 1e-12


def test_censored_sample_recovery_infinite_partition():
    cfg = survival_feedback()
    reg = mostly_treat()
    nu = survival_beyond(6.0)
    truth_ds = simulate_interventional(cfg, reg, 100_000, seed=27)
    truth = float(nu.evaluate_batch(truth_ds).mean())
    ds = simulate_observational(cfg, 60_000, seed=28)
    part = make_infinite_partition(cfg.grid_points)
    prop = DiscreteTruePropensity(cfg)
    cens = DiscreteTrueCensoring(cfg)
    h = fit_h_process(ds, part, reg, ExactFiniteState(), nu, censored=True)
    r = dr_estimate(ds, part, h, ModelQProcess(reg, prop, cens), reg, nu)
    assert abs(r.estimate - truth) <= 3.5 * math.sqrt(r.se ** 2 + 2.6e-6)


# ------------------------------------------------------------------ diffusion estimation


def test_diffusion_sample_vs_closed_form():
    from funlong.oracle.linear_gaussian import DiffusionExactH, closed_form_linear_gaussian

    cfg = diffusion_feedback()
    reg = diffusion_regime()
    cf = closed_form_linear_gaussian(cfg, reg, NU)
    dsi = simulate_interventional(cfg, reg, 20_000, seed=29)
    mc = NU.evaluate_batch(dsi)
    assert abs(mc.mean() - cf) <= 3.5 * mc.std() / math.sqrt(len(mc))

    ds = simulate_linear_gaussian_diffusion(cfg, 20_000, seed=30)
    part = Partition(cfg.update_grid_points)
    from funlong.estimators.nuisance import DiffusionGridPropensity

    prop = DiffusionGridPropensity(cfg, part.points)
    r = ipw_estimate(ds, part, reg, prop, None, NU)
    assert abs(r.estimate - cf) <= 3.5 * r.se
    h = DiffusionExactH(cfg, reg)
    r_d = dr_estimate(ds, part, h, ModelQProcess(reg, prop), reg, NU)
    grid_target = float(h.coefs[0, 0] + h.coefs[0, 1] * reg.intercept)
    assert abs(r_d.estimate - grid_target) <= 3.5 * r_d.se
