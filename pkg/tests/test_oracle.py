import math

import numpy as np
import pytest

from funlong.core.errors import PositivityError, TooLargeError
from funlong.core.regimes import PointMassRegime, bernoulli_regime, contrast
from funlong.core.targets import constant_target, terminal_outcome
from funlong.dgp import DiscreteRegularConfig, StepSpec
from funlong.dgp.instances import (
    coin_flip,
    coin_flip_regime,
    ctmc_all_on_regime,
    ctmc_slow_feedback,
    small_censored,
    two_visit_always_treat,
    two_visit_feedback,
    two_visit_never_treat,
    two_visit_null_effect,
)
from funlong.oracle.ctmc_exact import (
    exact_h_grid,
    grid_propensity,
    intervened_terminal_mean,
    projected_intervened_measure,
)
from funlong.oracle.measure import (
    PATH_CAP,
    enumerate_intervened_measure,
    enumerate_observational_measure,
    exact_target,
    measure_to_dataset,
    tv_distance,
)
from funlong.oracle.processes import exact_g_process, exact_q_process, max_martingale_gap

NU = terminal_outcome()


def _single_binary_treatment(p1=0.3):
    return DiscreteRegularConfig(
        n_steps=1,
        treatment=(StepSpec(coefs={"intercept": p1}), StepSpec(kind="carry")),
        confounder=(StepSpec(kind="point", value=0.0), StepSpec(kind="carry")),
    )


def test_single_treatment_table():
    m = enumerate_observational_measure(_single_binary_treatment())
    probs = {tuple(m.a_seq[p]): m.weights[p] for p in range(m.n_paths)}
    assert probs[(1.0, 1.0)] == pytest.approx(0.3)
    assert probs[(0.0, 0.0)] == pytest.approx(0.7)


def test_two_visit_sixteen_paths_sum_one():
    m = enumerate_observational_measure(two_visit_feedback())
    assert m.n_paths == 16
    assert abs(m.total_mass - 1.0) <= 1e-12
    assert m.is_probability


def test_coin_flip_all_paths_equal():
    m = enumerate_observational_measure(coin_flip())
    assert np.allclose(m.weights, m.weights[0])


def test_intervened_equals_observational_under_own_propensity():
    cfg = coin_flip()
    m_obs = enumerate_observational_measure(cfg)
    m_int = enumerate_intervened_measure(cfg, coin_flip_regime())
    assert tv_distance(m_obs, m_int) <= 1e-14


def test_point_mass_support_restriction():
    cfg = two_visit_feedback()
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    assert np.all(m_int.a_seq[:, 1:] == 1.0)
    assert abs(m_int.total_mass - 1.0) <= 1e-12


def test_contrast_measure_mass_zero_and_linearity():
    cfg = two_visit_feedback()
    c = contrast(two_visit_always_treat(), two_visit_never_treat())
    mc = enumerate_intervened_measure(cfg, c)
    assert abs(mc.total_mass) <= 1e-12
    t_plus = exact_target(enumerate_intervened_measure(cfg, two_visit_always_treat()), NU)
    t_minus = exact_target(enumerate_intervened_measure(cfg, two_visit_never_treat()), NU)
    assert exact_target(mc, NU) == pytest.approx(t_plus - t_minus, abs=1e-12)
    assert exact_target(mc, constant_target(1.0)) == pytest.approx(0.0, abs=1e-12)


def test_tv_distance_basics():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    assert tv_distance(m, m) == 0.0
    m1 = enumerate_intervened_measure(cfg, two_visit_always_treat())
    m2 = enumerate_intervened_measure(cfg, two_visit_never_treat())
    assert tv_distance(m1, m2) == pytest.approx(1.0, abs=1e-12)


def test_exact_target_normalization():
    cfg = two_visit_feedback()
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    assert exact_target(m_int, constant_target(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_two_visit_always_treat_target_frozen_value():
    # confirmed by running the enumeration: 0.5*(0.2+0.5+0.2*0) + 0.5*(0.2+0.5+0.2*1)
    cfg = two_visit_feedback()
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    assert exact_target(m_int, NU) == pytest.approx(0.8, abs=1e-12)


def test_path_cap_enforced():
    cfg = coin_flip(n_steps=12)
    with pytest.raises(TooLargeError):
        enumerate_observational_measure(cfg, path_cap=1000)
    assert PATH_CAP == 1_000_000


# ------------------------------------------------------------------ processes


def test_g_process_terminal_rows_equal_nu():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    table = exact_g_process(m, two_visit_always_treat(), NU, cfg)
    nu_vals = NU.evaluate_batch(measure_to_dataset(m))
    for p in range(m.n_paths):
        assert table.terminal[m.path_key(p)] == pytest.approx(nu_vals[p], abs=1e-14)


def test_g_process_initial_equals_exact_target():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    table = exact_g_process(m, two_visit_always_treat(), NU, cfg)
    assert abs(table.initial - exact_target(m_int, NU)) <= 1e-12


def test_g_process_null_effect_ignores_treatment():
    cfg = two_visit_null_effect()
    m = enumerate_observational_measure(cfg)
    table = exact_g_process(m, two_visit_always_treat(), NU, cfg)
    for j, row in table.rows.items():
        by_rest = {}
        for (a_t, l_t, st), v in row.items():
            by_rest.setdefault((l_t, st), []).append(v)
        for vals in by_rest.values():
            assert max(vals) - min(vals) <= 1e-12


def test_q_process_boundaries_and_ratio():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    q = exact_q_process(m, m_int)
    assert q.initial == pytest.approx(1.0, abs=1e-12)
    for p in range(m.n_paths):
        a, l = m.a_seq[p], m.l_seq[p]
        expected = 0.0
        if a[1] == 1.0 and a[2] == 1.0:
            p1 = 0.3 + 0.4 * l[0]
            p2 = 0.2 + 0.3 * a[1] + 0.3 * l[1]
            expected = 1.0 / (p1 * p2)
        assert q.terminal[m.path_key(p)] == pytest.approx(expected, abs=1e-12)


def test_q_process_identity_regime_is_one():
    cfg = coin_flip()
    m = enumerate_observational_measure(cfg)
    m_int = enumerate_intervened_measure(cfg, coin_flip_regime())
    q = exact_q_process(m, m_int)
    for row in q.rows.values():
        for v in row.values():
            assert v == pytest.approx(1.0, abs=1e-12)


def test_martingale_telescoping_exact():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    h = exact_g_process(m, two_visit_always_treat(), NU, cfg)
    q = exact_q_process(m, m_int)
    assert max_martingale_gap(m_int, h, nu_terminal=True) <= 1e-12
    assert max_martingale_gap(m, q) <= 1e-12


def test_ipw_identity_on_table():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    m_int = enumerate_intervened_measure(cfg, two_visit_always_treat())
    q = exact_q_process(m, m_int)
    nu_vals = NU.evaluate_batch(measure_to_dataset(m))
    acc = math.fsum(q.terminal[m.path_key(p)] * nu_vals[p] * m.weights[p]
                    for p in range(m.n_paths))
    assert acc == pytest.approx(exact_target(m_int, NU), abs=1e-12)


def test_positivity_violation_detected():
    cfg = two_visit_feedback()
    m = enumerate_observational_measure(cfg)
    bad_regime = PointMassRegime((1.0, 1.0, 1.0))  # index 0 is a null slot (always 0)
    with pytest.raises(PositivityError) as err:
        exact_g_process(m, bad_regime, NU, cfg)
    assert err.value.index == 0


def test_censored_enumeration_masses():
    cfg = small_censored()
    m = enumerate_observational_measure(cfg)
    assert abs(m.total_mass - 1.0) <= 1e-12
    mi = enumerate_intervened_measure(cfg, bernoulli_regime(lambda j, h: 0.6))
    assert abs(mi.total_mass - 1.0) <= 1e-12
    assert np.all(mi.delta[mi.x_idx >= 0] == 1)  # censored branches zeroed


# ------------------------------------------------------------------ chain oracle


def test_ctmc_tv_ladder_decreasing():
    cfg = ctmc_slow_feedback()
    reg = ctmc_all_on_regime()
    tvs = []
    for k in (2, 4, 8, 16, 32):
        m1 = projected_intervened_measure(cfg, reg, k)
        m2 = projected_intervened_measure(cfg, reg, 2 * k)
        tvs.append(tv_distance(m1, m2))
    assert all(b < a for a, b in zip(tvs, tvs[1:]))
    assert tvs[-1] < 1e-3


def test_ctmc_projection_is_probability():
    cfg = ctmc_slow_feedback()
    m = projected_intervened_measure(cfg, ctmc_all_on_regime(), 4)
    assert abs(m.total_mass - 1.0) <= 1e-10


def test_ctmc_h_grid_consistent_at_fine_resolution():
    cfg = ctmc_slow_feedback()
    reg = ctmc_all_on_regime()
    _, tgt = exact_h_grid(cfg, reg, cfg.n_fine)
    assert tgt == pytest.approx(intervened_terminal_mean(cfg, reg, cfg.n_fine), abs=1e-12)


def test_ctmc_grid_propensity_rows_normalize():
    prop = grid_propensity(ctmc_slow_feedback(), 8)
    assert np.allclose(prop.sum(axis=2), 1.0, atol=1e-12)
