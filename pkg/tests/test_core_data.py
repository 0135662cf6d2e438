import math

import numpy as np
import pytest

from funlong.core.data import Dataset, Trajectory, history_prefix
from funlong.core.errors import InvalidArgumentError
from funlong.core.grid import Partition, make_infinite_partition
from funlong.core.regimes import (
    DiscreteRegime,
    GaussianRegime,
    PointMassRegime,
    bernoulli_regime,
    check_normalization,
    contrast,
    expect_over_regime,
)
from funlong.core.targets import constant_target, outcome_at_if_alive, survival_beyond, terminal_outcome
from funlong.dgp.events import offset_after


def _traj(a=(0.0, 1.0, 1.0), l=(1.0, 0.0, 0.0), x=math.inf, delta=1):
    grid = Partition((0.0, 1.0, 2.0))
    return Trajectory(grid=grid, a_path=np.array(a), l_path=np.array(l)[:, None],
                      y_indices=(0,), event_time=x, event_indicator=delta)


def test_g_prefix_at_zero_exposes_treatment_only():
    pre = history_prefix(_traj(), 0, "G")
    assert pre.a_values().tolist() == [0.0]
    assert pre.l_values().shape[0] == 0
    with pytest.raises(IndexError):
        pre.l(0)


def test_f_prefix_at_terminal_is_full_data():
    pre = history_prefix(_traj(), 2, "F")
    assert pre.a_values().tolist() == [0.0, 1.0, 1.0]
    assert pre.l_values()[:, 0].tolist() == [1.0, 0.0, 0.0]


def test_g_hides_current_confounder():
    g = history_prefix(_traj(), 2, "G")
    f = history_prefix(_traj(), 2, "F")
    assert g.l_values().shape[0] == 2
    assert f.l_values().shape[0] == 3
    with pytest.raises(IndexError):
        g.l(2)


def test_prefix_rejects_out_of_range():
    with pytest.raises(InvalidArgumentError):
        history_prefix(_traj(), 5, "G")


def test_offset_convention_exact():
    # death recorded at t=1: treatment keeps its t=1 draw, confounder freezes
    # strictly before the event index, and both stay constant afterwards
    times = np.array([0.0, 1.0, 2.0, 3.0])
    a = np.array([[0.0, 1.0, 0.0, 1.0]])
    l = np.array([[5.0, 6.0, 7.0, 8.0]])[:, :, None]
    a_off, l_off = offset_after(a, l, times, np.array([1.0]))
    assert a_off[0].tolist() == [0.0, 1.0, 1.0, 1.0]
    assert l_off[0, :, 0].tolist() == [5.0, 5.0, 5.0, 5.0]


def test_step_interpolation_reads_last_value():
    tr = _traj()
    assert tr.a_at(1.5) == 1.0
    assert tr.l_at(0.99)[0] == 1.0
    assert tr.y_at(2.0)[0] == 0.0


def test_dataset_weights_normalize():
    ds = Dataset(grid=Partition((0.0, 1.0)), a=np.zeros((3, 2)), l=np.zeros((3, 2, 1)),
                 y_indices=(0,), weights=np.array([1.0, 1.0, 2.0]))
    assert ds.norm_weights().sum() == pytest.approx(1.0)


def test_infinite_partition_prefix_reads_end_of_grid():
    tr = _traj()
    part = make_infinite_partition((0.0, 1.0, 2.0))
    pre = history_prefix(tr, 3, "G", partition=part)
    assert pre.a_values().tolist() == [0.0, 1.0, 1.0, 1.0]


# ------------------------------------------------------------------ regimes


def test_point_mass_weight_is_indicator():
    reg = PointMassRegime((0.0, 1.0, 1.0))
    hist = np.zeros((4, 1))
    w = reg.weight(1, np.array([1.0, 0.0, 1.0, 0.5]), hist)
    assert w.tolist() == [1.0, 0.0, 1.0, 0.0]


def test_discrete_regime_normalization_thousand_histories():
    reg = bernoulli_regime(lambda j, a_hist: 0.2 + 0.1 * (a_hist[:, -1] if a_hist.shape[1] else 0.0))
    rng = np.random.default_rng(0)
    hist = rng.integers(0, 2, size=(1000, 3)).astype(float)
    assert check_normalization(reg, 3, hist) <= 1e-12


def test_gaussian_regime_weight_integrates_to_one():
    reg = GaussianRegime(0.3, 0.5, 0.7)
    hist = np.array([[0.2], [1.0]])
    grid = np.linspace(-8, 8, 20001)
    for row in range(2):
        dens = reg.weight(1, grid, np.repeat(hist[row][None, :], len(grid), axis=0))
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


def test_contrast_total_mass_zero():
    c = contrast(PointMassRegime((1.0,)), PointMassRegime((0.0,)))
    assert c.total_mass == 0.0


def test_expect_over_regime_gaussian_matches_moments():
    reg = GaussianRegime(0.4, 0.0, 0.5)
    hist = np.zeros((3, 0))
    val = expect_over_regime(reg, 0, hist, lambda a: a ** 2)
    assert val == pytest.approx(0.4 ** 2 + 0.5 ** 2, abs=1e-10)


# ------------------------------------------------------------------ targets


def test_targets_deterministic_and_correct():
    tr = _traj(x=1.0, delta=1)
    assert terminal_outcome().evaluate(tr) == 0.0
    assert survival_beyond(0.5).evaluate(tr) == 1.0
    assert survival_beyond(1.0).evaluate(tr) == 0.0
    assert constant_target(3.5).evaluate(tr) == 3.5
    assert outcome_at_if_alive(0.5).evaluate(tr) == 1.0
    assert outcome_at_if_alive(1.5).evaluate(tr) == 0.0
    # determinism: same trajectory, same value
    assert terminal_outcome().evaluate(tr) == terminal_outcome().evaluate(tr)


def test_target_batch_matches_scalar():
    grid = Partition((0.0, 1.0, 2.0))
    rng = np.random.default_rng(3)
    a = rng.integers(0, 2, (50, 3)).astype(float)
    l = rng.integers(0, 2, (50, 3, 1)).astype(float)
    x = np.where(rng.random(50) < 0.3, 1.0, math.inf)
    ds = Dataset(grid=grid, a=a, l=l, y_indices=(0,), x=x,
                 delta=np.ones(50, dtype=np.int8))
    for nu in (terminal_outcome(), survival_beyond(1.0), outcome_at_if_alive(1.0)):
        batch = nu.evaluate_batch(ds)
        scalar = np.array([nu.evaluate(ds.trajectory(i)) for i in range(50)])
        assert np.allclose(batch, scalar)
