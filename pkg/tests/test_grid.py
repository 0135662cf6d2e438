import pytest
from hypothesis import given, strategies as st

from funlong.core.errors import InvalidArgumentError, UnsupportedOperationError
from funlong.core.grid import Partition, make_infinite_partition, make_uniform_partition, mesh, refine


def test_uniform_basic():
    p = make_uniform_partition(1, 1.0)
    assert p.points == (0.0, 1.0)
    assert mesh(p) == 1.0


def test_uniform_k4_tau2():
    p = make_uniform_partition(4, 2.0)
    assert p.points == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert mesh(p) == 0.5


def test_uniform_k3_mesh():
    assert mesh(make_uniform_partition(3, 1.0)) == pytest.approx(1.0 / 3.0, abs=1e-15)


@pytest.mark.parametrize("k,tau", [(0, 1.0), (-1, 1.0), (2, 0.0), (2, -3.0)])
def test_uniform_invalid(k, tau):
    with pytest.raises(InvalidArgumentError):
        make_uniform_partition(k, tau)


def test_infinite_mesh_rule():
    p = make_infinite_partition((0.0, 1.0, 3.0))
    assert p.horizon_kind == "infinite"
    assert mesh(p) == 2.0


def test_infinite_mesh_small_tail():
    assert mesh(make_infinite_partition((0.0, 10.0))) == 10.0


def test_infinite_mesh_geometric():
    p = make_infinite_partition((0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0))
    assert mesh(p) == 8.0


def test_infinite_unordered_rejected():
    with pytest.raises(InvalidArgumentError):
        make_infinite_partition((0.0, 3.0, 1.0))


def test_mesh_irregular():
    assert mesh(Partition((0.0, 0.2, 1.0))) == pytest.approx(0.8)


def test_mesh_uniform_10():
    assert mesh(make_uniform_partition(10, 1.0)) == pytest.approx(0.1)


def test_refine_unit():
    assert refine(Partition((0.0, 1.0)), 2).points == (0.0, 0.5, 1.0)


def test_refine_keeps_points():
    p = Partition((0.0, 0.5, 1.0))
    assert refine(p, 2).points == (0.0, 0.25, 0.5, 0.75, 1.0)


def test_refine_mesh_division():
    p = refine(make_uniform_partition(2, 2.0), 3)
    assert mesh(p) == pytest.approx(1.0 / 3.0)


def test_refine_infinite_requires_flag():
    p = make_infinite_partition((0.0, 1.0, 2.0))
    with pytest.raises(UnsupportedOperationError):
        refine(p, 2)
    r = refine(p, 2, finite_prefix=True)
    assert r.is_infinite
    assert r.finite_points == (0.0, 0.5, 1.0, 1.5, 2.0)


@given(st.integers(1, 6), st.integers(1, 5),
       st.floats(0.25, 8.0, allow_nan=False, allow_infinity=False))
def test_refine_properties(k, factor, tau):
    p = make_uniform_partition(k, tau)
    r = refine(p, factor)
    assert r.contains_points_of(p)
    assert mesh(r) <= mesh(p) + 1e-12


@given(st.lists(st.floats(0.01, 5.0), min_size=1, max_size=8))
def test_partition_from_gaps_mesh_is_max_gap(gaps):
    pts = [0.0]
    for g in gaps:
        pts.append(pts[-1] + g)
    p = Partition(tuple(pts))
    assert mesh(p) == pytest.approx(max(gaps), rel=1e-12)


def test_partition_requires_zero_start():
    with pytest.raises(InvalidArgumentError):
        Partition((0.5, 1.0))
