import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadenv import (
    Card,
    DivergenceError,
    IndicatorPK,
    InvalidArgumentError,
    L1,
    QuadEnvCard,
    QuadEnvPK,
    SensingMatrix,
    SolverConfig,
    default_step_size,
    fbs_solve,
    generate_sensing_matrix,
    make_instance,
    objective_value,
    shadow_point,
)
from quadenv.solver import SUPPORT_THRESHOLD

from oracles import exhaustive_card_minimum

ALL_KINDS = [L1(0.3), Card(1.0), IndicatorPK(3), QuadEnvCard(1.0), QuadEnvPK(3)]


def test_identity_example():
    res = fbs_solve(np.eye(2), np.array([2.0, 0.3]), QuadEnvCard(1.0))
    np.testing.assert_allclose(res.x_final, [2.0, 0.0], atol=1e-9)
    assert res.converged
    np.testing.assert_array_equal(res.support, [0])


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_zero_data_stops_after_one_iteration(kind):
    A = generate_sensing_matrix(6, 9, 0)
    res = fbs_solve(A, np.zeros(6), kind)
    assert not res.x_final.any()
    assert res.iterations_used == 1 and res.converged


@pytest.mark.parametrize("scale, expected", [(1.0, 0.45), (2.0, 0.1125), (0.5, 0.45)])
def test_default_step(scale, expected):
    assert default_step_size(scale * np.eye(3)) == pytest.approx(expected, rel=1e-12)


def test_default_step_on_generated_matrix():
    A = generate_sensing_matrix(100, 200, 0)
    t = default_step_size(A)
    assert 0 < t <= 0.45
    assert 2 * t * A.op_norm ** 2 <= 0.9 + 1e-12


def test_default_step_of_zero_matrix():
    assert default_step_size(np.zeros((2, 3))) == 0.45


def test_objective_examples():
    A = generate_sensing_matrix(5, 7, 1)
    b = np.arange(5.0)
    for kind in ALL_KINDS:
        assert objective_value(A.entries, b, kind, np.zeros(7)) == pytest.approx(b @ b)
    assert objective_value(np.eye(3), np.zeros(3), IndicatorPK(1), np.ones(3)) == math.inf
    assert objective_value(np.eye(1), np.array([2.0]), QuadEnvCard(1.0), np.array([2.0])) == 1.0


@pytest.mark.parametrize("step", [0.5, 0.6])
def test_envelope_steps_must_stay_below_half(step):
    with pytest.raises(InvalidArgumentError):
        fbs_solve(np.eye(2), np.ones(2), QuadEnvCard(1.0), SolverConfig(step=step))


@pytest.mark.parametrize("kwargs", [
    {"step": -1.0}, {"step": "big"}, {"max_iter": 0}, {"max_iter": 2.5}, {"stop_tol": -1.0},
    {"start": "random"},
])
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        SolverConfig(**kwargs)


def test_divergence_is_reported_with_trace():
    A = generate_sensing_matrix(8, 10, 0)
    with pytest.raises(DivergenceError) as info:
        fbs_solve(A, np.ones(8), L1(0.1), SolverConfig(step=10.0, max_iter=5000))
    assert len(info.value.trace) > 2
    assert not math.isfinite(info.value.trace[-1])


def test_start_options():
    inst = make_instance(20, 40, 3, 0.1, 0)
    ls = fbs_solve(inst.A, inst.b, QuadEnvCard(1.0), SolverConfig(start="lstsq", max_iter=1))
    x_ls = np.linalg.lstsq(inst.A.entries, inst.b, rcond=None)[0]
    assert ls.objective_trace[0] == pytest.approx(
        objective_value(inst.A.entries, inst.b, QuadEnvCard(1.0), x_ls))
    given_start = fbs_solve(inst.A, inst.b, QuadEnvCard(1.0), SolverConfig(start=inst.x0))
    assert given_start.objective_trace[0] == pytest.approx(
        objective_value(inst.A.entries, inst.b, QuadEnvCard(1.0), inst.x0))
    with pytest.raises(InvalidArgumentError):
        fbs_solve(inst.A, inst.b, QuadEnvCard(1.0), SolverConfig(start=np.ones(3)))


def test_max_iter_is_honoured():
    inst = make_instance(30, 60, 5, 1.0, 3)
    res = fbs_solve(inst.A, inst.b, L1(0.01), SolverConfig(max_iter=7))
    assert res.iterations_used == 7 and not res.converged
    assert res.objective_trace.size == 8


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: type(k).__name__)
def test_descent(seed, kind):
    inst = make_instance(25, 50, 3, 0.5, seed)
    res = fbs_solve(inst.A, inst.b, kind, SolverConfig(max_iter=400))
    assert np.all(np.diff(res.objective_trace[1:]) <= 1e-9)
    if math.isfinite(res.objective_trace[0]):
        assert res.objective_trace[1] <= res.objective_trace[0] + 1e-9


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", [QuadEnvCard(1.0), QuadEnvPK(3)], ids=["qcard", "qpk"])
def test_exit_stationarity(seed, kind):
    inst = make_instance(25, 50, 3, 0.5, seed)
    res = fbs_solve(inst.A, inst.b, kind)
    assert res.converged and res.residual_kind == "subgradient"
    assert res.stationarity_residual <= 1e-6 * (1 + res.shadow_norm)
    z = shadow_point(inst.A.entries, inst.b, res.x_final)
    assert res.shadow_norm == pytest.approx(np.linalg.norm(z))


def test_fixed_point_residual_for_nonenvelope_kinds():
    inst = make_instance(25, 50, 3, 0.5, 0)
    for kind in (L1(0.3), Card(1.0), IndicatorPK(3)):
        res = fbs_solve(inst.A, inst.b, kind)
        assert res.residual_kind == "fixed-point"
        assert res.stationarity_residual <= 1e-8


def test_support_threshold():
    assert SUPPORT_THRESHOLD == 1e-6
    res = fbs_solve(np.eye(3), np.array([3.0, 0.0, -2.0]), QuadEnvCard(1.0))
    np.testing.assert_array_equal(res.support, [0, 2])


@pytest.mark.parametrize("seed", range(4))
def test_permutation_equivariance(seed):
    inst = make_instance(20, 30, 3, 0.3, seed)
    perm = np.random.default_rng(seed).permutation(30)
    for kind in (QuadEnvCard(1.0), QuadEnvPK(3), L1(0.2)):
        base = fbs_solve(inst.A, inst.b, kind).x_final
        moved = fbs_solve(inst.A.entries[:, perm], inst.b, kind).x_final
        np.testing.assert_allclose(moved, base[perm], atol=1e-7)


def test_accepts_plain_arrays_and_sensing_matrix():
    inst = make_instance(10, 15, 2, 0.1, 0)
    a = fbs_solve(inst.A, inst.b, QuadEnvCard(1.0)).x_final
    b = fbs_solve(np.asarray(inst.A), inst.b, QuadEnvCard(1.0)).x_final
    np.testing.assert_array_equal(a, b)
    assert isinstance(inst.A, SensingMatrix)


def _envelope_grid_minimum(A, b, mu, half_width=6.0, step=5e-3):
    xs = np.arange(-half_width, half_width + step / 2, step)
    xs[np.argmin(np.abs(xs))] = 0.0
    root = math.sqrt(mu)
    pen = np.where(np.abs(xs) >= root, mu, np.abs(xs) * (2 * root - np.abs(xs)))
    best = np.inf
    for i, x1 in enumerate(xs):
        r = A[:, :1] * x1 + A[:, 1:] * xs[None, :] - b[:, None]
        vals = pen[i] + pen + np.sum(r * r, axis=0)
        best = min(best, float(vals.min()))
    return best


@pytest.mark.parametrize("seed", range(6))
def test_envelope_and_original_share_global_minimum_2x2(seed):
    rng = np.random.default_rng(seed)
    mu = 1.0
    while True:
        A = rng.standard_normal((2, 2))
        A *= 0.9 / np.linalg.norm(A, axis=0)
        b = rng.standard_normal(2) * 2
        card_min, x_card = exhaustive_card_minimum(A, b, mu)
        # outside this radius ||Ax - b||^2 alone exceeds card_min
        radius = (np.linalg.norm(b) + math.sqrt(card_min)) / np.linalg.svd(A)[1][-1]
        if radius <= 8.0:
            break
    env_grid = _envelope_grid_minimum(A, b, mu, half_width=radius)
    # envelope lies below the original, so its grid minimum cannot be higher
    # than the original minimum by more than the grid resolution
    assert env_grid <= card_min + 1e-3
    # with column norms < 1 the global minima coincide
    assert env_grid >= card_min - 1e-3
    env_at_card_min = objective_value(A, b, QuadEnvCard(mu), x_card)
    assert env_at_card_min == pytest.approx(card_min, abs=1e-12)
    best_fbs = min(
        objective_value(A, b, QuadEnvCard(mu),
                        fbs_solve(A, b, QuadEnvCard(mu), SolverConfig(start=s)).x_final)
        for s in [np.zeros(2), x_card, rng.standard_normal(2) * 3])
    assert best_fbs >= card_min - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 3.0))
def test_descent_property(seed, mu):
    inst = make_instance(12, 20, 2, 0.3, seed)
    for kind in (QuadEnvCard(mu), QuadEnvPK(2)):
        res = fbs_solve(inst.A, inst.b, kind, SolverConfig(max_iter=300))
        assert np.all(np.diff(res.objective_trace) <= 1e-9)
