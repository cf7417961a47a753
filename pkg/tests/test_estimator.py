import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmb import estimator as est
from qmb.model import InstanceConfig, compute_kappa_bound, generate_instance
from qmb.simulator import estimation_run


def disk_grid(step):
    g = np.arange(-1.0, 1.0 + step / 2, step)
    P = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    return P[np.linalg.norm(P, axis=1) <= 1.0]


def vdist(P, target, V):
    D = P - target
    return np.sqrt(np.einsum("ij,jk,ik->i", D, V, D))


def test_init():
    s = est.init_estimator(2, 1.0)
    assert np.array_equal(s.V, np.eye(2)) and np.array_equal(s.theta_hat, [0, 0]) and s.updates == 0
    x = np.array([0.3, 0.4])
    assert est.bonus(x, est.init_estimator(2, 4.0).V) == pytest.approx(np.linalg.norm(x) / 2)


@pytest.mark.parametrize("d,lam", [(0, 1.0), (2, 0.0), (2, -1.0)])
def test_init_rejects(d, lam):
    with pytest.raises(ValueError):
        est.init_estimator(d, lam)


def test_gradient_examples():
    X = np.array([[1.0, 0.0]])
    accepted = est.Feedback((0,), (1,))
    refused = est.Feedback((0,), (0,))
    assert np.allclose(est.gradient(np.zeros(2), accepted, X), [-0.5, 0.0])
    assert np.allclose(est.gradient(np.zeros(2), refused, X), [0.5, 0.0])
    assert np.array_equal(est.gradient(np.zeros(2), est.Feedback((), ()), X), [0.0, 0.0])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.5, 0.5, size=(3, 2))
    fb = est.Feedback((0, 2), (0, 1))

    def nll(theta):
        u = X[[0, 2]] @ theta
        return -(u[1] - math.log(1 + np.exp(u).sum()))

    theta = np.array([0.2, -0.3])
    h = 1e-6
    fd = np.array([(nll(theta + h * e) - nll(theta - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(est.gradient(theta, fb, X), fd, atol=1e-8)


def test_feedback_rejects_two_acceptances():
    with pytest.raises(ValueError):
        est.Feedback((0, 1), (1, 1))


def test_projection_examples():
    inside = np.array([0.3, -0.2])
    assert np.array_equal(est.project_ball_vnorm(inside, np.eye(2)), inside)
    assert est.project_ball_vnorm([1.5], [[1.0]]) == pytest.approx([1.0], abs=1e-9)
    assert np.allclose(est.project_ball_vnorm([3.0, 4.0], np.eye(2)), [0.6, 0.8], atol=1e-9)


def test_projection_matches_dense_grid():
    V = np.diag([1.0, 4.0])
    target = np.array([2.0, 0.5])
    P = disk_grid(1e-3)
    best = P[np.argmin(vdist(P, target, V))]
    theta = est.project_ball_vnorm(target, V)
    assert np.linalg.norm(theta - best) <= 2e-3
    assert abs(np.linalg.norm(theta) - 1) <= 1e-9


def test_projection_rejects_non_spd():
    with pytest.raises(ValueError):
        est.project_ball_vnorm([2.0, 0.0], np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        est.bonus([1.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])


def test_projection_iteration_limit():
    with pytest.raises(est.ProjectionError) as info:
        est.project_ball_vnorm([5.0, 5.0], np.diag([1.0, 3.0]), max_iter=3)
    assert info.value.residual > 0


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-0.9, 0.9),
)
def test_projection_beats_grid(target, a, b, corr):
    c = corr * math.sqrt(a * b)
    V = np.array([[a, c], [c, b]])
    target = np.asarray(target)
    theta = est.project_ball_vnorm(target, V)
    ang = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
    P = np.concatenate([np.stack([np.cos(ang), np.sin(ang)], 1), disk_grid(0.03)])
    assert np.linalg.norm(theta) <= 1 + 1e-9
    assert vdist(theta[None], target, V)[0] <= vdist(P, target, V).min() + 1e-9


def test_absorb_examples():
    # d = 1: V' = 2, unconstrained 0.5 - 0.4 / 2 = 0.3
    X = np.array([[1.0]])
    s = est.EstimatorState(np.array([0.5]), np.array([[1.0]]), 1.0)
    kappa = 2.0  # V' = V + (kappa / 2) * 1 = 2
    fb = est.Feedback((0,), (0,))
    g = est.gradient(s.theta_hat, fb, X)
    out = est.absorb_round(s, fb, X, kappa)
    assert out.V[0, 0] == pytest.approx(2.0)
    assert out.theta_hat[0] == pytest.approx(0.5 - g[0] / 2.0)
    assert out.updates == 1

    empty = est.absorb_round(s, est.Feedback((), ()), X, kappa)
    assert np.array_equal(empty.theta_hat, s.theta_hat) and np.array_equal(empty.V, s.V)


def test_newton_step_scalar_arithmetic():
    # the step itself: theta' = proj(theta - V'^-1 g) with V' = 2, g = 0.4
    assert est.project_ball_vnorm(np.array([0.5 - 0.4 / 2]), np.array([[2.0]]))[0] == pytest.approx(0.3)


def test_beta_values():
    assert est.beta(1, 2, 0.5, 1.0, 2, 2, 1.0) == pytest.approx(math.sqrt(1 + 4 * math.log(3)))
    assert est.beta(1, 2, 0.5, 1.0, 2, 2, 1.0) == pytest.approx(2.322595, abs=1e-6)
    assert est.beta(1000, 2, 0.5, 1.0, 2, 2, 0.0) == 0.0
    ts = np.unique(np.logspace(0, 6, 500).astype(int))
    vals = [est.beta(t, 3, 0.01, 1.0, 2, 3, 1.0) for t in ts]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_bonus_values():
    assert est.bonus([3.0, 4.0], np.eye(2)) == pytest.approx(5.0)
    assert est.bonus([3.0, 4.0], 4 * np.eye(2)) == pytest.approx(2.5)


def test_state_invariants_along_a_run():
    inst = generate_instance(InstanceConfig(seed=2))
    rng = np.random.default_rng(0)
    s = est.init_estimator(2, 1.0)
    expected_V = np.eye(2)
    probe = np.array([0.6, 0.8])
    last_bonus = est.bonus(probe, s.V)
    for _ in range(500):
        S = tuple(int(n) for n in rng.choice(4, size=2, replace=False))
        chosen = int(rng.choice([S[0], S[1], -1]))
        s = est.absorb_round(s, est.Feedback.from_choice(S, chosen), inst.features, inst.kappa)
        expected_V = expected_V + 0.5 * inst.kappa * inst.features[list(S)].T @ inst.features[list(S)]
        assert np.linalg.norm(s.theta_hat) <= 1 + 1e-9
        assert np.linalg.eigvalsh(s.V).min() >= 1.0 - 1e-12
        b = est.bonus(probe, s.V)
        assert b <= last_bonus + 1e-15
        last_bonus = b
    assert np.allclose(s.V, expected_V, rtol=1e-12, atol=1e-12)


def test_error_shrinks_with_data():
    inst = generate_instance(InstanceConfig(seed=4))
    early, late = [], []
    for seed in range(20):
        trace = estimation_run(inst, 5000, seed)
        early.append(trace.errors[499].mean())
        late.append(trace.errors[4999].mean())
    assert np.median(late) < np.median(early)


def test_coverage_sanity():
    inst = generate_instance(InstanceConfig(seed=4))
    assert inst.kappa == compute_kappa_bound(2)
    trace = estimation_run(inst, 300, 0)
    assert np.mean(trace.vnorm_errors <= trace.betas[:, None]) >= 0.95
