import numpy as np
import pytest

from dphawkes.harness import builtin_models
from dphawkes.hawkes_sim import (
    BoxKernel,
    EventStream,
    ExponentialKernel,
    HawkesModel,
    ZeroKernel,
    intensity_at,
    simulate,
)
from dphawkes.recovery import (
    KernelEstimate,
    discretize_truth,
    eval_estimate,
    reconstruct_intensity,
    relative_error,
    rescale,
    stack,
)


def naive_relative_error(a, b):
    d, cols = a.shape
    num = np.sqrt(sum((a[i, j] - b[i, j]) ** 2 for i in range(d) for j in range(cols)))
    den = np.sqrt(sum(b[i, j] ** 2 for i in range(d) for j in range(cols)))
    return num / (d * cols * den)


def test_rescale_blocks():
    M1, M2, v = np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.0]]), np.array([0.1, 0.2])
    delta = 0.5
    est = rescale(delta * np.hstack([M1, M2, v[:, None]]), delta)
    np.testing.assert_array_equal(est.blocks, [M1, M2])
    np.testing.assert_array_equal(est.eta_hat, v)
    assert est.lag == 2 and est.dim == 2


def test_rescale_round_trip(rng):
    for d, p in [(1, 1), (2, 3), (4, 5)]:
        theta = rng.normal(size=(d, d * p + 1))
        delta = 0.25
        np.testing.assert_array_equal(delta * stack(rescale(theta, delta)), theta)


def test_rescale_zero():
    est = rescale(np.zeros((3, 7)), 0.1)
    assert not est.blocks.any() and not est.eta_hat.any()


@pytest.mark.parametrize("shape", [(2, 4), (2, 2), (3,)])
def test_rescale_bad_shape(shape):
    with pytest.raises(ValueError):
        rescale(np.zeros(shape), 0.1)


def test_estimate_validation():
    with pytest.raises(ValueError):
        KernelEstimate(np.zeros((2, 2, 2)), np.zeros(3), 0.1)
    with pytest.raises(ValueError):
        KernelEstimate(np.zeros((2, 2, 2)), np.zeros(2), 0.1, interpolation="cubic")


def grid_estimate(interp):
    blocks = np.arange(1, 5, dtype=float)[:, None, None] * np.ones((4, 1, 1))
    return KernelEstimate(blocks, np.array([0.5]), 0.5, interp)


@pytest.mark.parametrize("interp", ["step", "linear"])
def test_eval_at_grid_points(interp):
    est = grid_estimate(interp)
    for k in range(1, 5):
        assert eval_estimate(est, 0, 0, k * 0.5) == k


def test_eval_linear_midpoint():
    est = grid_estimate("linear")
    assert eval_estimate(est, 0, 0, 0.75) == pytest.approx(1.5)
    assert eval_estimate(est, 0, 0, 1.75) == pytest.approx(3.5)
    assert eval_estimate(est, 0, 0, 0.2) == 1.0


def test_eval_step_constant():
    est = grid_estimate("step")
    for t in np.linspace(0.5 + 1e-9, 1.0, 7):
        assert eval_estimate(est, 0, 0, t) == 2.0


@pytest.mark.parametrize("t", [0.0, -0.1, 2.01])
def test_eval_outside(t):
    with pytest.raises(ValueError):
        eval_estimate(grid_estimate("step"), 0, 0, t)


def test_truth_zero_kernels():
    m = HawkesModel(np.array([1.0, 2.0]), ((ZeroKernel(), ZeroKernel()), (ZeroKernel(), ZeroKernel())))
    truth = discretize_truth(m, 0.1, 5)
    assert not truth.blocks.any()
    np.testing.assert_array_equal(truth.eta_hat, [1.0, 2.0])


def test_truth_box_grid():
    truth = discretize_truth(builtin_models()["paper-2d"], 0.5, 8)
    np.testing.assert_array_equal(truth.blocks[:, 0, 1], [0, 0.125, 0.125, 0.125, 0.125, 0.125, 0, 0])


def test_truth_exponential_decreasing():
    m = HawkesModel(np.array([0.1]), ((ExponentialKernel(0.5, 2.0),),))
    assert np.all(np.diff(discretize_truth(m, 0.1, 20).blocks[:, 0, 0]) < 0)


def test_relative_error_zero_and_trivial():
    truth = discretize_truth(builtin_models()["paper-2d"], 0.5, 8)
    assert relative_error(truth, truth) == 0.0
    zero = rescale(np.zeros((2, 17)), 0.5)
    assert relative_error(zero, truth) == pytest.approx(1 / (2 * 17), rel=1e-15)


def test_relative_error_matches_naive(rng):
    for _ in range(20):
        d, p = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        a, b = rng.normal(size=(d, d * p + 1)), rng.normal(size=(d, d * p + 1))
        got = relative_error(rescale(a, 1.0), rescale(b, 1.0))
        assert got == pytest.approx(naive_relative_error(a, b), rel=1e-12)


def test_relative_error_permutation_invariant(rng):
    d, p = 3, 2
    a, b = rng.normal(size=(d, d * p + 1)), rng.normal(size=(d, d * p + 1))
    perm = rng.permutation(d)

    def permute(theta):
        blocks = theta[:, :-1].reshape(d, p, d)[perm][:, :, perm].reshape(d, d * p)
        return np.hstack([blocks, theta[perm, -1:]])

    e1 = relative_error(rescale(a, 1.0), rescale(b, 1.0))
    e2 = relative_error(rescale(permute(a), 1.0), rescale(permute(b), 1.0))
    assert e1 == pytest.approx(e2, rel=1e-13)


def test_relative_error_rejects():
    with pytest.raises(ValueError):
        relative_error(rescale(np.ones((1, 2)), 1.0), rescale(np.zeros((1, 2)), 1.0))
    with pytest.raises(ValueError):
        relative_error(rescale(np.ones((1, 2)), 1.0), rescale(np.ones((1, 3)), 1.0))


def test_reconstruct_empty_history():
    est = rescale(np.array([[0.1, 0.2, 0.05]]), 0.5)
    empty = EventStream(10.0, np.array([], int), np.array([]), dim=1)
    assert reconstruct_intensity(est, empty, 3.0, 0) == pytest.approx(0.1)


def test_reconstruct_single_event():
    est = grid_estimate("step")
    hist = EventStream(5.0, np.array([0]), np.array([1.0]))
    assert reconstruct_intensity(est, hist, 1.7, 0) == 0.5 + 2.0
    # beyond the support the event no longer counts
    assert reconstruct_intensity(est, hist, 3.5, 0) == 0.5


def test_reconstruct_floors_at_zero():
    est = KernelEstimate(np.full((2, 1, 1), -5.0), np.array([0.1]), 1.0)
    hist = EventStream(5.0, np.array([0]), np.array([1.0]))
    assert reconstruct_intensity(est, hist, 1.5, 0) == 0.0
    with pytest.raises(IndexError):
        reconstruct_intensity(est, hist, 1.5, 1)


def test_reconstruct_close_to_true_intensity():
    m = builtin_models()["paper-2d"]
    delta, p = 0.05, 80
    truth = discretize_truth(m, delta, p)
    s = simulate(m, 200.0, np.random.default_rng(4))
    # worst kernel variation within one grid cell: box jumps and exponential slope
    cell = max(0.125, 0.2, 0.25 * (1 - np.exp(-delta)))
    for t in np.linspace(10.0, 200.0, 50):
        hist = EventStream(t, s.dims[s.times < t], s.times[s.times < t], dim=2)
        for mdim in range(2):
            n_recent = np.sum((t - hist.times) <= p * delta)
            exact = intensity_at(m, hist, t, mdim)
            # truncation beyond the support only matters for the exponential tail
            tail = 0.25 * np.exp(-p * delta) * len(hist)
            assert abs(reconstruct_intensity(truth, hist, t, mdim) - exact) <= cell * n_recent + tail + 1e-12
