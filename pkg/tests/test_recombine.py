import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import nnls

from cadenoise.image_core import EmptyMaskError, GrayImage, PixelMask
from cadenoise.recombine import (
    DivergenceError,
    OptimizerConfig,
    SingularSystemError,
    WeightFormatError,
    WeightVector,
    fit_weights,
    init_weights,
    load_weights,
    normal_equations,
    objective,
    objective_gradient,
    recombine,
    save_weights,
    solve_least_squares_oracle,
    weight_stats,
)
from cadenoise.threshold_stack import BinaryStack, ThresholdSet, decompose, thresholds_full


def make_stack(planes):
    planes = np.asarray(planes, dtype=bool)
    return BinaryStack(ThresholdSet(tuple(range(1, planes.shape[0] + 1))), planes)


def random_instance(seed, t=None, side=16, density=0.5, mask_frac=1.0):
    """Linearly independent random planes, target = planes . w_true + noise."""
    rng = np.random.default_rng(seed)
    t = t or int(rng.integers(1, 9))
    while True:
        planes = rng.random((t, side, side)) < density
        design = planes.reshape(t, -1).T.astype(float)
        if np.linalg.matrix_rank(design) == t:
            break
    w_true = rng.uniform(5, 200 / t, t)
    y = np.tensordot(w_true, planes.astype(float), axes=1) + rng.normal(0, 6, (side, side))
    noisy = GrayImage(np.clip(np.rint(y), 0, 255))
    mask = rng.random((side, side)) < mask_frac
    return make_stack(planes), noisy, PixelMask(mask)


# ------------------------------------------------------------- recombine


def test_unit_weights_reconstruct(scene128):
    stack = decompose(scene128, thresholds_full())
    assert recombine(stack, WeightVector(np.ones(255))) == scene128


def test_zero_weights():
    stack = make_stack(np.ones((3, 4, 4)))
    out = recombine(stack, WeightVector(np.zeros(3)))
    assert not out.pixels.any()


def test_clamp_high():
    stack = make_stack(np.ones((1, 3, 3)))
    assert (recombine(stack, WeightVector([300.0])).pixels == 255).all()
    raw = recombine(stack, WeightVector([300.0]), clamp=False)
    assert (raw == 300.0).all()


def test_clamp_low_and_rounding():
    stack = make_stack(np.ones((1, 1, 4)))
    assert (recombine(stack, WeightVector([-12.0])).pixels == 0).all()
    assert (recombine(stack, WeightVector([2.5])).pixels == 3).all()
    assert (recombine(stack, WeightVector([2.4999])).pixels == 2).all()


def test_length_mismatch():
    with pytest.raises(ValueError):
        recombine(make_stack(np.ones((2, 2, 2))), WeightVector([1.0]))


@given(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3))
def test_clamped_output_in_range(ws):
    stack = make_stack(np.random.default_rng(0).random((3, 5, 5)) < 0.5)
    out = recombine(stack, WeightVector(ws))
    assert out.pixels.dtype == np.uint8


# ------------------------------------------------------------ init_weights


def test_init_exact_means():
    assert np.array_equal(init_weights(255, 0.0).weights, np.ones(255))
    assert np.all(init_weights(8, 0.0).weights == 31.875)


def test_init_range_and_determinism():
    w = init_weights(255, 0.05, seed=3).weights
    assert w.min() >= 0.95 and w.max() <= 1.05
    assert np.array_equal(w, init_weights(255, 0.05, seed=3).weights)
    assert not np.array_equal(w, init_weights(255, 0.05, seed=4).weights)


def test_init_validation():
    with pytest.raises(ValueError):
        init_weights(0)
    with pytest.raises(ValueError):
        init_weights(3, 1.0)


# --------------------------------------------------------------- objective


def test_objective_zero_when_exact():
    img = GrayImage(np.array([[40, 40], [0, 40]]))
    stack = make_stack([[[1, 1], [0, 1]]])
    mask = PixelMask(np.ones((2, 2), dtype=bool))
    assert objective(stack, WeightVector([40.0]), img, mask) == 0


def test_objective_hand_value():
    img = GrayImage(np.full((2, 2), 100))
    stack = make_stack(np.ones((1, 2, 2)))
    mask = PixelMask(np.ones((2, 2), dtype=bool))
    assert objective(stack, WeightVector([90.0]), img, mask) == 400


def test_objective_only_masked_pixels():
    img = GrayImage(np.array([[100, 0]]))
    stack = make_stack(np.ones((1, 1, 2)))
    mask = PixelMask(np.array([[True, False]]))
    assert objective(stack, WeightVector([100.0]), img, mask) == 0


def test_objective_empty_mask():
    stack = make_stack(np.ones((1, 2, 2)))
    with pytest.raises(EmptyMaskError):
        objective(stack, WeightVector([1.0]), GrayImage(np.zeros((2, 2))), PixelMask(np.zeros((2, 2), dtype=bool)))


def central_difference(stack, w, noisy, mask, ridge, h=1e-6):
    grad = np.zeros(w.size)
    for k in range(w.size):
        up, down = w.copy(), w.copy()
        up[k] += h
        down[k] -= h
        f_up = objective(stack, WeightVector(up), noisy, mask) + ridge * up @ up
        f_down = objective(stack, WeightVector(down), noisy, mask) + ridge * down @ down
        grad[k] = (f_up - f_down) / (2 * h)
    return grad


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("ridge", [0.0, 2.5])
def test_gradient_matches_finite_differences(seed, ridge):
    stack, noisy, mask = random_instance(seed)
    w = np.random.default_rng(seed).uniform(0, 40, len(stack))
    analytic = objective_gradient(stack, WeightVector(w), noisy, mask, ridge)
    numeric = central_difference(stack, w, noisy, mask, ridge)
    assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-5 * np.abs(analytic).max())


def test_gram_form_matches_direct():
    stack, noisy, mask = random_instance(11, t=6, mask_frac=0.8)
    eq = normal_equations(stack, noisy, mask)
    w = np.random.default_rng(0).normal(10, 5, 6)
    assert eq.value(w) == pytest.approx(objective(stack, WeightVector(w), noisy, mask), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(0, 1))
def test_objective_convex(seed, lam):
    stack, noisy, mask = random_instance(seed, t=4, side=8)
    rng = np.random.default_rng(seed)
    w1, w2 = rng.normal(20, 30, (2, 4))

    def f(w):
        return objective(stack, WeightVector(w), noisy, mask)

    mid = f(lam * w1 + (1 - lam) * w2)
    assert mid <= lam * f(w1) + (1 - lam) * f(w2) + 1e-9 * max(1.0, f(w1), f(w2))


# ---------------------------------------------------------------- fitting


def test_fit_scalar_mean():
    img = GrayImage(np.full((6, 6), 137))
    stack = make_stack(np.ones((1, 6, 6)))
    mask = PixelMask(np.ones((6, 6), dtype=bool))
    fit = fit_weights(stack, img, mask, OptimizerConfig(epochs=200))
    assert abs(fit.weights.weights[0] - 137) < 1e-6


def test_fit_disjoint_planes_normal_equations():
    # plane A covers the left half, plane B the right; G = diag(nA, nB), b = sums
    rng = np.random.default_rng(5)
    pix = rng.integers(20, 230, (6, 8))
    planes = np.zeros((2, 6, 8), dtype=bool)
    planes[0, :, :4] = True
    planes[1, :, 4:] = True
    mask = rng.random((6, 8)) < 0.7
    mask[0, 0] = mask[0, 7] = True
    expected = [pix[:, :4][mask[:, :4]].mean(), pix[:, 4:][mask[:, 4:]].mean()]
    stack, noisy = make_stack(planes), GrayImage(pix)
    fit = fit_weights(stack, noisy, PixelMask(mask), OptimizerConfig(epochs=500))
    assert np.allclose(fit.weights.weights, expected, atol=1e-8)
    oracle = solve_least_squares_oracle(stack, noisy, PixelMask(mask))
    assert np.allclose(oracle.weights, expected, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_fit_reaches_oracle(seed):
    stack, noisy, mask = random_instance(seed, mask_frac=0.9)
    fit = fit_weights(stack, noisy, mask, OptimizerConfig(epochs=5000, seed=seed))
    oracle = solve_least_squares_oracle(stack, noisy, mask)
    f_fit = objective(stack, fit.weights, noisy, mask)
    f_opt = objective(stack, oracle, noisy, mask)
    assert f_opt * (1 - 1e-12) <= f_fit <= f_opt * (1 + 1e-6)
    assert fit.final_objective == pytest.approx(f_fit, rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_history_non_increasing_and_never_worse(seed):
    stack, noisy, mask = random_instance(seed)
    cfg = OptimizerConfig(epochs=300, seed=seed)
    fit = fit_weights(stack, noisy, mask, cfg)
    start = objective(stack, init_weights(len(stack), cfg.epsilon_init, seed), noisy, mask)
    assert np.all(np.diff(fit.objective_history) <= 0)
    assert fit.final_objective <= start


def test_oversized_step_is_halved():
    stack, noisy, mask = random_instance(2, t=5)
    fit = fit_weights(stack, noisy, mask, OptimizerConfig(epochs=400, step_size=1.0))
    assert fit.halvings > 0
    assert np.all(np.diff(fit.objective_history) <= 0)
    oracle = solve_least_squares_oracle(stack, noisy, mask)
    assert fit.final_objective <= objective(stack, oracle, noisy, mask) * (1 + 1e-6)


def test_ridge_shrinks_weights():
    stack, noisy, mask = random_instance(4, t=6)
    plain = solve_least_squares_oracle(stack, noisy, mask)
    ridged = solve_least_squares_oracle(stack, noisy, mask, ridge=1e4)
    assert np.linalg.norm(ridged.weights) < np.linalg.norm(plain.weights)
    fit = fit_weights(stack, noisy, mask, OptimizerConfig(epochs=3000, ridge=1e4))
    assert np.allclose(fit.weights.weights, ridged.weights, rtol=1e-5, atol=1e-6)


def nonneg_instance(seed):
    # some true weights negative so the constraint binds
    rng = np.random.default_rng(seed)
    planes = rng.random((6, 16, 16)) < 0.5
    w_true = np.array([60.0, -30.0, 50.0, -20.0, 40.0, 30.0])
    y = np.tensordot(w_true, planes.astype(float), axes=1) + rng.normal(0, 4, (16, 16))
    return make_stack(planes), GrayImage(np.clip(np.rint(y), 0, 255)), PixelMask(np.ones((16, 16), dtype=bool))


@pytest.mark.parametrize("seed", range(4))
def test_nonneg_oracle_matches_scipy(seed):
    stack, noisy, mask = nonneg_instance(seed)
    oracle = solve_least_squares_oracle(stack, noisy, mask, nonneg=True)
    design = stack.planes.reshape(len(stack), -1).T.astype(float)
    ref, _ = nnls(design, noisy.pixels.ravel().astype(float))
    assert np.allclose(oracle.weights, ref, atol=1e-6)
    assert (oracle.weights >= 0).all() and (oracle.weights == 0).any()


@pytest.mark.parametrize("seed", range(3))
def test_projected_fit(seed):
    stack, noisy, mask = nonneg_instance(seed)
    cfg = OptimizerConfig(epochs=6000, nonneg=True, seed=seed)
    fit = fit_weights(stack, noisy, mask, cfg)
    oracle = solve_least_squares_oracle(stack, noisy, mask, nonneg=True)
    f_opt = objective(stack, oracle, noisy, mask)
    assert objective(stack, fit.weights, noisy, mask) <= f_opt * (1 + 1e-6)
    assert fit.weights.nonneg_constrained
    for epochs in range(1, 30):
        w = fit_weights(stack, noisy, mask, OptimizerConfig(epochs=epochs, nonneg=True, seed=seed)).weights
        assert (w.weights >= 0).all()


def test_oracle_singular_on_duplicate_planes():
    rng = np.random.default_rng(0)
    plane = rng.random((8, 8)) < 0.5
    stack = make_stack([plane, plane, ~plane])
    noisy = GrayImage(rng.integers(1, 255, (8, 8)))
    mask = PixelMask(np.ones((8, 8), dtype=bool))
    with pytest.raises(SingularSystemError):
        solve_least_squares_oracle(stack, noisy, mask)
    solve_least_squares_oracle(stack, noisy, mask, ridge=1.0)


def test_fit_empty_mask():
    stack = make_stack(np.ones((1, 2, 2)))
    with pytest.raises(EmptyMaskError):
        fit_weights(stack, GrayImage(np.zeros((2, 2))), PixelMask(np.zeros((2, 2), dtype=bool)))


def test_fit_non_finite_start():
    stack, noisy, mask = random_instance(1, t=3)
    with pytest.raises(DivergenceError):
        fit_weights(stack, noisy, mask, OptimizerConfig(epochs=5), init=WeightVector([np.nan, 1.0, 1.0]))


def test_fit_deterministic():
    stack, noisy, mask = random_instance(9)
    a = fit_weights(stack, noisy, mask, OptimizerConfig(epochs=50, seed=2))
    b = fit_weights(stack, noisy, mask, OptimizerConfig(epochs=50, seed=2))
    assert np.array_equal(a.weights.weights, b.weights.weights)
    assert np.array_equal(a.objective_history, b.objective_history)


# ------------------------------------------------------------------ stats


def test_stats_small():
    s = weight_stats(WeightVector([3.0, 1.0, 2.0]))
    assert (s.mean, s.median, s.min, s.max, s.sum) == (2.0, 2.0, 1.0, 3.0, 6.0)
    assert s.std == pytest.approx(math.sqrt(2 / 3))


def test_stats_constant_and_even_median():
    s = weight_stats(WeightVector([5.0] * 4))
    assert s.std == 0 and s.sum == 20
    assert weight_stats(WeightVector([4.0, 1.0, 3.0, 2.0])).median == 2.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_stats_invariants(values):
    s = weight_stats(WeightVector(values))
    tol = 1e-9 * max(1.0, max(abs(v) for v in values))
    assert s.min <= s.median <= s.max
    assert s.min - tol <= s.mean <= s.max + tol
    assert s.sum == pytest.approx(s.mean * len(values), rel=1e-12, abs=1e-9)


# -------------------------------------------------------------- weight I/O


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_weight_file_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("w") / "w.txt"
    ks = ThresholdSet(tuple(range(10, 10 + len(values))))
    save_weights(path, WeightVector(values), ks, noise_p=0.1, seed=7, epochs=7560, eta=0.1)
    back = load_weights(path)
    assert back.weights.tobytes() == np.asarray(values, dtype=np.float64).tobytes()
    assert back.thresholds == ks
    assert back.metadata == {"noise_p": 0.1, "seed": 7, "epochs": 7560, "eta": 0.1}


def test_weight_file_layout(tmp_path):
    path = tmp_path / "w.txt"
    save_weights(path, WeightVector([1.5, 0.1], nonneg_constrained=True), ThresholdSet((1, 2)), noise_p=0.1)
    lines = path.read_text().splitlines()
    assert lines[0] == "cadenoise-weights 1 2"
    assert lines[1] == "thresholds 1 2"
    assert lines[2:4] == ["1.5", "0.1"]
    assert "noise_p=0.1" in lines and "nonneg=true" in lines
    assert load_weights(path).nonneg_constrained


def test_weight_file_version_mismatch(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text("cadenoise-weights 9 1\nthresholds 1\n1.0\n")
    with pytest.raises(WeightFormatError):
        load_weights(path)
    path.write_text("something else\n")
    with pytest.raises(WeightFormatError):
        load_weights(path)


def test_weight_file_io_error(tmp_path):
    with pytest.raises(OSError):
        save_weights(tmp_path / "no" / "w.txt", WeightVector([1.0]), ThresholdSet((1,)))
    with pytest.raises(OSError):
        load_weights(tmp_path / "absent.txt")


def test_loaded_weights_wrong_length(tmp_path):
    path = tmp_path / "w.txt"
    save_weights(path, WeightVector([1.0, 2.0]), ThresholdSet((1, 2)))
    with pytest.raises(ValueError):
        recombine(make_stack(np.ones((3, 2, 2))), load_weights(path))
