import math

import numpy as np
import pytest

from dpdlab.network import build_network, forward_batch, window_signal
from dpdlab.signals import generate_multicarrier
from dpdlab.training import (AdamState, PruneSchedule, TrainConfig, backprop_step,
                             gradients, live_flops, mse_loss, network_sparsity,
                             prune_layer, save_history_csv, sparsity_at,
                             train_with_pruning)

FS = 200e6


def numeric_gradients(net, windows, targets, h=1e-5):
    """Central finite differences over every parameter, including the shortcut."""
    def loss_at():
        return mse_loss(forward_batch(net, windows), targets)

    grads_w, grads_b = [], []
    for w in net.weights:
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = loss_at()
            w[idx] = orig - h
            down = loss_at()
            w[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads_w.append(g)
    for b in net.biases:
        g = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            orig = b[idx]
            b[idx] = orig + h
            up = loss_at()
            b[idx] = orig - h
            down = loss_at()
            b[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads_b.append(g)
    g_a = np.zeros((2, 2))
    if net.shortcut_enabled:
        for idx in np.ndindex((2, 2)):
            orig = net.shortcut[idx]
            net.shortcut[idx] = orig + h
            up = loss_at()
            net.shortcut[idx] = orig - h
            down = loss_at()
            net.shortcut[idx] = orig
            g_a[idx] = (up - down) / (2 * h)
    return grads_w, grads_b, g_a


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def gradient_check(hidden, memory, seed, batch=16):
    rng = np.random.default_rng(seed)
    net = build_network(memory, hidden, activation="softsign", seed=seed)
    net.shortcut[:] = np.eye(2) + 0.1 * rng.normal(size=(2, 2))
    for b in net.biases:
        b[:] = 0.1 * rng.normal(size=b.shape)
    windows = rng.normal(size=(batch, net.dims[0]))
    targets = rng.normal(size=(batch, 2))
    _, grads = gradients(net, windows, targets)
    num_w, num_b, num_a = numeric_gradients(net, windows, targets)
    return max(
        max_relative_error(grads.weights, num_w),
        max_relative_error(grads.biases, num_b),
        max_relative_error([grads.shortcut], [num_a]),
    )


class TestMseLoss:
    def test_zero_for_equal(self):
        batch = np.random.default_rng(0).normal(size=(10, 2))
        assert mse_loss(batch, batch) == 0.0

    def test_unit_offset(self):
        rng = np.random.default_rng(1)
        target = rng.normal(size=(32, 2))
        pred = target + np.array([1.0, 0.0])
        assert mse_loss(pred, target) == pytest.approx(1.0, abs=1e-12)

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(2)
        pred = rng.normal(size=(100, 2))
        target = rng.normal(size=(100, 2))
        want = math.fsum(
            (pred[i, 0] - target[i, 0]) ** 2 + (pred[i, 1] - target[i, 1]) ** 2
            for i in range(100)
        ) / 100
        assert mse_loss(pred, target) == pytest.approx(want, abs=1e-12)

    def test_rejects_empty_or_mismatched(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            mse_loss(np.zeros((3, 2)), np.zeros((4, 2)))


class TestGradients:
    def test_finite_difference_small_net(self):
        assert gradient_check((6,), memory=1, seed=3) < 1e-5

    def test_finite_difference_paper_scale(self):
        assert gradient_check((16, 16), memory=3, seed=4) < 1e-5

    def test_masked_weights_get_zero_gradient(self):
        rng = np.random.default_rng(5)
        net = build_network(1, (6,), activation="softsign", seed=5)
        net.masks[0][2, 1] = 0.0
        net.masks[1][0, 3] = 0.0
        net.apply_masks()
        windows = rng.normal(size=(8, 4))
        targets = rng.normal(size=(8, 2))
        _, grads = gradients(net, windows, targets)
        assert grads.weights[0][2, 1] == 0.0
        assert grads.weights[1][0, 3] == 0.0

    def test_stationary_point_leaves_parameters_fixed(self):
        rng = np.random.default_rng(6)
        net = build_network(1, (5,), seed=6)
        windows = rng.normal(size=(12, 4))
        targets = forward_batch(net, windows)  # pred == target, gradient 0
        cfg = TrainConfig(total_steps=1, learning_rate=0.1)
        state = AdamState.for_network(net)
        before = [w.copy() for w in net.weights] + [net.shortcut.copy()]
        loss = backprop_step(net, windows, targets, cfg, state)
        assert loss == 0.0
        after = net.weights + [net.shortcut]
        for b, a in zip(before, after):
            assert np.max(np.abs(a - b)) < 1e-12

    def test_single_step_decreases_loss(self):
        cfg = TrainConfig(total_steps=1, learning_rate=1e-4)
        wins = 0
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            net = build_network(1, (6,), seed=seed)
            window = rng.normal(size=(1, 4))
            target = rng.normal(size=(1, 2))
            before = mse_loss(forward_batch(net, window), target)
            backprop_step(net, window, target, cfg, AdamState.for_network(net))
            after = mse_loss(forward_batch(net, window), target)
            wins += after < before
        assert wins >= 95


class TestSparsitySchedule:
    def test_endpoints(self):
        sched = PruneSchedule(eta_d=0.7, delta_n=100, total_steps=2000)
        assert sparsity_at(sched, 0) == 0.0
        assert sparsity_at(sched, 2000) == pytest.approx(0.7)

    def test_cubic_midpoint_value(self):
        sched = PruneSchedule(eta_d=0.5, delta_n=10, total_steps=100)
        assert sparsity_at(sched, 50) == pytest.approx(0.4375)

    def test_monotone_over_random_schedules(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            total = int(rng.integers(10, 5000))
            delta = int(rng.integers(1, total + 1))
            eta = float(rng.uniform(0.05, 0.95))
            sched = PruneSchedule(eta_d=eta, delta_n=delta, total_steps=total)
            values = [sparsity_at(sched, n) for n in range(total + 1)]
            assert values[0] == 0.0
            assert values[-1] == pytest.approx(eta, abs=1e-12)
            assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        sched = PruneSchedule(eta_d=0.5, delta_n=10, total_steps=100)
        with pytest.raises(ValueError):
            sparsity_at(sched, -1)
        with pytest.raises(ValueError):
            sparsity_at(sched, 101)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            PruneSchedule(eta_d=1.0, delta_n=1, total_steps=10)
        with pytest.raises(ValueError):
            PruneSchedule(eta_d=0.5, delta_n=20, total_steps=10)


class TestPruneLayer:
    def make_net_with_weights(self, values):
        net = build_network(0, (2,), seed=0)  # dims (2, 2, 2): two 4-weight layers
        net.weights[0][:] = np.asarray(values).reshape(2, 2)
        return net

    def test_zero_target_is_noop(self):
        net = self.make_net_with_weights([0.1, -0.5, 0.02, 0.9])
        prune_layer(net, 0, 0.0)
        assert net.masks[0].all()

    def test_smallest_magnitudes_go_first(self):
        net = self.make_net_with_weights([0.1, -0.5, 0.02, 0.9])
        prune_layer(net, 0, 0.5)
        assert net.masks[0].ravel().tolist() == [0.0, 1.0, 0.0, 1.0]
        assert net.weights[0].ravel().tolist() == [0.0, -0.5, 0.0, 0.9]

    def test_extreme_target_keeps_only_the_largest(self):
        net = self.make_net_with_weights([0.3, -0.5, 0.02, 0.9])
        prune_layer(net, 0, 1.0 - 1.0 / 4.0)
        assert net.masks[0].ravel().tolist() == [0.0, 0.0, 0.0, 1.0]

    def test_ties_break_by_lowest_flat_index(self):
        net = self.make_net_with_weights([0.5, -0.5, 0.5, -0.5])
        prune_layer(net, 0, 0.5)
        assert net.masks[0].ravel().tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_lower_target_than_current_errors(self):
        net = self.make_net_with_weights([0.1, -0.5, 0.02, 0.9])
        prune_layer(net, 0, 0.5)
        with pytest.raises(ValueError):
            prune_layer(net, 0, 0.25)


def toy_dataset(num=4000, memory=2, seed=0):
    x = generate_multicarrier(num + memory, 10e6, FS, seed=seed, target_rms=0.25)
    windows = window_signal(x, memory)
    rng = np.random.default_rng(seed + 1)
    teacher = build_network(memory, (6,), seed=seed + 2)
    teacher.shortcut[:] = np.eye(2) + 0.2 * rng.normal(size=(2, 2))
    targets = forward_batch(teacher, windows)
    return windows, targets, teacher


class TestTrainWithPruning:
    def test_plain_training_keeps_masks(self):
        windows, targets, _ = toy_dataset()
        net = build_network(2, (6,), seed=1)
        cfg = TrainConfig(total_steps=50, seed=1)
        history = train_with_pruning(net, windows, targets, cfg, sched=None)
        assert len(history) == 50
        for m in net.masks:
            assert m.all()

    def test_final_sparsity_within_one_weight(self):
        windows, targets, _ = toy_dataset()
        net = build_network(2, (8, 8), seed=2)
        cfg = TrainConfig(total_steps=2000, seed=2)
        sched = PruneSchedule(eta_d=0.5, delta_n=100, total_steps=2000)
        train_with_pruning(net, windows, targets, cfg, sched)
        for k, m in enumerate(net.masks):
            zeros = m.size - np.count_nonzero(m)
            assert abs(zeros - 0.5 * m.size) <= 1.0
        assert np.all(net.shortcut != 0.0)  # the shortcut is never pruned

    def test_mask_monotonicity_no_resurrection(self):
        windows, targets, _ = toy_dataset(num=2000)
        net = build_network(2, (8,), seed=3)
        cfg = TrainConfig(total_steps=1500, seed=3)
        sched = PruneSchedule(eta_d=0.6, delta_n=50, total_steps=1500)
        state = AdamState.for_network(net)
        dead: set = set()
        rng = np.random.default_rng(3)
        for n in range(1, 1501):
            if n % 50 == 0:
                eta = sparsity_at(sched, n)
                for k in range(len(net.weights)):
                    if eta > net.layer_sparsity(k):
                        prune_layer(net, k, eta)
            else:
                idx = rng.integers(0, windows.shape[0], size=64)
                backprop_step(net, windows[idx], targets[idx], cfg, state)
            now = {(k, i) for k, m in enumerate(net.masks)
                   for i in np.flatnonzero(m.ravel() == 0.0)}
            assert dead <= now
            dead = now

    def test_determinism_of_loss_history(self):
        windows, targets, _ = toy_dataset()
        runs = []
        for _ in range(2):
            net = build_network(2, (6,), seed=4)
            cfg = TrainConfig(total_steps=200, seed=4)
            sched = PruneSchedule(eta_d=0.3, delta_n=20, total_steps=200)
            history = train_with_pruning(net, windows, targets, cfg, sched)
            runs.append([row.loss for row in history])
        assert runs[0] == runs[1]

    def test_retraining_pruned_net_never_resurrects(self):
        windows, targets, _ = toy_dataset()
        net = build_network(2, (8,), seed=5)
        cfg = TrainConfig(total_steps=1000, seed=5)
        sched = PruneSchedule(eta_d=0.5, delta_n=100, total_steps=1000)
        train_with_pruning(net, windows, targets, cfg, sched)
        masks_before = [m.copy() for m in net.masks]
        train_with_pruning(net, windows, targets, cfg, sched)  # acts as retraining
        for before, after in zip(masks_before, net.masks):
            assert np.array_equal(before, after)

    def test_teacher_student_convergence(self):
        passes = 0
        for seed in (1, 2, 3):
            windows, targets, teacher = toy_dataset(num=6000, seed=10 * seed)
            student = build_network(2, (6,), seed=seed)
            cfg = TrainConfig(total_steps=20_000, learning_rate=1e-3, seed=seed)
            train_with_pruning(student, windows, targets, cfg, sched=None)
            final = mse_loss(forward_batch(student, windows), targets)
            passes += final < 1e-4
        assert passes >= 2

    def test_pruning_costs_bounded_accuracy(self):
        windows, targets, _ = toy_dataset(num=6000, seed=40)
        dense = build_network(2, (10,), seed=6)
        cfg = TrainConfig(total_steps=8000, seed=6)
        train_with_pruning(dense, windows, targets, cfg, sched=None)
        dense_mse = mse_loss(forward_batch(dense, windows), targets)

        pruned = build_network(2, (10,), seed=6)
        sched = PruneSchedule(eta_d=0.5, delta_n=400, total_steps=8000)
        train_with_pruning(pruned, windows, targets, cfg, sched)
        pruned_mse = mse_loss(forward_batch(pruned, windows), targets)
        assert pruned_mse <= 10.0 * dense_mse

    def test_history_columns_and_csv(self, tmp_path):
        windows, targets, _ = toy_dataset(num=1000)
        net = build_network(2, (4,), seed=7)
        cfg = TrainConfig(total_steps=100, seed=7)
        sched = PruneSchedule(eta_d=0.4, delta_n=25, total_steps=100)
        history = train_with_pruning(net, windows, targets, cfg, sched)
        assert history[-1].eta_current == pytest.approx(network_sparsity(net))
        assert history[-1].flops_current == live_flops(net)
        path = tmp_path / "history.csv"
        save_history_csv(path, history)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss,eta_current,flops_current"
        assert len(lines) == 101
