"""Loss closed forms, Sinkhorn balance, and gradient correctness."""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from selftrav.objectives import (
    OCCHead,
    PrototypeBank,
    cluster_prediction_ce,
    info_nce,
    occ_loss,
    occ_score,
    sinkhorn,
    swapped_prediction_loss,
)

from oracles import finite_difference_grad, relative_grad_error, sinkhorn_fixed_point

torch.manual_seed(0)


def make_head(center, temperature=1.0, unlabeled_weight=0.1, margin=1.0):
    return OCCHead(
        torch.as_tensor(center, dtype=torch.float64),
        temperature=temperature,
        unlabeled_weight=unlabeled_weight,
        margin=margin,
    )


# ---------------------------------------------------------------- occ


def test_occ_score_at_center_is_one():
    head = make_head(np.ones(4))
    assert occ_score(torch.ones(4, dtype=torch.float64), head).item() == 1.0


def test_occ_score_closed_form_at_temperature_distance():
    # squared distance exactly equal to the temperature -> 1/e
    head = make_head(np.zeros(4), temperature=2.0)
    z = torch.zeros(4, dtype=torch.float64)
    z[0] = np.sqrt(2.0)
    assert abs(occ_score(z, head).item() - 0.367879441) < 1e-6


def test_occ_score_strictly_decreasing_in_distance():
    head = make_head(np.zeros(1))
    dists = torch.linspace(0.0, 5.0, 40, dtype=torch.float64).unsqueeze(1)
    scores = occ_score(dists, head)
    assert (scores[1:] < scores[:-1]).all()
    assert scores[-1] < 1e-9  # decays toward zero


def test_occ_score_dim_mismatch():
    with pytest.raises(ValueError):
        occ_score(torch.zeros(3), make_head(np.zeros(4)))


def test_occ_loss_zero_when_positives_at_center():
    head = make_head(np.ones(3), unlabeled_weight=0.0)
    z = torch.ones(5, 3, dtype=torch.float64)
    labels = torch.ones(5, dtype=torch.bool)
    assert occ_loss(z, labels, head).item() == 0.0


def test_occ_loss_single_positive_squared_distance():
    head = make_head(np.zeros(2), unlabeled_weight=0.0)
    z = torch.tensor([[2.0, 0.0]], dtype=torch.float64)
    assert abs(occ_loss(z, torch.tensor([True]), head).item() - 4.0) < 1e-12


def test_occ_loss_hand_case_with_hinge():
    # positive at distance 1, unlabeled at the center: 1 + 0.5 * (1 - 0)^2
    head = make_head(np.zeros(2), unlabeled_weight=0.5, margin=1.0)
    z = torch.tensor([[1.0, 0.0], [0.0, 0.0]], dtype=torch.float64)
    labels = torch.tensor([True, False])
    assert abs(occ_loss(z, labels, head).item() - 1.5) < 1e-12


def test_occ_loss_hinge_inactive_outside_margin():
    head = make_head(np.zeros(2), unlabeled_weight=0.5, margin=1.0)
    z = torch.tensor([[1.0, 0.0], [3.0, 0.0]], dtype=torch.float64)
    labels = torch.tensor([True, False])
    assert abs(occ_loss(z, labels, head).item() - 1.0) < 1e-12


def test_occ_loss_no_positives_returns_skip():
    head = make_head(np.zeros(2))
    z = torch.zeros(4, 2, dtype=torch.float64)
    assert occ_loss(z, torch.zeros(4, dtype=torch.bool), head) is None


def test_occ_head_validation():
    with pytest.raises(ValueError):
        make_head(np.zeros(2), temperature=0.0)
    with pytest.raises(ValueError):
        make_head(np.zeros(2), unlabeled_weight=1.5)


# ---------------------------------------------------------------- sinkhorn


def test_sinkhorn_constant_scores_uniform():
    q = sinkhorn(torch.full((6, 3), 2.5, dtype=torch.float64), 0.1, 5)
    assert torch.allclose(q, torch.full((6, 3), 1.0 / 3.0, dtype=torch.float64))


def test_sinkhorn_row_shift_invariance():
    rng = np.random.default_rng(1)
    scores = torch.from_numpy(rng.normal(size=(12, 4)))
    shifted = scores.clone()
    shifted[3] += 7.25
    q0 = sinkhorn(scores, 0.05, 3)
    q1 = sinkhorn(shifted, 0.05, 3)
    assert torch.allclose(q0, q1, atol=1e-12)


def test_sinkhorn_marginals():
    rng = np.random.default_rng(2)
    for trial in range(10):
        scores = torch.from_numpy(rng.uniform(-1, 1, size=(64, 8)))
        q = sinkhorn(scores, 0.1, 50)
        assert torch.all(q >= 0)
        assert torch.allclose(q.sum(dim=1), torch.ones(64, dtype=torch.float64), atol=1e-5)
        assert torch.allclose(
            q.sum(dim=0), torch.full((8,), 8.0, dtype=torch.float64), atol=1e-3
        )


def test_sinkhorn_matches_long_run_oracle_2x2():
    scores = [[2.0, 0.0], [0.0, 2.0]]
    want = sinkhorn_fixed_point(scores, 0.5)
    got = sinkhorn(torch.tensor(scores, dtype=torch.float64), 0.5, 50).numpy()
    assert np.abs(got - want).max() < 1e-4
    # independent closed form for this symmetric case: Q11 = 1 / (1 + e^-4)
    assert abs(got[0, 0] - 1.0 / (1.0 + np.exp(-4.0))) < 1e-9


def test_sinkhorn_matches_long_run_oracle_random():
    rng = np.random.default_rng(3)
    scores = rng.normal(size=(16, 4))
    want = sinkhorn_fixed_point(scores, 0.2)
    got = sinkhorn(torch.from_numpy(scores), 0.2, 200).numpy()
    assert np.abs(got - want).max() < 1e-6


def test_sinkhorn_large_scores_do_not_overflow():
    scores = torch.tensor([[4000.0, 0.0], [0.0, 4000.0]], dtype=torch.float64)
    q = sinkhorn(scores, 0.05, 3)
    assert torch.isfinite(q).all()


def test_sinkhorn_input_validation():
    good = torch.zeros(4, 2)
    with pytest.raises(ValueError):
        sinkhorn(torch.tensor([[np.nan, 0.0], [0.0, 1.0]]), 0.1, 3)
    with pytest.raises(ValueError):
        sinkhorn(good, 0.0, 3)
    with pytest.raises(ValueError):
        sinkhorn(good, 0.1, 0)
    with pytest.raises(ValueError):
        sinkhorn(torch.zeros(4), 0.1, 3)


# ---------------------------------------------------------------- clustering


def test_prototype_bank_unit_rows():
    bank = PrototypeBank(16, 8)
    norms = bank.prototypes.norm(dim=1)
    assert torch.allclose(norms, torch.ones(16), atol=1e-5)
    with torch.no_grad():
        bank.prototypes *= 3.0
    bank.renormalize()
    assert torch.allclose(bank.prototypes.norm(dim=1), torch.ones(16), atol=1e-5)
    with pytest.raises(ValueError):
        PrototypeBank(1, 8)


def test_swapped_loss_uniform_predictions_log_k():
    # z orthogonal to every prototype -> all similarities zero -> uniform
    # predictions; cross-entropy against any row-stochastic target is log K
    bank = PrototypeBank(4, 8, dtype=torch.float64)
    with torch.no_grad():
        bank.prototypes.zero_()
        bank.prototypes[:, :4] = torch.eye(4, dtype=torch.float64)
    z = torch.zeros(6, 8, dtype=torch.float64)
    z[:, 6] = 1.0
    loss = swapped_prediction_loss(z, z, bank, epsilon=0.05, tau=0.1)
    assert abs(loss.item() - np.log(4.0)) < 1e-9


def test_swapped_loss_confident_limit_near_zero():
    # embeddings sit exactly on orthonormal prototypes; tiny tau makes the
    # predictions sharp and the balanced targets are already near one-hot
    k = 4
    bank = PrototypeBank(k, k, dtype=torch.float64)
    with torch.no_grad():
        bank.prototypes.copy_(torch.eye(k, dtype=torch.float64))
    z = torch.eye(k, dtype=torch.float64)
    loss = swapped_prediction_loss(z, z, bank, epsilon=0.05, tau=0.01)
    assert 0.0 <= loss.item() < 1e-3


def test_swapped_loss_hand_case():
    # B=2, K=2: evaluate softmax cross-entropies directly with math only
    c = np.array([[1.0, 0.0], [0.6, 0.8]])
    z1 = np.array([[0.8, 0.6], [0.0, 1.0]])
    z2 = np.array([[1.0, 0.0], [0.28, 0.96]])
    eps, tau, iters = 0.1, 0.25, 3

    def rowsoftmax(m):
        e = np.exp(m - m.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    s1, s2 = z1 @ c.T, z2 @ c.T
    q1 = sinkhorn(torch.from_numpy(s1), eps, iters).numpy()
    q2 = sinkhorn(torch.from_numpy(s2), eps, iters).numpy()
    p1, p2 = rowsoftmax(s1 / tau), rowsoftmax(s2 / tau)
    want = 0.5 * (
        -(q1 * np.log(p2)).sum(axis=1).mean() - (q2 * np.log(p1)).sum(axis=1).mean()
    )

    bank = PrototypeBank(2, 2, dtype=torch.float64)
    with torch.no_grad():
        bank.prototypes.copy_(torch.from_numpy(c))
    got = swapped_prediction_loss(
        torch.from_numpy(z1), torch.from_numpy(z2), bank, eps, iters, tau
    )
    assert abs(got.item() - want) < 1e-6


def test_swapped_loss_at_least_target_entropy():
    rng = np.random.default_rng(4)
    bank = PrototypeBank(8, 16, dtype=torch.float64)
    for _ in range(5):
        z1 = F.normalize(torch.from_numpy(rng.normal(size=(32, 16))), dim=1)
        z2 = F.normalize(torch.from_numpy(rng.normal(size=(32, 16))), dim=1)
        with torch.no_grad():
            q1 = sinkhorn(bank.similarities(z1), 0.05, 3)
            q2 = sinkhorn(bank.similarities(z2), 0.05, 3)
        entropy = 0.5 * (
            -(q1 * q1.clamp_min(1e-300).log()).sum(1).mean()
            - (q2 * q2.clamp_min(1e-300).log()).sum(1).mean()
        )
        loss = swapped_prediction_loss(z1, z2, bank, 0.05, 3, 0.1)
        assert loss.item() >= entropy.item() - 1e-9


def test_swapped_loss_explicit_targets_match_autocomputed():
    rng = np.random.default_rng(5)
    bank = PrototypeBank(4, 8, dtype=torch.float64)
    z1 = F.normalize(torch.from_numpy(rng.normal(size=(8, 8))), dim=1)
    z2 = F.normalize(torch.from_numpy(rng.normal(size=(8, 8))), dim=1)
    with torch.no_grad():
        targets = (
            sinkhorn(bank.similarities(z1), 0.05, 3),
            sinkhorn(bank.similarities(z2), 0.05, 3),
        )
    auto = swapped_prediction_loss(z1, z2, bank, 0.05, 3, 0.1)
    explicit = swapped_prediction_loss(z1, z2, bank, 0.05, 3, 0.1, targets=targets)
    assert torch.allclose(auto, explicit, atol=1e-12)


def test_swapped_loss_small_batch_rejected():
    bank = PrototypeBank(2, 4)
    z = torch.randn(1, 4)
    with pytest.raises(ValueError):
        swapped_prediction_loss(z, z, bank)
    with pytest.raises(ValueError):
        swapped_prediction_loss(torch.randn(4, 4), torch.randn(3, 4), bank)


# ---------------------------------------------------------------- info_nce


def test_info_nce_identical_rows_log_n():
    for n in (2, 5, 17):
        z = torch.ones(n, 6, dtype=torch.float64) / np.sqrt(6.0)
        loss = info_nce(z, z, tau=0.2)
        assert abs(loss.item() - np.log(n)) < 1e-9


def test_info_nce_orthogonal_pair_closed_form():
    z = torch.eye(2, dtype=torch.float64)
    loss = info_nce(z, z, tau=1.0)
    assert abs(loss.item() - 0.313262) < 1e-6


def test_info_nce_hardmax_limit():
    z = torch.eye(4, dtype=torch.float64)
    assert info_nce(z, z, tau=0.01).item() < 1e-3


def test_info_nce_permutation_equivariant():
    rng = np.random.default_rng(6)
    z1 = F.normalize(torch.from_numpy(rng.normal(size=(10, 8))), dim=1)
    z2 = F.normalize(torch.from_numpy(rng.normal(size=(10, 8))), dim=1)
    perm = torch.from_numpy(rng.permutation(10))
    base = info_nce(z1, z2, 0.2)
    permuted = info_nce(z1[perm], z2[perm], 0.2)
    assert abs(base.item() - permuted.item()) < 1e-9


def test_info_nce_input_validation():
    with pytest.raises(ValueError):
        info_nce(torch.randn(1, 4), torch.randn(1, 4))
    with pytest.raises(ValueError):
        info_nce(torch.randn(4, 4), torch.randn(3, 4))
    with pytest.raises(ValueError):
        info_nce(torch.randn(4, 4), torch.randn(4, 4), tau=0.0)


# ---------------------------------------------------------------- gradients


def autograd_vs_fd(loss_from_numpy, z0):
    """Compare torch autograd against central differences w.r.t. z."""
    z = torch.from_numpy(z0.copy()).requires_grad_(True)
    loss_from_numpy_t = loss_from_numpy  # same callable works on tensors
    loss = loss_from_numpy_t(z)
    loss.backward()
    analytic = z.grad.numpy()
    numeric = finite_difference_grad(
        lambda arr: float(loss_from_numpy(torch.from_numpy(arr)).detach()), z0
    )
    return relative_grad_error(analytic, numeric)


def test_occ_loss_gradient_matches_fd():
    rng = np.random.default_rng(7)
    head = make_head(rng.normal(size=8), temperature=1.3, unlabeled_weight=0.4)
    labels = torch.tensor([True] * 8 + [False] * 8)
    z0 = rng.normal(size=(16, 8))
    z0[8:12] *= 0.05  # some unlabeled rows strictly inside the hinge margin

    err = autograd_vs_fd(lambda z: occ_loss(z, labels, head), z0)
    assert err < 1e-4


def test_swapped_loss_gradient_matches_fd():
    rng = np.random.default_rng(8)
    bank = PrototypeBank(4, 8, dtype=torch.float64)
    z0 = rng.normal(size=(16, 8))
    other = F.normalize(torch.from_numpy(rng.normal(size=(16, 8))), dim=1)
    with torch.no_grad():
        targets = (
            sinkhorn(bank.similarities(torch.from_numpy(z0)), 0.05, 3),
            sinkhorn(bank.similarities(other), 0.05, 3),
        )
    # targets fixed: finite differences then see exactly the gradient the
    # stop-gradient construction defines
    err = autograd_vs_fd(
        lambda z: swapped_prediction_loss(z, other, bank, 0.05, 3, 0.1, targets),
        z0,
    )
    assert err < 1e-4


def test_info_nce_gradient_matches_fd():
    rng = np.random.default_rng(9)
    z0 = rng.normal(size=(16, 8))
    other = F.normalize(torch.from_numpy(rng.normal(size=(16, 8))), dim=1)
    err = autograd_vs_fd(lambda z: info_nce(z, other, 0.2), z0)
    assert err < 1e-4


def test_cluster_prediction_ce_uniform_targets():
    scores = torch.zeros(4, 8, dtype=torch.float64)
    targets = torch.full((4, 8), 1.0 / 8.0, dtype=torch.float64)
    assert abs(cluster_prediction_ce(targets, scores, 0.1).item() - np.log(8.0)) < 1e-12
