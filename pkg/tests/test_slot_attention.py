import numpy as np
import pytest
import torch

import slotprune as sp
from slotprune.errors import NumericalError, ShapeError


def make_module(c=4, d=3, hidden=5, iterations=3, seed=0, dtype=torch.float64):
    module = sp.SlotAttention(c, attn_dim=d, mlp_hidden=hidden, iterations=iterations, seed=seed)
    return module.to(dtype)


def test_sample_zero_sigma_surrogate():
    dist = sp.QueryDistribution.from_arrays(mu=np.arange(4.0), log_sigma=np.zeros(4))
    with torch.no_grad():
        dist.log_sigma.fill_(-np.inf)  # test double: sigma exactly 0
    q = sp.sample_queries(dist, 5, seed=3)
    np.testing.assert_array_equal(q.detach().numpy(), np.tile(np.arange(4.0, dtype=np.float32), (5, 1)))


def test_sample_empty():
    dist = sp.QueryDistribution(6)
    q = sp.sample_queries(dist, 0, seed=0)
    assert q.shape == (0, 6)


def test_sample_monte_carlo_moments():
    dist = sp.QueryDistribution(8)  # mu=0, sigma=1
    q = sp.sample_queries(dist, 10000, seed=12).detach().numpy()
    assert np.abs(q.mean(axis=0)).max() < 0.05
    assert np.abs(q.std(axis=0) - 1.0).max() < 0.05


def test_sample_deterministic():
    dist = sp.QueryDistribution(5)
    a = sp.sample_queries(dist, 7, seed=4)
    b = sp.sample_queries(dist, 7, seed=4)
    assert torch.equal(a, b)
    c = sp.sample_queries(dist, 7, seed=5)
    assert not torch.equal(a, c)


def test_single_slot_attention_all_ones():
    module = make_module()
    rng = np.random.default_rng(0)
    state = module(rng.normal(size=(1, 4)), rng.normal(size=(6, 4)))
    np.testing.assert_allclose(state.attn.detach().numpy(), np.ones((1, 6)))


def test_columns_sum_to_one_every_iteration():
    rng = np.random.default_rng(1)
    for trial in range(20):
        s, n = int(rng.integers(1, 7)), int(rng.integers(1, 12))
        module = make_module(iterations=4, seed=trial)
        state = module(rng.normal(size=(s, 4)), rng.normal(size=(n, 4)), return_history=True)
        assert len(state.attn_history) == 4
        for attn in state.attn_history:
            np.testing.assert_allclose(attn.detach().numpy().sum(axis=0), np.ones(n), atol=1e-6)
        assert (state.attn.detach().numpy() >= 0).all()
        assert (state.attn.detach().numpy() <= 1).all()


def test_token_permutation_equivariance():
    rng = np.random.default_rng(2)
    module = make_module()
    q = rng.normal(size=(3, 4))
    v = rng.normal(size=(7, 4))
    pi = rng.permutation(7)
    base = module(q, v)
    permuted = module(q, v[pi])
    np.testing.assert_allclose(
        permuted.attn.detach().numpy(), base.attn.detach().numpy()[:, pi], atol=1e-6
    )
    np.testing.assert_allclose(
        permuted.slots.detach().numpy(), base.slots.detach().numpy(), atol=1e-6
    )


def test_query_permutation_equivariance():
    rng = np.random.default_rng(3)
    module = make_module()
    q = rng.normal(size=(4, 4))
    v = rng.normal(size=(6, 4))
    rho = rng.permutation(4)
    base = module(q, v)
    permuted = module(q[rho], v)
    np.testing.assert_allclose(
        permuted.slots.detach().numpy(), base.slots.detach().numpy()[rho], atol=1e-6
    )
    np.testing.assert_allclose(
        permuted.attn.detach().numpy(), base.attn.detach().numpy()[rho], atol=1e-6
    )


def test_batched_matches_single():
    rng = np.random.default_rng(4)
    module = make_module()
    qs = rng.normal(size=(3, 2, 4))
    vs = rng.normal(size=(3, 5, 4))
    batched = module(qs, vs)
    for b in range(3):
        single = module(qs[b], vs[b])
        np.testing.assert_allclose(batched.slots[b].detach().numpy(), single.slots.detach().numpy(), atol=1e-10)
        np.testing.assert_allclose(batched.attn[b].detach().numpy(), single.attn.detach().numpy(), atol=1e-10)


def test_parameter_gradients_match_finite_differences():
    # s=2, n=5, c=4, T=3 instance at 64-bit; scalar loss touches slots and attn.
    torch.manual_seed(0)
    module = make_module(iterations=3, seed=5)
    rng = np.random.default_rng(5)
    q = torch.tensor(rng.normal(size=(2, 4)), requires_grad=True)
    v = torch.tensor(rng.normal(size=(5, 4)), requires_grad=True)
    w_slots = torch.tensor(rng.normal(size=(2, 4)))
    w_attn = torch.tensor(rng.normal(size=(2, 5)))

    def loss_fn():
        state = module(q, v)
        return (state.slots * w_slots).sum() + (state.attn * w_attn).sum()

    loss = loss_fn()
    params = [q, v] + list(module.parameters())
    grads = torch.autograd.grad(loss, params)

    eps = 1e-5
    max_err = 0.0
    with torch.no_grad():
        for param, grad in zip(params, grads):
            flat = param.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.numel()):
                orig = flat[idx].item()
                flat[idx] = orig + eps
                f_plus = float(loss_fn())
                flat[idx] = orig - eps
                f_minus = float(loss_fn())
                flat[idx] = orig
                numeric = (f_plus - f_minus) / (2 * eps)
                denom = max(abs(gflat[idx].item()), abs(numeric), 1e-6)
                max_err = max(max_err, abs(gflat[idx].item() - numeric) / denom)
    assert max_err <= 1e-4


def test_non_finite_inputs_raise_numerical_error():
    module = make_module(dtype=torch.float64)
    with torch.no_grad():
        module.mlp[2].weight.fill_(1e308)
    rng = np.random.default_rng(6)
    with pytest.raises(NumericalError, match="iteration"):
        module(rng.normal(size=(2, 4)), rng.normal(size=(5, 4)))


def test_shape_validation():
    module = make_module()
    rng = np.random.default_rng(7)
    with pytest.raises(ShapeError):
        module(rng.normal(size=(2, 3)), rng.normal(size=(5, 4)))  # wrong query width
    with pytest.raises(ShapeError):
        module(rng.normal(size=(2, 4)), rng.normal(size=(0, 4)))  # no tokens
    with pytest.raises(ShapeError):
        module(rng.normal(size=(2, 4)), rng.normal(size=(2, 5, 4)))  # mixed batching


def test_from_arrays_validation():
    with pytest.raises(sp.ValidationError):
        sp.QueryDistribution.from_arrays(np.array([np.inf, 0.0]), np.zeros(2))
    with pytest.raises(ShapeError):
        sp.QueryDistribution.from_arrays(np.zeros(3), np.zeros(2))
