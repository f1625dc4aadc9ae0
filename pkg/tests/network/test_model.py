import numpy as np
import pytest

from canm.data import synth_pair
from canm.errors import ShapeError
from canm.matching import count_similarities
from canm.metrics.losses import l1_loss
from canm.network import NetworkConfig, build, build_variant, count_params_flops
from canm.tensor import Tensor, count_macs, no_grad


def _inputs(size=16, seed=0):
    pair = synth_pair(seed, size, size, 4)
    return Tensor(pair.ref[None, None]), Tensor(pair.lr_interp[None, None])


def test_zero_head_returns_lr_input_exactly():
    net = build(NetworkConfig.from_preset("micro"), seed=3)
    ref, lr = _inputs()
    with no_grad():
        out = net(ref, lr)
    np.testing.assert_array_equal(out.data, lr.data)


def test_build_is_deterministic_per_seed():
    config = NetworkConfig.from_preset("micro")
    a, b, c = build(config, 1), build(config, 1), build(config, 2)
    for (_, p), (_, q), (_, r) in zip(a.named_parameters(), b.named_parameters(), c.named_parameters()):
        np.testing.assert_array_equal(p.data, q.data)
    assert any(not np.array_equal(p.data, r.data) for (_, p), (_, r) in zip(a.named_parameters(), c.named_parameters()))


def test_network_reads_every_config_field():
    net = build(NetworkConfig.from_preset("desk"))
    assert net.consumed_fields == set(NetworkConfig.model_fields)


def test_forward_rejects_wrong_inputs():
    net = build(NetworkConfig.from_preset("micro"))
    ref, lr = _inputs()
    with pytest.raises(ShapeError):
        net(ref, Tensor(np.zeros((1, 1, 16, 32))))
    with pytest.raises(ShapeError):
        net(Tensor(np.zeros((1, 2, 16, 16))), lr)


def test_matches_are_captured_per_level():
    net = build(NetworkConfig.from_preset("micro"))
    ref, lr = _inputs()
    matches = {}
    with no_grad():
        net(ref, lr, matches=matches)
    assert sorted(matches) == [1, 2, 3]
    assert matches[1].grid == (8, 8)
    assert matches[3].grid == (2, 2)


def test_without_matching_nothing_is_captured():
    net = build_variant(NetworkConfig.from_preset("micro"), "wo_fm")
    ref, lr = _inputs()
    matches = {}
    with no_grad():
        net(ref, lr, matches=matches)
    assert matches == {}
    assert not any(".adain." in name for name, _ in net.named_parameters())


def test_desk_macs_match_instrumented_count():
    net = build(NetworkConfig.from_preset("desk"))
    ref, lr = _inputs(size=64)
    with no_grad(), count_macs() as counter:
        net(ref, lr)
    params, macs = count_params_flops(net)
    assert macs == counter.total
    assert params == net.num_parameters() > 0


@pytest.mark.parametrize("variant", ["wo_ca", "wo_ps", "cnn_only", "gfm"])
def test_variant_macs_match_instrumented_count(variant):
    net = build_variant(NetworkConfig.from_preset("desk"), variant)
    ref, lr = _inputs(size=64)
    with no_grad(), count_macs() as counter:
        out = net(ref, lr)
    assert out.shape == (1, 1, 64, 64)
    assert net.macs() == counter.total


def test_ablations_change_parameter_count():
    config = NetworkConfig.from_preset("desk")
    full = build(config).num_parameters()
    assert build_variant(config, "wo_ca").num_parameters() < full
    assert build_variant(config, "wo_wa").num_parameters() < full
    assert build_variant(config, "wo_fm").num_parameters() < full


@pytest.mark.slow
def test_full_size_forward():
    net = build(NetworkConfig())
    ref, lr = _inputs(size=256)
    with no_grad():
        out = net(ref, lr)
    assert out.shape == (1, 1, 256, 256)


def test_global_matching_compares_more_pairs_than_neighbourhoods():
    ref, lr = _inputs(size=64)
    totals = {}
    for variant in ("default", "gfm"):
        net = build_variant(NetworkConfig.from_preset("desk"), variant)
        with no_grad(), count_similarities() as counter:
            net(ref, lr)
        totals[variant] = counter.total
    assert totals["gfm"] > totals["default"] > 0


def _randomized_head(net, seed=0):
    rng = np.random.default_rng(seed)
    weight = net.head.project.weight
    weight.data = 0.02 * rng.standard_normal(weight.shape)
    return net


def test_batch_order_does_not_mix_samples():
    net = _randomized_head(build(NetworkConfig.from_preset("micro"), seed=2))
    pairs = [synth_pair(seed, 16, 16, 4) for seed in (0, 1)]
    ref = np.stack([p.ref[None] for p in pairs])
    lr = np.stack([p.lr_interp[None] for p in pairs])
    with no_grad():
        forward = net(Tensor(ref), Tensor(lr)).data
        swapped = net(Tensor(ref[::-1].copy()), Tensor(lr[::-1].copy())).data
    np.testing.assert_allclose(swapped, forward[::-1], rtol=0, atol=1e-12)


def test_repeated_backward_gives_identical_gradients():
    net = _randomized_head(build(NetworkConfig.from_preset("micro"), seed=4))
    pair = synth_pair(0, 16, 16, 4)
    ref, lr = _inputs()
    target = Tensor(pair.hr_target[None, None])
    grads = []
    for _ in range(2):
        net.zero_grad()
        l1_loss(net(ref, lr), target).backward()
        grads.append({name: p.grad.copy() for name, p in net.named_parameters() if p.grad is not None})
    assert grads[0].keys() == grads[1].keys() and grads[0]
    for name in grads[0]:
        np.testing.assert_array_equal(grads[0][name], grads[1][name])
