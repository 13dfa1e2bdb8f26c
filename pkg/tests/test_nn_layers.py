import numpy as np
import pytest

from _graphs import GRAD_LAYERS, is_train_mode, layer_graph
from ddos_ensemble.base_models import (ExtractorConfig, Chain, build_sa_cnn_extractor, build_temp_head,
                                       extractor_output_length)
from ddos_ensemble.errors import GeometryError, StateError
from ddos_ensemble.nn import gradcheck
from ddos_ensemble.nn.layers import Dense, ReLU, Sequential, backward
from ddos_ensemble.nn.optim import AdamState, adam_step
from ddos_ensemble.nn.params import dense_params


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", GRAD_LAYERS + ("batchnorm_train", "conv1d_strided", "lstm_plain",
                                                "conv_attention"))
def test_gradients_match_finite_differences(kind, seed):
    graph, x = layer_graph(kind, seed)
    report = gradcheck.finite_diff_check(graph, x, h=1e-6, tol=1e-5, train=is_train_mode(kind))
    assert report.passed, report.summary()
    assert report.per_parameter


def test_fault_injection_is_flagged():
    graph, x = layer_graph("dense", 0)
    loss = gradcheck.projection_loss()
    grads = graph.backward(loss(graph.forward(x))[1])
    grads = {k: v.copy() for k, v in grads.items()}
    grads["fc.weight"].flat[3] *= 1.1
    report = gradcheck.finite_diff_check(graph, x, loss=loss, analytic=grads)
    assert report.failed == ["fc.weight"]
    assert not report.passed


def test_zero_parameter_graph_passes():
    report = gradcheck.finite_diff_check(Sequential([ReLU()]), np.ones((2, 3)))
    assert report.per_parameter == {}
    assert report.passed


def test_dense_sigmoid_bce_single_sample():
    rng = np.random.default_rng(7)
    graph = Sequential([Dense(4, 1, "sigmoid", rng, name="out")])
    report = gradcheck.finite_diff_check(graph, (rng.normal(size=(1, 4)), np.array([[1.0]])))
    assert report.passed, report.summary()


def test_full_extractor_with_temporary_head():
    cfg = ExtractorConfig(conv1_filters=4, conv2_filters=3, seed=11)
    ext = build_sa_cnn_extractor(cfg, 5)
    head = build_temp_head(cfg, 5, 12)
    x = np.random.default_rng(13).uniform(size=(6, 1, 5))
    y = np.array([[0.0], [1.0], [1.0], [0.0], [1.0], [0.0]])
    chain = Chain(ext, head)

    # finite differences through the chain, batch norm in training mode
    merged = Sequential(ext.layers + head.layers)
    report = gradcheck.finite_diff_check(merged, (x, y), tol=1e-4, train=True)
    assert report.passed, report.summary()
    chain_grads = chain.backward(gradcheck.bce_objective(y)(chain.forward(x, train=True,
                                                                          update_stats=False))[1])
    assert len(chain_grads) == len(merged.parameters())


def test_dead_relu_has_zero_weight_gradient():
    d = Dense(params=dense_params(np.array([[1.0, 1.0]]), np.array([-10.0]), "relu"), name="d")
    g = Sequential([d])
    g.forward(np.array([[1.0, 2.0]]))
    grads = g.backward(np.ones((1, 1)))
    np.testing.assert_array_equal(grads["d.weight"], 0)


def test_backward_before_forward():
    with pytest.raises(StateError):
        Sequential([Dense(2, 1, rng=np.random.default_rng(0))]).backward(np.ones((1, 1)))
    with pytest.raises(StateError):
        backward(Sequential([ReLU()]), np.ones(1))


def test_backward_visits_layers_in_reverse():
    graph, x = layer_graph("conv_attention", 0)
    out = graph.forward(x)
    grads = graph.backward(np.ones_like(out))
    assert graph.backward_trace == ["attn", "swap", "conv"]
    params = graph.parameters()
    assert set(grads) == set(params)
    for k in params:
        assert grads[k].shape == params[k].shape


def test_input_gradient_can_be_skipped():
    graph, x = layer_graph("conv1d", 0)
    out = graph.forward(x)
    full = graph.backward(np.ones_like(out))
    assert graph.input_grad.shape == x.shape
    graph.forward(x)
    skipped = graph.backward(np.ones_like(out), input_grad=False)
    assert graph.input_grad is None
    for k in full:
        np.testing.assert_array_equal(full[k], skipped[k])


def test_outputs_finite_after_passes():
    for kind in GRAD_LAYERS:
        graph, x = layer_graph(kind, 3)
        out = graph.forward(x, train=True)
        grads = graph.backward(np.ones_like(out))
        assert np.isfinite(out).all()
        assert all(np.isfinite(g).all() for g in grads.values())


def test_extractor_parameter_count():
    cfg = ExtractorConfig()
    k, c1, c2 = cfg.kernel_size, cfg.conv1_filters, cfg.conv2_filters
    expect = (k * 1 * c1 + c1) + 2 * c1 + (k * c1 * c2 + c2) + 2 * c2 + 3 * c2 * c2
    for n_features in (7, 20):
        net = build_sa_cnn_extractor(cfg, n_features)
        assert net.parameter_count() == expect == 37824


def test_extractor_shapes_and_seed():
    cfg = ExtractorConfig(seed=5)
    net = build_sa_cnn_extractor(cfg, 20)
    x = np.random.default_rng(0).uniform(size=(3, 1, 20))
    h = x
    for layer in net.layers:
        h = layer.forward(h)
        if layer.name == "relu2":
            assert h.shape == (3, 64, 20)
    assert h.shape == (3, 20, 64)
    assert extractor_output_length(cfg, 20) == 20
    again = build_sa_cnn_extractor(ExtractorConfig(seed=5), 20)
    for k, v in net.parameters().items():
        np.testing.assert_array_equal(v, again.parameters()[k])


def test_extractor_rejects_short_input():
    with pytest.raises(GeometryError):
        build_sa_cnn_extractor(ExtractorConfig(kernel_size=3), 2)


# ---------------------------------------------------------------- adam

def test_adam_zero_gradients_leave_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_closed_form():
    p = {"w": np.array([0.0])}
    state = AdamState()
    adam_step(p, {"w": np.array([1.0])}, state)
    assert p["w"][0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)
    assert state.step_count == 1
    assert state.first_moment["w"].shape == p["w"].shape


def test_adam_two_identical_steps():
    p = {"w": np.array([0.0])}
    state = AdamState()
    adam_step(p, {"w": np.array([1.0])}, state)
    d1 = p["w"][0]
    adam_step(p, {"w": np.array([1.0])}, state)
    d2 = p["w"][0] - d1
    assert d1 < 0 and d2 < 0
    assert abs(d2) <= abs(d1) + 1e-6
    assert state.step_count == 2


def test_adam_shape_mismatch():
    with pytest.raises(GeometryError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
