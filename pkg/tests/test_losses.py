import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedproc.errors import DegenerateInputError, ProtocolError, UsageError
from fedproc.losses import (
    RoundSchedule,
    alpha,
    blended_loss,
    cosine_similarity,
    cross_entropy,
    gpc_loss,
    gpc_upper_bound,
)
from fedproc.models import NetworkSpec, build_network, forward_tensors
from fedproc.nn.tensor import Tensor, gradients
from fedproc.prototypes import PrototypeSet


def softmax_xent(logits, y):
    # plain-python reference
    m = max(logits)
    return math.log(sum(math.exp(v - m) for v in logits)) - (logits[y] - m)


# --- cosine similarity ---------------------------------------------------------

@pytest.mark.parametrize("a, b, expected", [
    ((1, 0), (1, 0), 1.0),
    ((1, 0), (0, 2), 0.0),
    ((1, 1), (1, 0), 0.70710678),
])
def test_cosine_examples(a, b, expected):
    assert cosine_similarity(a, b) == pytest.approx(expected, abs=1e-8)


def test_cosine_zero_vector():
    with pytest.raises(DegenerateInputError):
        cosine_similarity((0, 0), (1, 0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=3), st.lists(st.floats(-100, 100), min_size=3, max_size=3))
def test_cosine_bounded_and_symmetric(a, b):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    v = cosine_similarity(a, b)
    assert -1.0 <= v <= 1.0
    assert v == pytest.approx(cosine_similarity(b, a), abs=1e-12)


# --- prototype contrastive loss -----------------------------------------------

def test_orthonormal_prototypes_closed_form():
    oracle = -math.log(math.e / (math.e + 2))
    assert oracle == pytest.approx(0.551444, abs=1e-6)
    loss = gpc_loss(np.array([1.0, 0.0, 0.0]), [0], np.eye(3)).item()
    assert abs(loss - oracle) <= 1e-9


@pytest.mark.parametrize("k", [2, 3, 5, 10])
def test_orthonormal_prototypes_general_k(k):
    z = np.zeros(k)
    z[k - 1] = 2.5
    loss = gpc_loss(z, [k - 1], np.eye(k)).item()
    assert abs(loss - (-math.log(math.e / (math.e + k - 1)))) <= 1e-9


@pytest.mark.parametrize("k", [3, 4, 7])
def test_equidistant_representation_gives_log_k(k):
    loss = gpc_loss(np.ones(k), [1], np.eye(k)).item()
    assert abs(loss - math.log(k)) <= 1e-9
    if k == 3:
        assert loss == pytest.approx(1.098612, abs=1e-6)


def test_matches_scalar_reference(rng):
    z = rng.standard_normal((6, 4))
    c = rng.standard_normal((3, 4))
    y = rng.integers(0, 3, size=6)
    ref = np.mean([
        softmax_xent([cosine_similarity(z[i], c[k]) for k in range(3)], int(y[i])) for i in range(6)
    ])
    assert gpc_loss(z, y, c).item() == pytest.approx(ref, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 10_000))
def test_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((3, 5))
    c = rng.standard_normal((4, 5))
    y = rng.integers(0, 4, size=3)
    assert gpc_loss(z * scale, y, c).item() == pytest.approx(gpc_loss(z, y, c).item(), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(2, 8))
def test_loss_between_zero_and_bound(seed, k):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((4, 6))
    c = rng.standard_normal((k, 6))
    y = rng.integers(0, k, size=4)
    loss = gpc_loss(z, y, c).item()
    assert 0.0 < loss <= gpc_upper_bound(k) + 1e-12


def test_upper_bound_is_attained():
    c = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert gpc_loss(np.array([-1.0, 0.0]), [0], c).item() == pytest.approx(gpc_upper_bound(2), abs=1e-12)


def test_gradient_step_reduces_loss():
    rng = np.random.default_rng(21)
    for _ in range(20):
        z0 = rng.standard_normal((1, 6))
        c = rng.standard_normal((4, 6))
        y = [int(rng.integers(4))]
        z = Tensor(z0, requires_grad=True)
        loss = gpc_loss(z, y, c)
        g = gradients(loss, {"z": z})["z"]
        if np.linalg.norm(g) < 1e-10:
            continue
        assert gpc_loss(z0 - 1e-3 * g, y, c).item() < loss.item()


def test_no_gradient_reaches_prototypes(rng):
    z = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    c = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
    grads = gradients(gpc_loss(z, [0, 1, 1], c), {"z": z, "c": c})
    assert not grads["c"].any()
    assert grads["z"].any()


def test_missing_prototype_is_protocol_error():
    partial = PrototypeSet(np.eye(3), np.array([True, False, True]))
    with pytest.raises(ProtocolError, match="1"):
        gpc_loss(np.ones(3), [0], partial)


def test_zero_representation_is_degenerate():
    with pytest.raises(DegenerateInputError):
        gpc_loss(np.zeros(3), [0], np.eye(3))


# --- cross entropy ---------------------------------------------------------------

def test_uniform_logits_give_log_k():
    assert abs(cross_entropy(np.zeros(10), [4]).item() - math.log(10)) <= 1e-9


def test_saturated_logit():
    s = np.zeros(5)
    s[2] = 50.0
    assert cross_entropy(s, [2]).item() < 1e-9


def test_hand_softmax_value():
    ref = softmax_xent([1.0, 2.0, 3.0], 2)
    assert ref == pytest.approx(0.407606, abs=1e-6)
    assert cross_entropy(np.array([1.0, 2.0, 3.0]), [2]).item() == pytest.approx(ref, abs=1e-12)


def test_large_logits_are_stable():
    loss = cross_entropy(np.array([1000.0, 0.0, -1000.0]), [1]).item()
    assert loss == pytest.approx(1000.0, rel=1e-12)


@pytest.mark.parametrize("y", [[-1], [3], [1.5]])
def test_bad_labels(y):
    with pytest.raises(UsageError):
        cross_entropy(np.zeros(3), y)


# --- alpha schedule ---------------------------------------------------------------

@pytest.mark.parametrize("t, T, expected", [(0, 100, 1.0), (50, 100, 0.5), (99, 100, 0.01)])
def test_alpha_examples(t, T, expected):
    assert alpha(t, T) == pytest.approx(expected, abs=1e-15)
    assert RoundSchedule(t, T).alpha == alpha(t, T)


@pytest.mark.parametrize("t, T", [(5, 5), (6, 5), (-1, 5), (0, 0)])
def test_alpha_rejects_bad_rounds(t, T):
    with pytest.raises(UsageError):
        alpha(t, T)


@given(st.integers(1, 500))
def test_alpha_strictly_decreasing_within_unit_interval(T):
    values = [alpha(t, T) for t in range(T)]
    assert values[0] == 1.0
    assert all(0 < v <= 1 for v in values)
    assert all(a > b for a, b in zip(values, values[1:]))


# --- blended loss -----------------------------------------------------------------

def blend_inputs(rng, n=5, q=4, k=3):
    return (rng.standard_normal((n, q)), rng.standard_normal((n, k)),
            rng.integers(0, k, size=n), rng.standard_normal((k, q)))


def test_first_round_is_pure_prototype_loss(rng):
    z, s, y, c = blend_inputs(rng)
    assert blended_loss(z, s, y, c, RoundSchedule(0, 10)).item() == gpc_loss(z, y, c).item()


def test_midpoint_is_mean(rng):
    z, s, y, c = blend_inputs(rng)
    expected = (gpc_loss(z, y, c).item() + cross_entropy(s, y).item()) / 2
    assert blended_loss(z, s, y, c, 0.5).item() == pytest.approx(expected, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 1), seed=st.integers(0, 10_000))
def test_blend_is_composition(a, seed):
    z, s, y, c = blend_inputs(np.random.default_rng(seed))
    expected = a * gpc_loss(z, y, c).item() + (1 - a) * cross_entropy(s, y).item()
    assert abs(blended_loss(z, s, y, c, a).item() - expected) <= 1e-12


def test_blend_rejects_alpha_outside_unit_interval(rng):
    z, s, y, c = blend_inputs(rng)
    with pytest.raises(UsageError):
        blended_loss(z, s, y, c, 1.5)


def test_classifier_gradient_comes_from_cross_entropy_only(rng):
    spec = NetworkSpec("mlp", (5,), num_classes=3, hidden_dims=(6,), projection_dim=4)
    params = build_network(spec, 0)
    x = rng.standard_normal((8, 5))
    y = rng.integers(0, 3, size=8)
    c = rng.standard_normal((3, 4))
    a = 0.7

    def grads_of(fn):
        leaves = params.leaves()
        _, z, s = forward_tensors(spec, leaves, Tensor(x))
        return gradients(fn(z, s), leaves)

    blend = grads_of(lambda z, s: blended_loss(z, s, y, c, a))
    ce = grads_of(lambda z, s: cross_entropy(s, y))
    for name in params.output_names:
        np.testing.assert_allclose(blend[name], (1 - a) * ce[name], rtol=1e-12, atol=1e-15)
