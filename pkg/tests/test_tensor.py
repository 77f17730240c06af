"""Tape engine semantics: accumulation, topological order, leaf/interior
gradient lifetimes."""

import numpy as np
import pytest

from dpcnet import ops
from dpcnet.tensor import GraphError, Tensor, as_tensor, ones, zeros


def test_scalar_chain_gradient():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = x * x + 2.0 * x + 1.0
    y.backward()
    assert np.allclose(x.grad, 2 * 3.0 + 2.0)


def test_fanout_accumulates():
    # z = x*y + x: dz/dx = y + 1, dz/dy = x
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    y = Tensor(np.array([3.0, 4.0, 5.0]), requires_grad=True)
    z = ops.sum_(x * y + x)
    z.backward()
    assert np.allclose(x.grad, [4.0, 5.0, 6.0])
    assert np.allclose(y.grad, [1.0, 2.0, 3.0])


def test_leaf_grads_accumulate_across_backward_calls():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = ops.sum_(x * 3.0)
    loss.backward()
    assert np.allclose(x.grad, [3.0, 3.0])
    loss2 = ops.sum_(x * 7.0)
    loss2.backward()
    assert np.allclose(x.grad, [10.0, 10.0])


def test_zero_grad_resets():
    x = Tensor(np.array([1.0]), requires_grad=True)
    ops.sum_(x * 2.0).backward()
    x.zero_grad()
    assert x.grad is None


def test_backward_requires_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    y = x * 2.0
    with pytest.raises(GraphError):
        y.backward()


def test_no_grad_tracking_without_requires_grad():
    x = Tensor(np.ones(4))
    y = x * 5.0
    assert not y.requires_grad
    assert y._parents == ()


def test_detach_cuts_graph():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = (x * x).detach() * x
    ops.sum_(y).backward()
    assert np.allclose(x.grad, [4.0])  # only d/dx of (const * x)


def test_broadcast_unbroadcast():
    x = Tensor(np.ones((1, 3)), requires_grad=True)
    y = Tensor(np.ones((4, 3)), requires_grad=True)
    ops.sum_(x + y).backward()
    assert x.grad.shape == (1, 3)
    assert np.allclose(x.grad, 4.0)
    assert np.allclose(y.grad, 1.0)


def test_diamond_graph_single_contribution():
    # y = (x + x) visits x twice through one add node
    x = Tensor(np.array(1.5), requires_grad=True)
    y = x + x
    z = y * y  # z = 4x^2, dz/dx = 8x
    z.backward()
    assert np.allclose(x.grad, 8 * 1.5)


def test_default_dtype_float32():
    assert Tensor([1, 2, 3]).dtype == np.float32
    assert as_tensor([1.0]).dtype == np.float32
    assert Tensor(np.zeros(2, dtype=np.float64)).dtype == np.float64


def test_constructors_and_sugar():
    assert zeros((2, 3)).shape == (2, 3)
    assert ones((2,)).data.sum() == 2.0
    a = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
    b = a.reshape(3, 2).transpose(1, 0)
    assert b.shape == (2, 3)
    ops.sum_(b * b).backward()
    assert np.allclose(a.grad, 2 * a.data)
