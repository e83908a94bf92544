import math

import numpy as np
import pytest

from gdca.errors import ContractError
from gdca.optim import AdamState, adam_step
from gdca.tensor import DOUBLE, SINGLE, Tape, Tensor
from gdca.tensor import sum as tsum


def test_first_step_unit_gradient():
    for prec in (SINGLE, DOUBLE):
        p = Tensor(np.zeros(5), requires_grad=True, precision=prec)
        p.grad = np.ones(5, dtype=p.dtype)
        adam_step(AdamState(lr=1e-3), {"p": p})
        np.testing.assert_allclose(p.data, -1e-3, rtol=1e-6)


def test_zero_gradient_no_move():
    p = Tensor([1.0, -2.0], requires_grad=True, precision=DOUBLE)
    p.grad = np.zeros(2)
    adam_step(AdamState(), {"p": p})
    assert p.data.tolist() == [1.0, -2.0]


def test_step_counter():
    s = AdamState()
    p = Tensor([1.0], requires_grad=True, precision=DOUBLE)
    for i in range(3):
        p.grad = np.ones(1)
        adam_step(s, {"p": p})
        assert s.t == i + 1
    assert s.m["p"].shape == p.shape and s.v["p"].shape == p.shape


def test_missing_or_bad_gradient():
    p = Tensor([1.0, 2.0], requires_grad=True, precision=DOUBLE)
    with pytest.raises(ContractError):
        adam_step(AdamState(), {"p": p})
    p.grad = np.ones(3)
    with pytest.raises(ContractError):
        adam_step(AdamState(), {"p": p})


def test_quadratic_trace_matches_scalar_reference():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    theta, m, v = 1.0, 0.0, 0.0
    ref = []
    for k in range(1, 11):
        g = 2 * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** k)) / (math.sqrt(v / (1 - b2 ** k)) + eps)
        ref.append(theta)

    p = Tensor([1.0], requires_grad=True, precision=DOUBLE)
    state = AdamState(lr=lr)
    got = []
    for _ in range(10):
        p.grad = None
        with Tape(DOUBLE) as tape:
            loss = tsum(p * p)
        tape.backward(loss)
        adam_step(state, {"p": p})
        got.append(p.item())
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-9)
