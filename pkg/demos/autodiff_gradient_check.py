"""
Gradients on a tape, checked by finite differences
==================================================

Operations record themselves on the active tape; ``backward`` walks the
record in reverse.  Here a small conv + leaky ReLU + mean is differentiated
and compared with central differences in double precision.
"""

import numpy as np

from gdca.layers import Conv2dParams, conv2d, leaky_relu
from gdca.tensor import DOUBLE, Tape, Tensor, finite_diff_grad, mean, rel_error

rng = np.random.default_rng(0)
x = Tensor(rng.uniform(-1, 1, (2, 6, 6)), requires_grad=True, precision=DOUBLE)
conv = Conv2dParams.create(2, 3, 3, rng, stride=2, precision=DOUBLE)


def loss_of(inp):
    return mean(leaky_relu(conv2d(inp, conv)))


with Tape(DOUBLE) as tape:
    loss = loss_of(x)
tape.backward(loss)
print("loss", loss.item())

# central differences: two forward passes per input element, no tape needed
fd = finite_diff_grad(loss_of, x)
print("input grad rel. error", rel_error(x.grad, fd))

# parameters accumulate gradients the same way
print("weight grad shape", conv.weight.grad.shape, "bias grad", np.round(conv.bias.grad, 4))

# outside a tape nothing is recorded: plain inference
y = loss_of(x)
print("inference value matches", y.item() == loss.item())
