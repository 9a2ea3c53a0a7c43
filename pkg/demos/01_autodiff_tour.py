"""
A tour of the tensor engine
===========================

Everything in the package is built on a small reverse-mode autodiff engine
over float64 numpy arrays.  This script walks through it.
"""

import numpy as np

from gripplus import tensor as T
from gripplus.gradcheck import check_gradients
from gripplus.tensor import Tensor, no_grad

rng = np.random.default_rng(0)

# A Tensor wraps an array.  Leaves that should receive gradients say so.
a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)

# Ops record themselves on a tape as they run.
out = T.tanh(a @ w)
total = T.tsum(out * out)
total.backward()
print("loss:", total.item())
print("dL/dw:\n", w.grad)

# Gradients can be compared against central finite differences.
report = check_gradients(lambda: T.tsum(T.tanh(a @ w) * T.tanh(a @ w)), {"a": a, "w": w})
print("relative errors:", report)

# The temporal convolution slides a 3-wide kernel along time, per agent.
# Layout is (batch, agents, time, channels).
x = Tensor(rng.standard_normal((1, 2, 6, 4)), requires_grad=True)
kernel = Tensor(rng.standard_normal((5, 4, 3)), requires_grad=True)
y = T.conv_temporal(x, kernel, None, stride=1, padding=1)
print("conv output shape:", y.shape)

# Inside no_grad() nothing is recorded, which is what inference uses.
with no_grad():
    z = T.relu(y)
print("z is a leaf (nothing recorded):", z.is_leaf, "requires grad:", z.requires_grad)
