"""Tour of the reverse-mode autodiff core.

Builds a tiny two-layer computation by hand, runs one backward pass, and
then confirms the analytic gradients against central differences with the
bundled checker.  Everything here is float64; the checker refuses float32.
"""

import numpy as np

from nase import tensor as T
from nase.gradcheck import grad_check

rng = np.random.default_rng(0)

# forward: mean(relu(x W1 + b1) W2), a scalar
x = T.Tensor(rng.normal(size=(4, 3)))
w1 = T.Tensor(rng.normal(size=(3, 5)), requires_grad=True)
b1 = T.Tensor(np.zeros(5), requires_grad=True)
w2 = T.Tensor(rng.normal(size=(5, 1)), requires_grad=True)

hidden = T.relu(T.add_bias(T.matmul(x, w1), b1))
out = T.tmean(T.matmul(hidden, w2))
print(f"forward value: {float(out.data):.6f}")

T.backward(out)
for name, p in (("w1", w1), ("b1", b1), ("w2", w2)):
    print(f"grad {name}: shape {p.grad.shape}, norm {np.linalg.norm(p.grad):.6f}")

# the same graph as a closure over w1, checked coordinate by coordinate
def loss_wrt_w1(w):
    h = T.relu(T.add_bias(T.matmul(x, w), b1))
    return T.tmean(T.matmul(h, w2))

err = grad_check(loss_wrt_w1, T.Tensor(w1.data.copy()), eps=1e-5)
print(f"grad_check max relative error: {err:.3g}")
assert err < 1e-6

# non-smooth example: |x| has a kink at 0, and the checker reports the
# mismatch rather than hiding it
def abs_sum(v):
    return T.tsum(T.pnorm(v, 1))

near_kink = T.Tensor(np.array([[1e-7, 0.5, -0.5]]))
print(f"error at a 1-norm kink (expected large): "
      f"{grad_check(abs_sum, near_kink, eps=1e-5):.3g}")
