"""Tour of the tensor core: building differentiable computations on a tape
and verifying every gradient against central finite differences.

Run:  python demos/01_autodiff_and_gradient_checking.py
"""

import numpy as np

from akgp.tensor import (
    Tape,
    Tensor,
    backward,
    cosine_sim,
    fd_check,
    from_array,
    matmul,
    mean_all,
    mul,
    relu,
    softmax_row,
    sum_all,
    uniform,
)

print("=== forward values ===")
x = from_array([1.0, 2.0, 3.0])
print("softmax([1,2,3]) =", softmax_row(x).data.round(5))
print("cos([1,1],[1,0]) =", round(cosine_sim(from_array([1, 1]), from_array([1, 0])).item(), 5))

print("\n=== reverse-mode gradients ===")
w = Tensor(uniform([3, 2], -1, 1, seed=7).data, requires_grad=True)
v = from_array([[0.5, -1.0, 2.0]])
with Tape() as tape:
    hidden = relu(matmul(v, w))
    loss = sum_all(mul(hidden, hidden))
backward(loss, tape)
print("loss =", round(loss.item(), 6))
print("dloss/dw =\n", w.grad.round(4))

print("\n=== the independent oracle ===")
# fd_check rebuilds the forward pass at perturbed points and compares the
# central difference against the tape's gradient, element by element.
report = fd_check(lambda t: mean_all(mul(t, t)), uniform([4, 4], -2, 2, seed=3))
print("quadratic:", report)

report = fd_check(
    lambda t: sum_all(mul(softmax_row(t), from_array([1.0, -2.0, 0.5, 3.0]))),
    uniform([4], -1, 1, seed=9),
)
print("softmax projection:", report)

print("\n=== catching a wrong backward rule ===")
from akgp.tensor import _emit


def bad_scale(t):
    # claims d/dt (2t) = 3
    def bwd(g):
        return (np.full(t.shape, 3.0) * g,)
    return _emit(t.data * 2.0, (t,), bwd)


report = fd_check(lambda t: sum_all(bad_scale(t)), from_array([1.0, 2.0]))
print("deliberately corrupted rule:", report)
