"""Central finite-difference verification of analytic gradients.

The checker perturbs every element of every parameter by +/- eps, so it is
O(#params) forward passes; callers size their models accordingly.  The error
metric is per parameter tensor:

    err = ||g_fd - g_an|| / max(||g_fd||, ||g_an||, 1e-12)

which averages out the float32 rounding noise that dominates per-element
comparisons.  A pair of zero gradients scores 0 (some parameters are provably
gradient-free: softmax attention is invariant to logit terms that are constant
across the normalised axis).
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter, backward


class NondeterministicForwardError(RuntimeError):
    pass


def finite_difference_gradcheck(forward_fn, params, eps: float = 1e-3) -> dict:
    """Max relative error per parameter for `forward_fn() -> scalar Tensor`.

    `forward_fn` must be deterministic and close over `params`; we verify
    determinism by evaluating it twice before touching anything.
    """
    params = list(params)
    l0 = forward_fn()
    l1 = forward_fn()
    if l0.data.tobytes() != l1.data.tobytes():
        raise NondeterministicForwardError(
            "forward_fn returned different values on identical inputs")

    for p in params:
        p.grad = None
    loss = forward_fn()
    backward(loss)
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for p in params}

    errors = {}
    for p in params:
        flat = p.data.reshape(-1)
        fd = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(forward_fn().data)
            flat[i] = orig - eps
            fm = float(forward_fn().data)
            flat[i] = orig
            fd[i] = (fp - fm) / (2.0 * eps)
        an = analytic[p.name].reshape(-1).astype(np.float64)
        denom = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-12)
        errors[p.name] = float(np.linalg.norm(fd - an) / denom)
    return errors


def max_gradcheck_error(forward_fn, params, eps: float = 1e-3) -> float:
    return max(finite_difference_gradcheck(forward_fn, params, eps).values())
