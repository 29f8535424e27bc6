"""Shared test oracles: finite differences and gradient comparison."""

import numpy as np


def finite_diff_grads(loss_fn, params, h):
    """Central-difference gradients of ``loss_fn()`` with respect to ``params``.

    ``params`` maps names to arrays that ``loss_fn`` reads; entries are
    perturbed in place and restored. Independent of any tape machinery.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat_arr = arr.ravel()
        flat_g = g.ravel()
        for i in range(flat_arr.size):
            original = flat_arr[i]
            flat_arr[i] = original + h
            up = loss_fn()
            flat_arr[i] = original - h
            down = loss_fn()
            flat_arr[i] = original
            flat_g[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def max_rel_error(got, want):
    """Worst per-parameter relative error, inf-norm normalized with a floor."""
    worst = 0.0
    for name in want:
        denom = max(float(np.abs(want[name]).max()), 1e-6)
        err = float(np.abs(got[name] - want[name]).max()) / denom
        worst = max(worst, err)
    return worst
