"""Central finite differences, the independent oracle for backward()."""

import numpy as np

from .tensor import no_grad

__all__ = ["finite_diff_gradient", "max_relative_error"]


def finite_diff_gradient(f, params, step=1e-3):
    """Estimate d(f)/d(param) per coordinate by central differences.

    ``f`` is a deterministic scalar function of ``params`` (a mapping from
    names to numpy arrays); it is called with a mapping of the same shapes.
    Returns a mapping from names to gradient arrays. Run under float64
    precision for meaningful comparisons against backward().
    """
    if step <= 0:
        raise ValueError("finite difference step must be positive")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for name, values in work.items():
        grad = np.zeros_like(values)
        flat = values.reshape(-1)
        gflat = grad.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + step
                hi = float(f(work))
                flat[i] = saved - step
                lo = float(f(work))
                flat[i] = saved
                gflat[i] = (hi - lo) / (2.0 * step)
        grads[name] = grad
    return grads


def max_relative_error(analytic, numeric):
    """Worst-case elementwise discrepancy between two gradient maps.

    Per element the error is ``|a - n| / max(1, |a|, |n|)``: relative for
    large gradients, absolute for vanishing ones, so finite-difference noise
    on near-zero entries does not drown the comparison.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        err = np.abs(np.asarray(a, dtype=np.float64) - n) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
