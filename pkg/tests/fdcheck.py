"""Central finite-difference gradient oracle, independent of the autodiff path."""

import numpy as np


def numeric_grad(f, arrays, h=1e-5):
    """d f() / d arr for each array, by central differences.

    f must be a zero-argument callable returning a float and reading the
    arrays by reference; entries are perturbed in place and restored.
    """
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = arr[idx]
            arr[idx] = saved + h
            f_plus = f()
            arr[idx] = saved - h
            f_minus = f()
            arr[idx] = saved
            grad[idx] = (f_plus - f_minus) / (2.0 * h)
        grads.append(grad)
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4):
    """Relative check |a - n| / max(1, |a|) <= rtol, elementwise."""
    for a, n in zip(analytic, numeric):
        a = np.asarray(a)
        n = np.asarray(n)
        assert a.shape == n.shape, f"shape mismatch {a.shape} vs {n.shape}"
        err = np.abs(a - n) / np.maximum(1.0, np.abs(a))
        assert err.max() <= rtol, f"gradient mismatch: max relative error {err.max():.3g}"
