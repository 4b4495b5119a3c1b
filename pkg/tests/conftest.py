import numpy as np

from prosodiff.autodiff import Tensor


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradcheck(build_loss, x0: np.ndarray, eps: float = 1e-5) -> float:
    """Compare autodiff gradient of build_loss(Tensor) against central FD.

    build_loss maps a requires_grad Tensor to a scalar Tensor. Returns the
    max relative error over all elements of x0.
    """
    t = Tensor(x0.copy(), requires_grad=True)
    loss = build_loss(t)
    loss.backward()
    analytic = t.grad.copy()

    def scalar(arr):
        return float(build_loss(Tensor(arr)).data)

    numeric = numeric_grad(scalar, x0.copy(), eps=eps)
    return max_rel_error(analytic, numeric)
