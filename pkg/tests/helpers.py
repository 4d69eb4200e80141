"""Shared test oracles: central finite differences and a spectral-domain
reference for the graph convolution."""

import numpy as np

from agresnet.autodiff import Tape, Tensor


def numeric_grad(f, tensor, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. tensor, elementwise.

    f must recompute the forward pass from the tensor's current data.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f().data)
        flat[i] = orig - h
        lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * h)
    return grad


def analytic_grads(f, tensors):
    """Run f() under a tape and return each tensor's accumulated gradient."""
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]


def max_rel_err(analytic, numeric):
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_grads(f, tensors, tol=1e-5, h=1e-5):
    """Assert analytic and finite-difference gradients agree for every tensor."""
    got = analytic_grads(f, tensors)
    for tensor, analytic in zip(tensors, got):
        numeric = numeric_grad(f, tensor, h=h)
        err = max_rel_err(analytic, numeric)
        assert err < tol, f"gradient mismatch {err:.3g} for shape {tensor.shape}"


def random_weighting(rng, shape):
    """Fixed random projection turning a tensor-valued op into a scalar loss."""
    return Tensor(rng.standard_normal(shape))


def spectral_conv_reference(x, scaled_matrix, theta):
    """Eigendecomposition account of the graph filter: project onto the
    eigenbasis, apply the Chebyshev polynomial of each eigenvalue, mix
    input features with the per-order coefficient maps."""
    lam, u = np.linalg.eigh(scaled_matrix)
    k = theta.shape[0]
    t = np.zeros((k, lam.size))
    t[0] = 1.0
    if k > 1:
        t[1] = lam
    for i in range(2, k):
        t[i] = 2.0 * lam * t[i - 1] - t[i - 2]
    out = np.zeros((x.shape[0], x.shape[1], theta.shape[2]))
    for i in range(k):
        filt = u @ np.diag(t[i]) @ u.T
        out += np.einsum("nm,bmf,fg->bng", filt, x, theta[i])
    return out
