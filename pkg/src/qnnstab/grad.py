"""Parameter-shift gradients of the QNN output and of the loss.

The shift rule is exact here because each parameter drives a single
``exp(-i theta P / 2)`` gate. Noisy gradients shift the parameters of the
noisy forward map itself.
"""
from __future__ import annotations

import numpy as np

from .circuit import Circuit, forward_batch
from .loss import LossSpec, loss_deriv
from .qcore import Observable

SHIFT = np.pi / 2
# rows of (B * (2K + 1)) states evaluated per forward call
_MAX_ROWS = 1 << 14


def _shifted(thetas):
    """Stack ``theta``, ``theta + s e_j`` and ``theta - s e_j`` for every row."""
    b, k = thetas.shape
    eye = SHIFT * np.eye(k)
    rows = np.concatenate(
        [thetas[:, None, :], thetas[:, None, :] + eye[None], thetas[:, None, :] - eye[None]], axis=1
    )
    return rows.reshape(b * (2 * k + 1), k)


def value_and_grad_batch(circuit: Circuit, thetas, X, obs: Observable, p: float = 0.0):
    """Outputs ``f`` (``(B,)``) and shift-rule gradients (``(B, K)``).

    ``thetas`` and ``X`` pair up row by row; a single row of either is
    broadcast against the other.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    b = max(len(thetas), len(X))
    thetas = np.broadcast_to(thetas, (b, thetas.shape[1]))
    X = np.broadcast_to(X, (b, X.shape[1]))
    k = circuit.K
    per = 2 * k + 1
    chunk = max(1, _MAX_ROWS // per)
    values = np.empty(b)
    grads = np.empty((b, k))
    for start in range(0, b, chunk):
        stop = min(b, start + chunk)
        rows = _shifted(np.ascontiguousarray(thetas[start:stop]))
        xs = np.repeat(X[start:stop], per, axis=0)
        out = forward_batch(circuit, rows, xs, obs, p).reshape(stop - start, per)
        values[start:stop] = out[:, 0]
        grads[start:stop] = (out[:, 1 : k + 1] - out[:, k + 1 :]) / 2.0
    return values, grads


def param_shift_grad(circuit, theta, x, obs, p=0.0):
    """Gradient of ``f_theta(x)`` from ``2K`` shifted evaluations."""
    return value_and_grad_batch(circuit, np.asarray(theta, float)[None], np.asarray(x, float)[None], obs, p)[1][0]


def finite_diff_grad(circuit, theta, x, obs, p=0.0, h=1e-5):
    """Central finite differences; the independent check on the shift rule."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    rows = np.concatenate([theta + h * np.eye(k), theta - h * np.eye(k)])
    out = forward_batch(circuit, rows, np.asarray(x, float)[None], obs, p)
    return (out[:k] - out[k:]) / (2 * h)


def loss_grad(circuit, theta, z, obs, p, spec: LossSpec):
    """Gradient of the loss at one example ``z = (x, y)``."""
    x, y = z
    f, g = value_and_grad_batch(circuit, np.asarray(theta, float)[None], np.asarray(x, float)[None], obs, p)
    return loss_deriv(f[0], y, spec) * g[0]


def per_example_loss_grads(circuit, theta, X, y, obs, p, spec: LossSpec):
    """Loss gradients of every example at a common ``theta``: ``(values, grads)``."""
    f, g = value_and_grad_batch(circuit, np.asarray(theta, float)[None], X, obs, p)
    return f, loss_deriv(f, np.asarray(y, float), spec)[:, None] * g
