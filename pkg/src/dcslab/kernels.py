"""Compute kernels for the dense-layer hot path.

Two interchangeable backends implement the same batched operations:

* ``numba`` -- explicit loops compiled with ``@njit`` (default when numba
  imports cleanly),
* ``numpy`` -- vectorized fallback with identical semantics.

The ``DCSLAB_BACKEND`` environment variable picks the backend at import
time (``auto`` | ``numba`` | ``numpy``); :func:`use_backend` switches at
runtime, which the benchmark and the agreement tests rely on. Both
backends are pure float64 and deterministic; they may differ in the last
few ulps only because of summation order.

Activation kinds are passed as plain ints (see ``nn.Activation``).
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

IDENTITY = 0
SIGMOID = 1
RELU = 2
TANH = 3

_ENV_VAR = "DCSLAB_BACKEND"


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _sigmoid_np(z):
    # two-branch form: no overflow for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate_np(Z, kind):
    if kind == IDENTITY:
        return Z.copy()
    if kind == SIGMOID:
        return _sigmoid_np(Z)
    if kind == RELU:
        return np.maximum(Z, 0.0)
    if kind == TANH:
        return np.tanh(Z)
    raise ValueError(f"unknown activation code {kind}")


def _activation_grad_np(Z, kind):
    if kind == IDENTITY:
        return np.ones_like(Z)
    if kind == SIGMOID:
        s = _sigmoid_np(Z)
        return s * (1.0 - s)
    if kind == RELU:
        # derivative at exactly 0 is defined as 0
        return (Z > 0).astype(np.float64)
    if kind == TANH:
        t = np.tanh(Z)
        return 1.0 - t * t
    raise ValueError(f"unknown activation code {kind}")


def _dense_forward_np(X, W, b, kind):
    Z = X @ W.T + b
    return Z, _activate_np(Z, kind)


def _dense_backward_np(X, W, Z, dA, kind):
    dZ = dA * _activation_grad_np(Z, kind)
    return dZ.T @ X, dZ.sum(axis=0), dZ @ W


def _huber_np(X, Xr, delta):
    R = X - Xr
    l1 = np.abs(R).sum(axis=1)
    quad = l1 <= delta
    losses = np.where(quad, 0.5 * (R * R).sum(axis=1), delta * l1 - 0.5 * delta * delta)
    grads = np.where(quad[:, None], -R, -delta * np.sign(R))
    return losses, grads


def _build_numpy_backend() -> SimpleNamespace:
    return SimpleNamespace(
        name="numpy",
        dense_forward=_dense_forward_np,
        dense_backward=_dense_backward_np,
        huber=_huber_np,
        activate=_activate_np,
        activation_grad=_activation_grad_np,
    )


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

def _build_numba_backend() -> SimpleNamespace:
    from numba import njit

    @njit(cache=True)
    def _act(z, kind):
        if kind == SIGMOID:
            if z >= 0.0:
                return 1.0 / (1.0 + math.exp(-z))
            ez = math.exp(z)
            return ez / (1.0 + ez)
        if kind == RELU:
            return z if z > 0.0 else 0.0
        if kind == TANH:
            return math.tanh(z)
        return z

    @njit(cache=True)
    def _act_grad(z, kind):
        if kind == SIGMOID:
            if z >= 0.0:
                s = 1.0 / (1.0 + math.exp(-z))
            else:
                ez = math.exp(z)
                s = ez / (1.0 + ez)
            return s * (1.0 - s)
        if kind == RELU:
            return 1.0 if z > 0.0 else 0.0
        if kind == TANH:
            t = math.tanh(z)
            return 1.0 - t * t
        return 1.0

    @njit(cache=True)
    def dense_forward(X, W, b, kind):
        n_rows, n_in = X.shape
        n_out = W.shape[0]
        Z = np.empty((n_rows, n_out))
        A = np.empty((n_rows, n_out))
        for i in range(n_rows):
            for o in range(n_out):
                s = b[o]
                for j in range(n_in):
                    s += W[o, j] * X[i, j]
                Z[i, o] = s
                A[i, o] = _act(s, kind)
        return Z, A

    @njit(cache=True)
    def dense_backward(X, W, Z, dA, kind):
        n_rows, n_in = X.shape
        n_out = W.shape[0]
        dW = np.zeros((n_out, n_in))
        db = np.zeros(n_out)
        dX = np.zeros((n_rows, n_in))
        for i in range(n_rows):
            for o in range(n_out):
                dz = dA[i, o] * _act_grad(Z[i, o], kind)
                db[o] += dz
                for j in range(n_in):
                    dW[o, j] += dz * X[i, j]
                    dX[i, j] += dz * W[o, j]
        return dW, db, dX

    @njit(cache=True)
    def huber(X, Xr, delta):
        n_rows, n_cols = X.shape
        losses = np.empty(n_rows)
        grads = np.empty((n_rows, n_cols))
        for i in range(n_rows):
            l1 = 0.0
            l2 = 0.0
            for j in range(n_cols):
                r = X[i, j] - Xr[i, j]
                l1 += abs(r)
                l2 += r * r
            if l1 <= delta:
                losses[i] = 0.5 * l2
                for j in range(n_cols):
                    grads[i, j] = -(X[i, j] - Xr[i, j])
            else:
                losses[i] = delta * l1 - 0.5 * delta * delta
                for j in range(n_cols):
                    r = X[i, j] - Xr[i, j]
                    if r > 0.0:
                        grads[i, j] = -delta
                    elif r < 0.0:
                        grads[i, j] = delta
                    else:
                        grads[i, j] = 0.0
        return losses, grads

    @njit(cache=True)
    def activate(Z, kind):
        n_rows, n_cols = Z.shape
        A = np.empty((n_rows, n_cols))
        for i in range(n_rows):
            for j in range(n_cols):
                A[i, j] = _act(Z[i, j], kind)
        return A

    @njit(cache=True)
    def activation_grad(Z, kind):
        n_rows, n_cols = Z.shape
        G = np.empty((n_rows, n_cols))
        for i in range(n_rows):
            for j in range(n_cols):
                G[i, j] = _act_grad(Z[i, j], kind)
        return G

    return SimpleNamespace(
        name="numba",
        dense_forward=dense_forward,
        dense_backward=dense_backward,
        huber=huber,
        activate=activate,
        activation_grad=activation_grad,
    )


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_BACKENDS: dict[str, SimpleNamespace] = {"numpy": _build_numpy_backend()}
try:
    _BACKENDS["numba"] = _build_numba_backend()
except ImportError:  # pragma: no cover - depends on environment
    pass


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def use_backend(name: str) -> None:
    """Switch the active kernel backend ("numpy" or "numba")."""
    global _active
    if name not in _BACKENDS:
        raise RuntimeError(
            f"backend {name!r} is not available; choices: {available_backends()}"
        )
    _active = _BACKENDS[name]


def get_backend(name: str) -> SimpleNamespace:
    if name not in _BACKENDS:
        raise RuntimeError(
            f"backend {name!r} is not available; choices: {available_backends()}"
        )
    return _BACKENDS[name]


def active_backend() -> str:
    return _active.name


def _initial_backend() -> SimpleNamespace:
    requested = os.environ.get(_ENV_VAR, "auto").lower()
    if requested == "auto":
        return _BACKENDS.get("numba", _BACKENDS["numpy"])
    if requested not in ("numpy", "numba"):
        raise ValueError(
            f"{_ENV_VAR}={requested!r} is not one of 'auto', 'numba', 'numpy'"
        )
    if requested not in _BACKENDS:
        raise RuntimeError(f"{_ENV_VAR}={requested!r} but that backend is unavailable")
    return _BACKENDS[requested]


_active = _initial_backend()


# ---------------------------------------------------------------------------
# dispatching API (what nn.py calls)
# ---------------------------------------------------------------------------

def dense_forward_batch(X, W, b, kind: int):
    """Affine + activation for a batch: returns (pre_activation, output)."""
    return _active.dense_forward(X, W, b, kind)


def dense_backward_batch(X, W, Z, dA, kind: int):
    """Backprop one dense layer. Returns (dW, db, dX) for output grad dA."""
    return _active.dense_backward(X, W, Z, dA, kind)


def huber_batch(X, Xr, delta: float):
    """Row-wise vector-level Huber. Returns (losses, dL/dXr)."""
    return _active.huber(X, Xr, delta)


def activate_batch(Z, kind: int):
    return _active.activate(Z, kind)


def activation_grad_batch(Z, kind: int):
    return _active.activation_grad(Z, kind)


def warm_up() -> None:
    """Trigger jit compilation of the active backend on tiny inputs."""
    X = np.zeros((1, 2))
    W = np.zeros((2, 2))
    b = np.zeros(2)
    for kind in (IDENTITY, SIGMOID, RELU, TANH):
        Z, A = dense_forward_batch(X, W, b, kind)
        dense_backward_batch(X, W, Z, A, kind)
        activate_batch(Z, kind)
        activation_grad_batch(Z, kind)
    huber_batch(X, X + 1.0, 1.0)
    huber_batch(X, X, 1.0)
