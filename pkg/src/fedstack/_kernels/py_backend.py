"""Pure NumPy implementation of the hot network kernels.

Semantics must match the compiled extension in ``_core.pyx``: hidden
layers apply relu, the final layer applies a row-wise softmax with max
subtraction, and the loss is the mean softmax cross-entropy with the
predicted probability floored at 1e-300 before the log.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

_LOG_FLOOR = 1e-300


def forward_probs(weights: list, biases: list, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch, shape (n, K)."""
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
    z = a @ weights[-1].T + biases[-1]
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def loss_and_grads(weights: list, biases: list, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch plus mean parameter gradients.

    Returns ``(loss, grad_weights, grad_biases)`` where the gradient lists
    parallel ``weights`` and ``biases``.
    """
    acts = [x]
    for w, b in zip(weights[:-1], biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w.T + b, 0.0))
    z = acts[-1] @ weights[-1].T + biases[-1]
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    probs = z

    n = x.shape[0]
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, y], _LOG_FLOOR)).sum() / n)

    delta = probs
    delta[rows, y] -= 1.0
    delta /= n

    grad_ws: list = []
    grad_bs: list = []
    for i in range(len(weights) - 1, -1, -1):
        grad_ws.append(delta.T @ acts[i])
        grad_bs.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ weights[i]) * (acts[i] > 0.0)
    grad_ws.reverse()
    grad_bs.reverse()
    return loss, grad_ws, grad_bs
