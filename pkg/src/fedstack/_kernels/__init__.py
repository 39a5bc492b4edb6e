"""Kernel backend selection.

The package ships two implementations of the dense-network hot path: a
Cython extension (``_core``) and a pure NumPy fallback (``py_backend``).
The compiled one is preferred when built. Set ``FEDSTACK_BACKEND`` to
``python`` or ``compiled`` to force a choice; forcing ``compiled`` when
the extension is missing raises at import time.

Both backends are deterministic and agree to floating-point roundoff;
they are not bit-identical because the NumPy path uses BLAS matmuls.
"""

from __future__ import annotations

import os

from fedstack._kernels import py_backend

_requested = os.environ.get("FEDSTACK_BACKEND", "auto").strip().lower() or "auto"

if _requested in ("auto", "compiled", "cython", "c"):
    try:
        from fedstack._kernels import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested != "auto":
            raise ImportError(
                "FEDSTACK_BACKEND requested the compiled kernels but the "
                "extension is not built; run 'pip install -e .' or "
                "'python setup.py build_ext --inplace'"
            ) from None
        _impl = py_backend
        BACKEND = "python"
elif _requested in ("python", "py", "numpy"):
    _impl = py_backend
    BACKEND = "python"
else:
    raise ValueError(f"unknown FEDSTACK_BACKEND value: {_requested!r}")

forward_probs = _impl.forward_probs
loss_and_grads = _impl.loss_and_grads

__all__ = ["BACKEND", "forward_probs", "loss_and_grads", "py_backend"]
