"""Lattice kernel backend selection.

Prefers the compiled Cython kernel and falls back to the pure-Python one
when the extension is not built.  Set ``MULTIHAT_LATTICE=python`` (or
``cython``) to force a backend; forcing an unavailable backend raises.
"""

import os

_requested = os.environ.get("MULTIHAT_LATTICE", "").strip().lower()

if _requested in ("py", "python"):
    from . import _lattice_py as _impl

    BACKEND = "python"
elif _requested in ("", "cy", "cython"):
    try:
        from . import _lattice_cy as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested:
            raise
        from . import _lattice_py as _impl

        BACKEND = "python"
else:
    raise ValueError(f"MULTIHAT_LATTICE must be 'python' or 'cython', got {_requested!r}")

lattice_forward = _impl.lattice_forward
lattice_grads = _impl.lattice_grads

__all__ = ["BACKEND", "lattice_forward", "lattice_grads"]
