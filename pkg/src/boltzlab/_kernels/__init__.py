"""Assembly-kernel backend selection.

Prefers the compiled extension; falls back to the blocked NumPy
implementation when the extension was not built.  Both expose the same
functions and are cross-checked in the test suite; ``BACKEND`` records
which one is live.
"""
from __future__ import annotations

try:
    from . import _scatter as _impl

    BACKEND = "compiled"
except ImportError:  # extension not built on this machine
    from . import numpy_backend as _impl

    BACKEND = "numpy"

from . import numpy_backend

assemble_k2 = _impl.assemble_k2
assemble_gain_tensor = _impl.assemble_gain_tensor


def get_backend(name: str | None = None):
    """Return the named backend module ("compiled", "numpy" or None=active)."""
    if name in (None, BACKEND):
        return _impl
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        from . import _scatter

        return _scatter
    raise ValueError(f"unknown backend {name!r}")
