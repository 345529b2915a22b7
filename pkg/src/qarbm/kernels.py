"""Selects the numerical core at import: compiled extension if built, else numpy.

Both backends expose the same four functions with identical semantics; they agree
to floating-point tolerance (not bitwise, since summation orders differ). The
active backend's name is in BACKEND.
"""

from . import _core_py

try:
    from . import _core as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _core_py
    BACKEND = "python"

visible_logweights = _impl.visible_logweights
visible_moments = _impl.visible_moments
gibbs_halfstep = _impl.gibbs_halfstep
batch_energies = _impl.batch_energies


def available_backends():
    """Name -> module for every importable backend (for tests and benchmarks)."""
    out = {"python": _core_py}
    if _impl is not _core_py:
        out["compiled"] = _impl
    return out
