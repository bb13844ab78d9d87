"""Selects the compiled CRF kernels when available, else the numpy ones.

Set ``ATTRNER_PURE_PYTHON=1`` to force the fallback.
"""
import os
from contextlib import contextmanager

from . import _pure

BACKENDS = {"python": _pure}
try:
    from . import _kernels

    BACKENDS["cython"] = _kernels
except ImportError:
    pass

if "cython" in BACKENDS and os.environ.get("ATTRNER_PURE_PYTHON", "") in ("", "0"):
    NAME = "cython"
else:
    NAME = "python"
_impl = BACKENDS[NAME]

forward_backward = _impl.forward_backward
transition_expectations = _impl.transition_expectations
viterbi = _impl.viterbi


def use(name: str):
    """Switch the active backend for the whole process."""
    global NAME, forward_backward, transition_expectations, viterbi
    impl = BACKENDS[name]
    NAME = name
    forward_backward = impl.forward_backward
    transition_expectations = impl.transition_expectations
    viterbi = impl.viterbi


@contextmanager
def using(name: str):
    """Temporarily switch backends, restoring the previous one on exit."""
    previous = NAME
    use(name)
    try:
        yield
    finally:
        use(previous)
