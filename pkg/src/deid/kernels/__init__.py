"""LSTM and chain-CRF inner loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``DEID_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is loaded instead.  ``BACKEND`` names the
active one.
"""
import os

from . import _pure

if os.environ.get("DEID_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pure
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = _pure

BACKEND = "compiled" if _impl is not _pure else "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
crf_forward_backward = _impl.crf_forward_backward
crf_viterbi = _impl.crf_viterbi


def available_backends():
    """Map backend name to module for every implementation that imports."""
    found = {"python": _pure}
    try:
        from . import _fast
    except ImportError:
        pass
    else:
        found["compiled"] = _fast
    return found
