"""Hot mask kernels with a compiled fast path.

The Cython extension is optional: if it failed to build, or the environment
variable ``STATETRACK_PURE`` is set to a non-empty value other than ``0``, the
numpy implementations in ``_py`` are used instead. ``BACKEND`` names the
selected implementation ("cython" or "numpy").
"""

import os

if os.environ.get("STATETRACK_PURE", "") not in ("", "0"):
    from . import _py as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _py as _impl

        BACKEND = "numpy"

count_true = _impl.count_true
count_and = _impl.count_and
or_into = _impl.or_into
encode_runs = _impl.encode_runs
decode_runs = _impl.decode_runs

__all__ = ["BACKEND", "count_true", "count_and", "or_into", "encode_runs", "decode_runs"]
