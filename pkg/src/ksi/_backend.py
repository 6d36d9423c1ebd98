"""Kernel selection: the compiled core when importable, else the Python twin.

Set ``KSI_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pycore

if os.environ.get("KSI_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
dopri5 = _compiled.dopri5 if _compiled is not None else _pycore.dopri5
python_dopri5 = _pycore.dopri5
compiled_dopri5 = _compiled.dopri5 if _compiled is not None else None
