"""Band-kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is not built or when OPFOLD_DISABLE_EXTENSION is set.  Both
expose band_apply_left / band_apply_right with the same contract.
"""

import os

if os.environ.get("OPFOLD_DISABLE_EXTENSION"):
    from . import bandops_np as _impl

    BACKEND = "numpy"
else:
    try:
        from . import bandops as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import bandops_np as _impl

        BACKEND = "numpy"

band_apply_left = _impl.band_apply_left
band_apply_right = _impl.band_apply_right
