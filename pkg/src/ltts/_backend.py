"""Select the compiled kernels when importable, else the numpy fallback.

Set ``LTTS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

kernels = _fallback
BACKEND = "python"

if not os.environ.get("LTTS_PURE_PYTHON"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

tt_eval_point = kernels.tt_eval_point
tt_eval_batch = kernels.tt_eval_batch
contract_left = kernels.contract_left
contract_right = kernels.contract_right
