"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise (or when
``KDLAB_PURE_PYTHON=1`` is set) the numpy implementations are used.  Both
expose the same functions and ``BACKEND``.
"""

import os

if os.environ.get("KDLAB_PURE_PYTHON", "") not in ("", "0"):
    from kdlab._pykernels import *  # noqa: F401,F403
    from kdlab._pykernels import BACKEND
else:
    try:
        from kdlab._ckernels import *  # noqa: F401,F403
        from kdlab._ckernels import BACKEND
    except ImportError:  # extension not built
        from kdlab._pykernels import *  # noqa: F401,F403
        from kdlab._pykernels import BACKEND

__all__ = [
    "BACKEND", "viterbi", "forward_backward", "beam_search", "greedy",
    "topk_sample", "ffbs", "ancestral", "align_estep", "sgd_epoch",
    "softmax_loss",
]
