"""Kernel backend selection.

The compiled extension ``watermaze._kernels_c`` is used when it imports;
otherwise the numpy reference in ``watermaze._kernels_py``. Setting
``WATERMAZE_KERNELS=py`` forces the reference implementation.
"""

import os

from . import _kernels_py

BACKEND = "py"
_impl = _kernels_py

if os.environ.get("WATERMAZE_KERNELS", "").lower() != "py":
    try:
        from . import _kernels_c as _impl  # noqa: F811

        BACKEND = "c"
    except ImportError:
        _impl = _kernels_py

softmax_forward = _impl.softmax_forward
softmax_backward = _impl.softmax_backward
layer_norm_forward = _impl.layer_norm_forward
layer_norm_backward = _impl.layer_norm_backward
gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward
