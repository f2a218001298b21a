"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
module takes over with identical results. Set ``PERC_CHEM_PURE_PYTHON=1`` to
force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("PERC_CHEM_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.NAME

open_mask = _impl.open_mask
bfs = _impl.bfs
open_bfs = _impl.open_bfs
pair_distance_lazy = _impl.pair_distance_lazy
label_clusters = _impl.label_clusters
ball_components = _impl.ball_components
potential_dijkstra = _impl.potential_dijkstra
