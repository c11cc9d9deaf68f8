"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels``.  Setting ``CONTAINMENT_PURE_PYTHON=1``
forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("CONTAINMENT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

simulate_path = _impl.simulate_path
terminal_states = _impl.terminal_states
exit_steps = _impl.exit_steps
distance_exit_steps = _impl.distance_exit_steps
coupled_paths = _impl.coupled_paths
coupled_violation = _impl.coupled_violation
flux_solve_dirichlet = _impl.flux_solve_dirichlet
flux_solve_neumann = _impl.flux_solve_neumann

__all__ = [
    "BACKEND", "simulate_path", "terminal_states", "exit_steps", "distance_exit_steps",
    "coupled_paths", "coupled_violation", "flux_solve_dirichlet", "flux_solve_neumann",
]
