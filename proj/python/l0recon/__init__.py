"""Sparse reconstruction with an exact biconvex l0 reformulation."""

from ._core import (
    DenseOperator,
    FrameStack,
    Localization,
    Molecule,
    SmlmOperator,
    SmlmParams,
    SolveConfig,
    biconvex_minimize,
    coupling_gap,
    iht,
    jaccard,
    l0_norm,
    l0_witness,
    localize_frame,
    project_capped_simplex,
    random_ground_truth,
    render_superres,
    simulate_stack,
    spectral_norm,
    u_update_constrained,
    u_update_penalized,
)

__all__ = [
    "DenseOperator",
    "FrameStack",
    "Localization",
    "Molecule",
    "SmlmOperator",
    "SmlmParams",
    "SolveConfig",
    "biconvex_minimize",
    "coupling_gap",
    "iht",
    "jaccard",
    "l0_norm",
    "l0_witness",
    "localize_frame",
    "project_capped_simplex",
    "random_ground_truth",
    "render_superres",
    "simulate_stack",
    "spectral_norm",
    "u_update_constrained",
    "u_update_penalized",
]
