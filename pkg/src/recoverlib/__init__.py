"""Recoverability-based information quantities on explicit density matrices."""

from recoverlib.channels import (
    Isometry,
    Povm,
    QuantumChannel,
    choi_to_kraus,
    dephasing_channel,
    eb_channel,
    isometry_inverse_channel,
    kraus_to_choi,
    measurement_channel,
    measurement_isometry,
    petz_recovery,
    private_state,
    stinespring,
)
from recoverlib.infoquant import (
    Quantity,
    binary_entropy,
    conditional_renyi_entropy,
    cqmi,
    fidelity,
    relative_entropy,
    renyi_cqmi,
    renyi_relative_entropy,
    sandwiched_renyi,
    trace_distance,
    von_neumann_entropy,
)
from recoverlib.measrec import (
    DfmResult,
    approx_fixed_point_witness,
    dfm,
    dfm_pure,
    discord,
    discord_as_cqmi,
    discord_upper_from_fixed_point,
)
from recoverlib.qcore import (
    MultipartiteState,
    PureStateVector,
    Rng,
    basis_vector,
    max_entangled,
    maximally_mixed,
    partial_trace,
    permute_systems,
    purify,
    random_density,
    random_pure,
    schatten_norm,
    schmidt,
    tensor,
)
from recoverlib.recopt import (
    OptResult,
    SolverConvergenceError,
    fidelity_AB,
    fidelity_of_recovery,
    multipartite_for,
    surprisal_of_recovery,
)
from recoverlib.squash import (
    GseResult,
    extension_to_squash,
    flagged_mixture_extension,
    gse_heuristic,
    gse_pure,
    product_extension,
)

__version__ = "0.1.0"

__all__ = [
    "DfmResult",
    "GseResult",
    "Isometry",
    "MultipartiteState",
    "OptResult",
    "Povm",
    "PureStateVector",
    "Quantity",
    "QuantumChannel",
    "Rng",
    "SolverConvergenceError",
    "approx_fixed_point_witness",
    "basis_vector",
    "binary_entropy",
    "choi_to_kraus",
    "conditional_renyi_entropy",
    "cqmi",
    "dephasing_channel",
    "dfm",
    "dfm_pure",
    "discord",
    "discord_as_cqmi",
    "discord_upper_from_fixed_point",
    "eb_channel",
    "extension_to_squash",
    "fidelity",
    "fidelity_AB",
    "fidelity_of_recovery",
    "flagged_mixture_extension",
    "gse_heuristic",
    "gse_pure",
    "isometry_inverse_channel",
    "kraus_to_choi",
    "max_entangled",
    "maximally_mixed",
    "measurement_channel",
    "measurement_isometry",
    "multipartite_for",
    "partial_trace",
    "permute_systems",
    "petz_recovery",
    "private_state",
    "product_extension",
    "purify",
    "stinespring",
    "random_density",
    "random_pure",
    "relative_entropy",
    "renyi_cqmi",
    "renyi_relative_entropy",
    "sandwiched_renyi",
    "schatten_norm",
    "schmidt",
    "surprisal_of_recovery",
    "tensor",
    "trace_distance",
    "von_neumann_entropy",
]
