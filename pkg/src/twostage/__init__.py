"""Sequential AoA-then-AoD compressed-sensing channel estimation for sparse mmWave MIMO links."""
from .channel import (
    AngleDictionary,
    ArrayGeometry,
    ChannelRealization,
    array_response,
    build_dictionary,
    sample_channel,
)
from .recovery import MeasurementProblem, SupportEstimate, brute_force_support, mip_constant, somp
from .pipeline import (
    TwoStageResult,
    one_stage_omp,
    oracle_estimate,
    pair_paths,
    reconstruct_rhat,
    two_stage_estimate,
)
from .tracy_widom import tw_cdf, tw_inverse

__all__ = [
    "AngleDictionary",
    "ArrayGeometry",
    "ChannelRealization",
    "MeasurementProblem",
    "SupportEstimate",
    "TwoStageResult",
    "array_response",
    "brute_force_support",
    "build_dictionary",
    "mip_constant",
    "one_stage_omp",
    "oracle_estimate",
    "pair_paths",
    "reconstruct_rhat",
    "sample_channel",
    "somp",
    "tw_cdf",
    "tw_inverse",
    "two_stage_estimate",
]
