"""
Multifractal trace laboratory.

dyadic capacity 위의 포화/임의 wavelet 계수장을 합성하고, 수평 초평면 trace 의
wavelet leader 로 점별 지수와 특이 스펙트럼을 추정해 예측 곡선과 비교한다.
"""

from .analysis import (
    LeaderField,
    PredictedCurves,
    SpectrumEstimate,
    histogram_spectrum,
    leader_spectrum,
    leaders,
    pointwise_exponent,
    predicted_curves,
)
from .capacity import (
    CapacityModel,
    CascadeCapacity,
    GibbsCapacity,
    ProductCapacity,
    ScalingTable,
    auxiliary_model,
    scaling_function,
)
from .config import ExperimentConfig, ExperimentKind, ToolDefaults, load_defaults
from .errors import TraceLabError
from .experiments import ExperimentOutcome, run_experiment
from .synthesis import CoefficientField, DenseField, SaturatingField, random_member
from .trace import TraceResult, saturating_trace, tensor_trace
from .wavelet import OffsetSchedule, WaveletSpec, build_spec, find_offset_schedule

__all__ = [
    "CapacityModel",
    "CascadeCapacity",
    "CoefficientField",
    "DenseField",
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentOutcome",
    "GibbsCapacity",
    "LeaderField",
    "OffsetSchedule",
    "PredictedCurves",
    "ProductCapacity",
    "SaturatingField",
    "ScalingTable",
    "SpectrumEstimate",
    "ToolDefaults",
    "TraceLabError",
    "TraceResult",
    "WaveletSpec",
    "auxiliary_model",
    "build_spec",
    "find_offset_schedule",
    "histogram_spectrum",
    "leader_spectrum",
    "leaders",
    "load_defaults",
    "pointwise_exponent",
    "predicted_curves",
    "random_member",
    "run_experiment",
    "saturating_trace",
    "scaling_function",
    "tensor_trace",
]
