"""Energy-aware kernel auto-tuning on simulated GPU devices.

The package searches constrained kernel configuration spaces for minimal
time or energy (or maximal efficiency) against a simulated device, fits a
load power model to clock/power sweeps, steers frequency tuning into the
narrow clock band that the model predicts to be energy-optimal, and
analyzes how difficult a tuning landscape is via Pareto fronts and fitness
flow graphs.
"""

from .analysis import (
    CentralityCurve,
    FitnessFlowGraph,
    ParetoPoint,
    build_ffg,
    minima_arrival_distribution,
    pareto_front,
    proportion_of_centrality,
)
from .device import (
    CLOCK_PARAM,
    EXECUTION_PARAMS,
    POWER_LIMIT_PARAM,
    ConstantSurface,
    DeviceSpec,
    DeviceState,
    Execution,
    GroundTruth,
    PerformanceSurface,
    PowerSample,
    SimulatedDevice,
    SyntheticSurface,
    load_device,
)
from .errors import (
    AnalysisError,
    CapabilityError,
    ConfigurationError,
    DomainError,
    ExpressionError,
    FitError,
    InvalidConfigError,
    JouleTuneError,
    MeasurementError,
    SensorNotReadyError,
    TuningError,
    UnderDeterminedError,
    UnknownNameError,
)
from .expressions import Expression
from .observers import (
    AveragedPowerObserver,
    AveragedSensorConfig,
    BenchmarkObserver,
    ContinuousResult,
    InstantPowerObserver,
    InstantSensorConfig,
    averaged_reading,
    continuous_benchmark,
    instant_energy,
)
from .powermodel import (
    FrequencyBand,
    FrequencySample,
    PowerModel,
    RidgePoint,
    detect_ridge,
    fit,
    frequency_band,
    optimal_frequency,
)
from .searchspace import (
    KernelConfig,
    Restriction,
    SearchSpace,
    TunableParameter,
)
from .tuner import (
    PIPELINES,
    STRATEGIES,
    BenchmarkResult,
    Objective,
    PipelineReport,
    ResultCache,
    TuningRun,
    UserMetric,
    benchmark,
    default_metrics,
    run_pipeline,
    run_strategy,
)

__version__ = "0.1.0"
