"""Rate-reduction precoding for multi-device edge inference.

Library layout:

* :mod:`mcr2sim.features` -- Gaussian-mixture feature model and coding rates
* :mod:`mcr2sim.channel` -- Rician multiple-access channel and link budget
* :mod:`mcr2sim.objective` -- precoding objective, gradient, power projection
* :mod:`mcr2sim.bca` -- block coordinate ascent solver
* :mod:`mcr2sim.pga` -- projected gradient ascent and step diagnostics
* :mod:`mcr2sim.baselines` -- LMMSE / water-filling / random / identity
* :mod:`mcr2sim.classifier` -- channel-adaptive MAP classification
* :mod:`mcr2sim.harness` -- Monte-Carlo experiment runner and exports
"""

from .bca import BcaState, SolverOptions, SolverReport, solve_bca
from .baselines import (
    digital_latency,
    identity_precoder,
    iwf_covariances,
    iwf_precoder,
    lmmse_detect,
    lmmse_mse,
    lmmse_precoder,
    proposed_latency,
    random_precoder,
    water_fill,
)
from .channel import (
    ChannelRealization,
    LinkBudget,
    SystemDims,
    draw_channel,
    noise_power,
    transmit,
)
from .classifier import AugmentedGaussian, augment_stats, eval_accuracy, map_classify
from .features import (
    FeatureStats,
    GmSpec,
    SampleSet,
    coding_rate,
    complex_to_real,
    estimate_stats,
    exact_stats,
    orthogonal_spec,
    rate_reduction_samples,
    real_to_complex,
    sample_gm,
    sphere_spec,
)
from .harness import RunRecord, ScenarioConfig, run_scenario, sphere_experiment, sweep
from .objective import (
    Mcr2Params,
    PrecoderSet,
    delta_r,
    grad_delta_r,
    kkt_residual,
    project_power,
)
from .pga import IncrementDiagnostics, diagnose_increments, ellipsoid_volume, solve_pga

__version__ = "0.1.0"
