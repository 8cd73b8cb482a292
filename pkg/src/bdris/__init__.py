"""Interference-leakage minimization with beyond-diagonal reconfigurable surfaces."""

from .channels import ChannelSet, ConfigError, ScenarioConfig, draw_channels
from .joint import joint_min_il
from .leakage import (
    IlQuadraticForm,
    direct_leakage,
    effective_channels,
    il_quadratic_form,
    il_with_beamformers,
    interference_leakage,
    zero_il_feasible,
)
from .linalg import ContractError, TakagiFactors, project_to_unitary, takagi
from .metrics import TrialResult, UndefinedMetric, aggregate, delta_inr_db
from .optimizers import (
    IterTrace,
    NumericalFailure,
    OptimizerOptions,
    ScatteringMatrix,
    minimize_il_diag,
    minimize_il_group,
    minimize_il_mo,
    minimize_il_rtp,
)
from .precoders import (
    Beamformers,
    max_sinr_beamformers,
    max_sr_beamformers,
    min_il_beamformers,
    sum_rate,
    svd_precoders,
    waterfill,
)
from .runner import SweepSpec, load_config, read_results, run_sweep, write_results

__version__ = "0.1.0"
