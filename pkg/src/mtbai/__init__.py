"""Best-arm identification in multi-task bandits sharing an optimal representation."""
from .divergence import bern_kl, jensen_shannon_alpha, kl_binary_risk
from .errors import (ConfigError, DegenerateWeightError, MtbaiError, NumericalError,
                     StructureError, UsageError)
from .harness import (ExperimentConfig, RunRecord, SeriesPoint, config_from_dict, emit_outputs,
                      load_config, run_experiment, summarize)
from .model import (CountTensor, ModelTensor, load_instance, membership_check, model_from_dict,
                    sample_reward, two_task_example, update_counts)
from .oracle import (SolverOptions, char_time_G, char_time_H, check_feasibility,
                     solve_allocation, split_budget)
from .policies import (Phase1State, osrl_run, phase1_decide, phase1_should_stop, phase1_step,
                       phase2_run, run_engine, tas_baseline)
from .thresholds import ThresholdParams, beta_osrl, beta_simple
from .transport import confusing_set, glrt_statistic, rho, rho_sigma, transport_cost

__version__ = "0.1.0"
