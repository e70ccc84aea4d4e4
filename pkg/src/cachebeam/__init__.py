"""Cache-aided multicast beamforming simulator.

Pipeline: coded-caching placement and XOR message generation (`coded`),
time-slot scheduling under per-user decode limits (`scheduling`), cellular
channel draws (`channel`), per-slot transmit power minimization by SCA over
second-order cone subproblems (`beamforming`, `socp`), and a paired Monte
Carlo harness (`experiment`).
"""

__version__ = "0.1.0"

from .coded import (CacheConsistencyError, ConfigurationError, MessageSet,
                    PayloadLibrary, SystemConfig, build_message_set, decode_user,
                    place_caches, recover_file, split_library, user_subsets,
                    xor_encode)
from .scheduling import (Schedule, ScheduleValidationError, Slot, assign_blocklengths,
                         format_schedule, full_superposition, greedy_partition,
                         grouped_baseline, min_slots_bound, validate_schedule)
from .channel import (CellModel, ChannelRealization, amplitude_gain, dump_channel,
                      dumps_channel, load_channel, loads_channel, path_loss_db,
                      sample_channel, trial_rng)
from .socp import ConeDims, ConeLPSolution, SolverError, solve_cone_lp
from .beamforming import (BeamformingError, BeamformingSolution, MacConstraint,
                          ScaSettings, SlotProblem, SubproblemSolution, TotalPower,
                          build_slot_problem, sca_solve, solve_convex_subproblem,
                          total_average_power, verify_solution, write_trace)
from .experiment import (CSV_HEADER, DecodeDemoReport, ExperimentResult,
                         ExperimentSpec, SchemeOutcome, SchemeSpec, SummaryRow,
                         TrialRecord, channel_digest, decode_demo, parse_scheme,
                         run_experiment, run_trial, write_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
