"""savi: sequential anytime-valid inference.

E-processes and p-processes, adjusters and p-to-e calibrators, lifting of
evidence across filtrations, adjust-then-combine pipelines, and a seeded
Monte Carlo harness for stopped-evidence validity checks, power studies,
and a financial high-volatility case study.
"""

from .adjust import (AdjusterSpec, CalibratorSpec, Evidence, adjuster_eval,
                     adjuster_from_calibrator, calibrator_eval,
                     calibrator_from_adjuster, check_adjuster_admissibility,
                     mix_kv_crossover, parse_adjuster, parse_calibrator, spine_eval)
from .evidence import (BoundedMeanStream, ConformalMartingale, EvidenceStream,
                       GaussianMaxInvStream, GaussianUiTTestStream, UiExchStream,
                       conformal_pvalue, parse_stream)
from .lift import (CombinedStream, LiftedStream, PProcessView, SpineAdjustedStream,
                   calibrate_p_to_e, combine, e_lift, p_lift)
from .pipeline import (NEGATIVE_CONTROL_PIPELINES, SHIPPED_F_VALID_PIPELINES,
                       PipelineParseError, build_pipeline)
from .randomized import (RandomizedDecision, ltr_pvalue, randomized_ville_run,
                         randomized_ville_type1, rtl_bound, rtl_violation_experiment)
from .sim import (McReport, PowerReport, TrajectoryReport, generate, mean_trajectory,
                  parse_generator, parse_rule, power_study, run_rng, stopped_mean)

__version__ = "0.1.0"
