"""Random Green measures of driven sequences of endomorphisms of P^k."""

__version__ = "0.1.0"

from .errors import (DegenerateEncounter, DegenerateFiber, EmptySelection, IndeterminacyHit,
                     RandGreenError, RejectionExhausted, SchemaError, TrackingFailure, ZeroVector)
from .projective import (HomPolynomial, ProjPoint, RationalMap, TangentFrame, compose,
                         distance_to_degenerate, evaluate, fs_distance, fs_jacobian, normalize,
                         tangent_frame)
from .drivers import (DriverSpec, DriverState, Family, advance, birkhoff_logdist, driver_init,
                      generate_sequence, sample_lambda)
from .green import (GreenAccumulator, alpha_sample, green_potential, invariance_test,
                    measure_sample, univariate_preimages)
from .homotopy import multivariate_preimages
from .observables import Observable
from .ergodic import (BowenBall, LyapunovReport, SphericalPartition, birkhoff_alpha_test,
                      bowen_distance, brin_katok_entropy, graph_volume_check, log_moment_check,
                      lyapunov_spectrum, mixing_correlation, partition_entropy, separated_count)
from .config import ExperimentConfig, emit_config, parse_config
from .harness import ExperimentRecord, emit_plotdata, run_experiment
