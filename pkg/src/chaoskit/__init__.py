"""Chaos detection toolkit: noisy iterated maps, lineage trees, Lyapunov
ground truth, classical estimators, and recurrent regressors."""

from . import classical, data, dynsys, evaluation, lyapunov, models, neural
from .dynsys import (GLMParams, KCCParams, QuadMapParams, SeqTrajectory,
                     SystemSpec, TreeTrajectory, ZMapParams,
                     add_measurement_noise, generate_sequence, generate_tree,
                     glm, jacobian, kcc, quadmap, step, zmap)
from .errors import (ChaoskitError, ConfigError, DegenerateSeries,
                     DivergedTrajectory, FormatError, InsufficientLength,
                     InvalidInput, NumericalError, ShapeError,
                     SingularJacobian)
from .lyapunov import LLEResult, lle_divergence_oracle, lle_tangent
from .classical import (EmbeddingParams, RosensteinParams, ZeroOneParams,
                        delay_embed, rosenstein, zero_one)
from .models import (SeqRegressor, TrainConfig, TreeRegressor, UCProbe,
                     probe_extract, seq_forward, train_regressor, tree_forward)
from .data import Dataset, ParamSampleConfig, build_dataset, build_noise_suite
from .evaluation import EvalReport, mcc

__version__ = "0.1.0"
