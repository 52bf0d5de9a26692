"""Transfer learning for logistic latent space network models.

A target network's latent positions are estimated by pooling aligned
source networks that share part of their latent structure, then
correcting the pooled estimate on the target alone.
"""
from .core import (Graph, LatentState, MaskedGraph, center_rows, log_odds, nll, nll_gradient,
                   nuclear_norm, procrustes_distance, prox_nuclear, sigmoid)
from .debias import (DebiasConfig, DebiasResult, fit_debias, penalized_objective, select_lambda,
                     smooth_gradient)
from .detect import DetectConfig, DetectionReport, detect_transferable, holdout_loss, sample_pairs
from .errors import (AmbiguousAlignment, DimensionMismatch, DuplicateNode, EmptyGrid,
                     EmptyHoldout, EmptyTransferSet, LSMError, MissingNode, NonFinite,
                     ParseError, RankDeficient, SelfLoop, ZeroDenominator)
from .lsm import FitConfig, FitResult, fit_single, spectral_init
from .metrics import brier, detection_rates, holdout_experiment, relative_errors
from .pipeline import METHODS, Estimate, PipelineConfig, estimate, two_stage
from .synth import ScenarioConfig, generate, gen_sources, gen_target
from .transfer import (TransferFit, TransferProblem, fit_transfer, pooled_gradient, pooled_nll,
                       restrict_to_target)

__version__ = "0.1.0"
