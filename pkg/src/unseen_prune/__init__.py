"""Dataset pruning by out-of-fold ("unseen") sample scoring and incremental coreset selection."""

__version__ = "0.1.0"

from . import _backend
from .data import (FoldPartition, LabeledDataset, SyntheticSpec, generate_synthetic, load_csv,
                   mixture_spec, partition, save_csv)
from .errors import DataError, DegenerateInput, DivergenceError, InvalidArgument, InvariantViolation
from .metrics import (EvalReport, dispersion, evaluate, evaluate_params, rank_change_by_class,
                      rank_pcc, ranks)
from .model import (ModelParams, TrainConfig, gradient_check, loss, predict, predict_proba, train)
from .scoring import (ScoreTable, normalize, score_entropy, score_fitting, score_least_confidence,
                      score_margin, score_proxy, score_unseen)
from .selection import (SelectionState, StagePlan, cost_model, incremental_select, plan_stages,
                        select_top, target_size)

BACKEND = _backend.NAME
