"""Teacher-student distillation for compressed-video quality assessment."""

from .data import (DataConfig, DatasetSplit, DistortionRecipe, LabeledClip,
                   PristineClipSpec, apply_distortion, build_dataset,
                   build_dataset_from_config, generate_pristine, mos_proxy,
                   sample_crop)
from .distill import (DistillationConfig, FreezePolicy, LossBreakdown,
                      align_features, apply_freeze_policy, build_optimizer,
                      build_projection, distill_step, mse_loss, smooth_l1,
                      total_loss)
from .errors import (CheckpointError, ConfigError, DivergenceError,
                     NumericalFailure, ShapeError, UndefinedCorrelationError,
                     VqaDistillError)
from .gradcheck import check_gradients
from .harness import (ExperimentConfig, RunManifest, cmd_compare, cmd_distill,
                      cmd_eval, cmd_generate_data, cmd_grad_check,
                      cmd_train_baseline, cmd_train_teacher, default_config,
                      load_checkpoint, load_config, save_checkpoint)
from .metrics import (ComparisonTable, CorrelationReport, average_ranks,
                      comparison_table, evaluate_model, plcc, srcc)
from .models import (ModelConfig, ParameterStats, build_encoder,
                     count_parameters, expected_parameter_stats)

__version__ = "0.1.0"
