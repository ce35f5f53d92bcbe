from .checkpoint import load_checkpoint, read_history_csv, save_checkpoint, write_history_csv
from .context import Context, build_context, grid_points, sample_batch
from .losses import (
    STRICT_EPS,
    LossReport,
    condition_loss,
    constraint_loss,
    constraint_mask,
    endogenous_loss,
    hjb_loss,
    masked_mse,
    system_loss,
    total_loss,
)
from .model import (
    CheckDef,
    ConditionDef,
    ConstraintDef,
    EndogenousEquationDef,
    EquationDef,
    Formula,
    HJBEquationDef,
    LearnableDef,
    ModelBuildError,
    ModelDefinition,
    OracleDef,
    ParameterDef,
    Piece,
    PretrainDef,
    StateVariableDef,
    SystemDef,
    TrainingConfig,
)
from .solver import CompiledModel, TrainResult, evaluate_piecewise, pretrain, pretrain_mse, train
from .validate import validate_model
