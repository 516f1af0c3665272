from .bc import ACTION_DIM, BcParams, bc_forward, bc_loss_and_grads
from .cap import (
    OUT_DIM,
    CapConfig,
    CapParams,
    cap_forward,
    cap_forward_batch,
    cap_loss,
    cap_loss_and_grads,
    grad_check,
    total_loss,
)
from .metrics import e_action, e_target
from .tokens import GRID_CHANNELS, TokenGrid, eye_features, grid_from_frame
from .train import (
    LossConfig,
    TrainData,
    TrainResult,
    build_training_set,
    cap_positions_m,
    load_checkpoint,
    predict_bc,
    predict_cap,
    save_checkpoint,
    to_pose_array,
    train,
)
