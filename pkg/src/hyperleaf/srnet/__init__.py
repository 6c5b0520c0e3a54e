from .model import NetArch, backward, forward, init_params
from .ops import l1_loss
from .train import (AdamState, TrainConfig, adam_step, default_overlap, infer, latest_checkpoint,
                    load_checkpoint, save_checkpoint, train)
