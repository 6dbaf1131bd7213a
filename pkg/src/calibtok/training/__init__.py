from .losses import LossConfig, LossFrame, LossKind, Supervision, \
                    logl1_loss, l1_loss
from .optim import OptimState, adam_update
from .config import TokenInit, TrainingConfig
from .examples import TrainingExample, make_training_example
from .trainer import TrainingLog, token_training_step, train_tokens, \
                     pretrain_fmde, finetune_fmde
