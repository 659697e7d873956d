from .adam import Adam
from .embedding import EmbeddingTable, embed
from .functional import bce_loss, mse_loss, relu, sigmoid, task_loss
from .gradcheck import GradCheckResult, grad_check
from .lstm import BiLstm, EncoderState
from .models import TaskHead, build_model, embedding_dims, head_forward
from .training import make_epoch_batches, predict_scores, train_model

__all__ = [
    "Adam",
    "BiLstm",
    "EmbeddingTable",
    "EncoderState",
    "GradCheckResult",
    "TaskHead",
    "bce_loss",
    "build_model",
    "embed",
    "embedding_dims",
    "grad_check",
    "head_forward",
    "make_epoch_batches",
    "mse_loss",
    "predict_scores",
    "relu",
    "sigmoid",
    "task_loss",
    "train_model",
]
