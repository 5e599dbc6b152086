from .models import Editor, Sketcher, TrainConfig, editor_loss, predict_sketch, sketcher_forward, sketcher_loss
from .training import TrainingStats, grad_check, train_editor, train_sketcher
from .decoding import beam_decode, beam_search
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Editor", "Sketcher", "TrainConfig", "TrainingStats",
    "editor_loss", "predict_sketch", "sketcher_forward", "sketcher_loss",
    "train_editor", "train_sketcher", "grad_check",
    "beam_decode", "beam_search",
    "load_checkpoint", "save_checkpoint",
]
