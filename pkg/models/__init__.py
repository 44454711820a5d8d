"""
PerturbKit Models - Autodiff core and desk-scale transformer models.

Core Components:
- autodiff: Node graph, ops, backward(), gradient_check()
- TaggerModel: encoder tagger with a bilinear relation head
- Seq2SeqModel: encoder-decoder with greedy decoding
- adam_step / train: functional Adam and the training loop

Usage:
    from models import ModelConfig, TaggerModel, tagger_loss, train

    model = TaggerModel(ModelConfig(layers=2, model_dim=16, heads=2, vocab=64, max_len=16))
    train(model, tagger_loss, examples, steps=100)
    store = model.to_store()
"""

from models.autodiff import (
    CycleError,
    Node,
    Op,
    ShapeError,
    backward,
    gradient_check,
    relative_error,
)
from models.layers import InitDefaults, ModelConfig, ParamSpec, ToyModel
from models.optim import AdamState, adam_step
from models.seq2seq import (
    Seq2SeqModel,
    evaluate_rouge,
    forward_seq2seq,
    greedy_decode,
    seq2seq_loss,
)
from models.tagger import (
    TaggerModel,
    TaggerOutput,
    evaluate_f1,
    forward_tagger,
    predict_relations,
    tagger_loss,
)
from models.training import (
    MODEL_TYPES,
    TrainResult,
    TrainingDefaults,
    evaluate_loss,
    load_model,
    save_model,
    train,
)

__all__ = [
    # Autodiff
    "Node",
    "Op",
    "backward",
    "gradient_check",
    "relative_error",
    "ShapeError",
    "CycleError",
    # Architecture
    "ModelConfig",
    "ParamSpec",
    "ToyModel",
    "InitDefaults",
    "TaggerModel",
    "TaggerOutput",
    "forward_tagger",
    "tagger_loss",
    "predict_relations",
    "evaluate_f1",
    "Seq2SeqModel",
    "forward_seq2seq",
    "greedy_decode",
    "seq2seq_loss",
    "evaluate_rouge",
    # Training
    "AdamState",
    "adam_step",
    "train",
    "evaluate_loss",
    "TrainResult",
    "TrainingDefaults",
    "save_model",
    "load_model",
    "MODEL_TYPES",
]
