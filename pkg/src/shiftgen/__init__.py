"""shiftgen: next-day activity chain generation for shift workers from gappy
observation traces.

The package is organised as small, mostly-independent layers:

- core        day-grid types, chain<->grid conversion, corpus I/O
- kernels     hot numeric kernels (compiled extension with numpy fallback)
- autodiff    tape-based reverse-mode differentiation
- optim       Adam with decoupled weight decay + gradient clipping
- model       period-aware transformer encoder-decoder
- baseline    LSTM-with-attention reference model
- losses      the four-component masked training objective
- synthgen    calibrated synthetic corpus generator
- train       training loop, schedules, checkpoints
- evaluate    distributional (JSD) evaluation and shift-worker criteria
"""

from .core import (
    BOS,
    HOME,
    N_ACTIVITY_TYPES,
    N_SLOTS,
    UNOBSERVED,
    WORK,
    Activity,
    AgentDayPair,
    Corpus,
    ValidationError,
    chain_to_grid,
    grid_to_chain,
    load_corpus,
    save_corpus,
)
from .evaluate import EvalReport, evaluate, is_shift_worker, jsd, profile
from .losses import LossWeights, combined_loss, transition_f1_hard
from .model import ModelConfig, paper_config, period_of
from .synthgen import generate_corpus
from .train import Model, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Activity", "AgentDayPair", "BOS", "Corpus", "EvalReport", "HOME",
    "LossWeights", "Model", "ModelConfig", "N_ACTIVITY_TYPES", "N_SLOTS",
    "TrainConfig", "UNOBSERVED", "ValidationError", "WORK", "chain_to_grid",
    "combined_loss", "evaluate", "generate_corpus", "grid_to_chain",
    "is_shift_worker", "jsd", "load_checkpoint", "load_corpus", "paper_config",
    "period_of", "profile", "save_checkpoint", "save_corpus", "train",
    "transition_f1_hard",
]
