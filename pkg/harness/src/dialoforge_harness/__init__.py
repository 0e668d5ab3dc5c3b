"""Desk-scale neural trainer for the dialoforge data pipeline."""

from .config import GradMismatch, HarnessConfig, HarnessError, ShapeError, VocabOverflow
from .data import Vocab, load_pretrain, load_qa
from .gradcheck import run_grad_check
from .model import HarnessModel, build_model, masked_reconstruction_loss, span_loss
from .training import Checkpoint, finetune, load_checkpoint, predict, pretrain, save_checkpoint

__version__ = "0.1.0"
