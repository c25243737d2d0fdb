"""Toy-scale finetuning harness for the clip-classification pipeline.

Consumes the documented clip export (raw float32 tensors + JSONL index),
trains a compact video transformer for the binary visual-damage task, and
exports a portable ONNX inference graph with a model card and a parity
file of held-out probabilities.
"""

from .data import ClipExportDataset, DatasetEmpty, SingleClassDataset, load_index
from .model import ModelConfig, TinyVideoTransformer
from .train import TrainConfig, finetune
from .export import ExportFailure, export_model

__version__ = "0.1.0"
