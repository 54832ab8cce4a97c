"""Mandarin-to-dialect translation frontend.

A glancing-trained non-autoregressive transformer with multibranch attention,
length prediction, attention-alignment supervision, and special-token
guarding, embedded in a TTS text-frontend pipeline, with an autoregressive
baseline, a statistical word aligner, evaluation tooling, and a synthetic
dialect corpus generator.
"""

__version__ = "0.1.0"

from .estimators import AtTranslator, IbmAligner, NatTranslator
from .model import ModelConfig, load_checkpoint, save_checkpoint, translate
from .pipeline import PipelineContext, build_pipeline, run_pipeline
from .evaluate import bench_latency, bleu

__all__ = [
    "__version__",
    "AtTranslator",
    "IbmAligner",
    "NatTranslator",
    "ModelConfig",
    "load_checkpoint",
    "save_checkpoint",
    "translate",
    "PipelineContext",
    "build_pipeline",
    "run_pipeline",
    "bench_latency",
    "bleu",
]
