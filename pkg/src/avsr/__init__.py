"""Audio-visual speech recognition with CTC-trained bidirectional LSTMs.

The package trains an acoustic model, a bottleneck video feature extractor,
a lip reader and a feature-fusion model on a synthetic GRID-style corpus,
and compares feature fusion against adaptive decision fusion under noise.
"""
from .ctc import ALPHABET, best_alignment, collapse, ctc_gradient, ctc_log_likelihood
from .decode import best_path_decode, cer, edit_distance
from .fusion import decision_fuse, gamma_from_kl, pseudo_log_likelihood, tune_bias
from .network import init_network, network_backward, network_forward, posteriors
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "ALPHABET",
    "PipelineConfig",
    "best_alignment",
    "best_path_decode",
    "cer",
    "collapse",
    "ctc_gradient",
    "ctc_log_likelihood",
    "decision_fuse",
    "edit_distance",
    "gamma_from_kl",
    "init_network",
    "network_backward",
    "network_forward",
    "posteriors",
    "pseudo_log_likelihood",
    "run_pipeline",
    "tune_bias",
]
