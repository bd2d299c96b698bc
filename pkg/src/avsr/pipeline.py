"""End-to-end experiment: corpus, four training stages, noisy evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .bottleneck import (
    DnnParams,
    DnnTrainConfig,
    extract_bottleneck,
    generate_frame_labels,
    init_dnn,
    train_cross_entropy,
)
from .corpus import Grammar, babble, generate_corpus, make_profile
from .ctc import ALPHABET, best_alignment
from .decode import best_path_decode, cer
from .features import append_deltas, global_std, mean_normalize, mix_noise_at_snr, scale_features, splice
from .fusion import (
    FusionConfig,
    concat_features,
    decision_fuse,
    estimate_priors,
    gamma_from_kl,
    pseudo_log_likelihood,
    tune_bias,
    utterance_kl,
)
from .network import NetworkParams, init_network, network_forward, posteriors
from .numerics import derive_rng, log_softmax
from .trainer import Sequence, TrainConfig, train_ctc_stage, train_fusion_stage

log = logging.getLogger(__name__)

CLEAN = "clean"
OFF = "OFF"


@dataclass
class PipelineConfig:
    n_utterances: int = 500
    corpus_seed: int = 7
    audio_dim: int = 8
    video_dim: int = 6
    jitter: float = 0.3
    video_jitter: float = 0.3
    drift_dims: int = 3
    drift_std: float = 3.0
    drift_corr: float = 0.95
    seed: int = 1
    hidden: int = 32
    am_layers: int = 2
    fusion_layers: int = 3
    ctc_learning_rate: float = 1e-2
    halving_threshold: float = 0.5
    stop_threshold: float = 0.1
    am_min_epochs: int = 6
    lip_min_epochs: int = 20
    fusion_min_epochs: int = 20
    max_epochs: int = 40
    clip_norm: float = 5.0
    fill_value: float = 0.0
    bn_hidden: int = 64
    bn_width: int = 8
    bn_context: int = 5
    bn_learning_rate: float = 0.008
    bn_batch_size: int = 256
    bn_min_epochs: int = 20
    bn_max_epochs: int = 40
    babble_talkers: int = 4
    noise_seed: int = 11
    conditions: tuple = (CLEAN, 10.0, 0.0)
    bias_grid: tuple = (-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0)

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in fields(cls)]

    def train_config(self, stage: str, min_epochs: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.ctc_learning_rate,
            halving_threshold=self.halving_threshold,
            stop_threshold=self.stop_threshold,
            min_epochs=min_epochs,
            max_epochs=self.max_epochs,
            seed=self.seed,
            fill_value=self.fill_value,
            clip_norm=self.clip_norm,
            stage=stage,
        )


@dataclass
class Utterance:
    id: str
    text: str
    audio: np.ndarray  # static frames
    video: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        return ALPHABET.encode(self.text)


def load_split(corpus_dir, name: str) -> list:
    root = Path(corpus_dir)
    return [
        Utterance(r.id, r.transcript, io.read_feat(root / r.audio_path), io.read_feat(root / r.video_path))
        for r in io.read_manifest(root / f"{name}.tsv")
    ]


def corpus_profile(cfg: PipelineConfig):
    return make_profile(derive_rng(cfg.corpus_seed, "profile"), cfg.audio_dim, cfg.video_dim,
                        jitter=cfg.jitter, video_jitter=cfg.video_jitter,
                        drift_dims=cfg.drift_dims, drift_std=cfg.drift_std, drift_corr=cfg.drift_corr)


def build_corpus(cfg: PipelineConfig, out_dir) -> dict:
    generate_corpus(cfg.n_utterances, Grammar(), corpus_profile(cfg), cfg.corpus_seed, out_dir)
    return {name: load_split(out_dir, name) for name in ("train", "cv", "test")}


# feature chains ------------------------------------------------------------

def audio_features(static) -> np.ndarray:
    return append_deltas(mean_normalize(static))


def spliced_video(static, context: int) -> np.ndarray:
    return splice(mean_normalize(static), context, context)


def bottleneck_features(dnn: DnnParams, static, context: int) -> np.ndarray:
    """Bottleneck activations with deltas, divided by ``dnn.feature_std`` when set."""
    feats = append_deltas(mean_normalize(extract_bottleneck(dnn, spliced_video(static, context))))
    return feats if dnn.feature_std is None else scale_features(feats, dnn.feature_std)


def noisy_audio(utt: Utterance, snr, cfg: PipelineConfig) -> np.ndarray:
    """Static audio of ``utt`` at condition ``snr`` (``"clean"`` or dB)."""
    if snr == CLEAN:
        return utt.audio
    rng = derive_rng(cfg.noise_seed, utt.id)
    noise = babble(utt.audio.shape[0], Grammar(), corpus_profile(cfg), rng, cfg.babble_talkers)
    return mix_noise_at_snr(utt.audio, noise, float(snr))


def condition_name(snr) -> str:
    return CLEAN if snr == CLEAN else f"{float(snr):g}dB"


# stages --------------------------------------------------------------------

@dataclass
class Models:
    am: NetworkParams | None = None
    bn: DnnParams | None = None
    lip: NetworkParams | None = None
    fusion: NetworkParams | None = None
    priors: np.ndarray | None = None
    bias: float | None = None


def train_am(cfg: PipelineConfig, train, cv, on_epoch=None):
    model = init_network(3 * cfg.audio_dim, cfg.hidden, cfg.am_layers, len(ALPHABET), derive_rng(cfg.seed, "am"))
    seqs = [Sequence(u.id, audio_features(u.audio), u.labels) for u in train]
    seqs_cv = [Sequence(u.id, audio_features(u.audio), u.labels) for u in cv]
    return train_ctc_stage(model, seqs, seqs_cv, cfg.train_config("am", cfg.am_min_epochs), on_epoch)


def frame_labels(am: NetworkParams, utts) -> list:
    return [generate_frame_labels(am, audio_features(u.audio)) for u in utts]


def aligned_frame_labels(am: NetworkParams, utts) -> list:
    """Forced CTC alignment of each reference transcript under the acoustic model."""
    out = []
    for u in utts:
        logits, _ = network_forward(am, audio_features(u.audio))
        lp = log_softmax(logits)
        out.append(best_alignment(np.exp(lp), u.labels, log_post=lp))
    return out


def train_bn(cfg: PipelineConfig, am: NetworkParams, train, cv):
    """Train the bottleneck DNN on acoustic-model frame labels; returns ``(dnn, history)``."""
    ctx = cfg.bn_context
    x = np.concatenate([spliced_video(u.video, ctx) for u in train])
    y = np.concatenate(frame_labels(am, train))
    x_cv = np.concatenate([spliced_video(u.video, ctx) for u in cv])
    y_cv = np.concatenate(frame_labels(am, cv))
    sizes = [cfg.video_dim * (2 * ctx + 1), cfg.bn_hidden, cfg.bn_hidden, cfg.bn_width, cfg.bn_hidden, len(ALPHABET)]
    dnn = init_dnn(sizes, 3, derive_rng(cfg.seed, "bn"))
    dcfg = DnnTrainConfig(cfg.bn_learning_rate, cfg.bn_batch_size, cfg.halving_threshold, cfg.stop_threshold,
                          cfg.bn_min_epochs, cfg.bn_max_epochs, cfg.seed)
    dnn, history = train_cross_entropy(dnn, x, y, dcfg, x_cv, y_cv)
    dnn.feature_std = global_std([bottleneck_features(dnn, u.video, ctx) for u in train])
    return dnn, history


def lip_sequences(cfg, bn: DnnParams | None, utts, raw_std=None) -> list:
    """Lip-reader inputs: bottleneck features, or raw spliced video when ``bn`` is None.

    Raw frames are divided by ``raw_std`` when given, mirroring the global
    scaling that bottleneck features carry.
    """
    if bn is None:
        raw = [spliced_video(u.video, cfg.bn_context) for u in utts]
        if raw_std is not None:
            raw = [scale_features(r, raw_std) for r in raw]
        return [Sequence(u.id, r, u.labels) for u, r in zip(utts, raw)]
    return [Sequence(u.id, bottleneck_features(bn, u.video, cfg.bn_context), u.labels) for u in utts]


def train_lip(cfg: PipelineConfig, bn: DnnParams | None, train, cv, max_epochs=None, min_epochs=None,
              on_epoch=None):
    raw_std = None
    if bn is None:
        raw_std = global_std([spliced_video(u.video, cfg.bn_context) for u in train])
    seqs, seqs_cv = lip_sequences(cfg, bn, train, raw_std), lip_sequences(cfg, bn, cv, raw_std)
    model = init_network(seqs[0].features.shape[1], cfg.hidden, cfg.am_layers, len(ALPHABET),
                         derive_rng(cfg.seed, "lip"))
    tcfg = cfg.train_config("lip", cfg.lip_min_epochs if min_epochs is None else min_epochs)
    if max_epochs is not None:
        tcfg.max_epochs = max_epochs
    return train_ctc_stage(model, seqs, seqs_cv, tcfg, on_epoch)


def fusion_sequences(cfg, bn: DnnParams, utts, audio_streams=None) -> list:
    out = []
    for i, u in enumerate(utts):
        a = audio_features(u.audio if audio_streams is None else audio_streams[i])
        v = bottleneck_features(bn, u.video, cfg.bn_context)
        out.append(Sequence(u.id, concat_features(a, v), u.labels))
    return out


def train_fusion(cfg: PipelineConfig, bn: DnnParams, train, cv, on_epoch=None):
    seqs, seqs_cv = fusion_sequences(cfg, bn, train), fusion_sequences(cfg, bn, cv)
    model = init_network(seqs[0].features.shape[1], cfg.hidden, cfg.fusion_layers, len(ALPHABET),
                         derive_rng(cfg.seed, "fusion"))
    tcfg = cfg.train_config("fusion", cfg.fusion_min_epochs)
    return train_fusion_stage(model, seqs, seqs_cv, tcfg, 3 * cfg.audio_dim, on_epoch)


# evaluation ----------------------------------------------------------------

def _decode(scores) -> str:
    return ALPHABET.decode(best_path_decode(scores).hypothesis)


def stream_posteriors(cfg, models: Models, utts, snr):
    """Audio-model and lip-model posteriorgrams for ``utts`` at one noise condition."""
    post_a = [posteriors(models.am, audio_features(noisy_audio(u, snr, cfg))) for u in utts]
    post_v = [posteriors(models.lip, bottleneck_features(models.bn, u.video, cfg.bn_context)) for u in utts]
    return post_a, post_v


def select_bias(cfg, models: Models, utts):
    """Tune the fusion offset on ``utts`` pooled over every noise condition."""
    pa_all, pv_all, refs = [], [], []
    for snr in cfg.conditions:
        pa, pv = stream_posteriors(cfg, models, utts, snr)
        pa_all += pa
        pv_all += pv
        refs += [u.text for u in utts]
    return tune_bias(pa_all, pv_all, refs, models.priors, cfg.bias_grid)


@dataclass
class ResultRow:
    model: str
    audio: str
    visual: str
    cer: float

    def line(self) -> str:
        return f"{self.model}\t{self.audio}\t{self.visual}\t{self.cer:.2f}"


FEATURE_FUSION = "RNN_av"
DECISION_FUSION = "RNN_a,RNN_v"


def evaluate_conditions(cfg: PipelineConfig, models: Models, test, conditions=None) -> list:
    """CER for both fusion strategies over every audio condition, with video on and off.

    Returns rows in the order: per model, clean/OFF, clean/ON, OFF/ON, then
    OFF/ON rows per noisy condition.
    """
    for name in ("am", "bn", "lip", "fusion"):
        if getattr(models, name) is None:
            raise ValueError(f"missing model: {name}")
    if models.priors is None:
        raise ValueError("missing class priors")
    conditions = cfg.conditions if conditions is None else conditions
    refs = [u.text for u in test]
    a_dim = 3 * cfg.audio_dim
    fcfg = FusionConfig(bias=0.0 if models.bias is None else models.bias)
    video_only = None

    ff_rows, df_rows = [], []
    for snr in conditions:
        cond = condition_name(snr)
        seqs = fusion_sequences(cfg, models.bn, test, [noisy_audio(u, snr, cfg) for u in test])
        dim = seqs[0].features.shape[1]
        hyp_off, hyp_on = [], []
        for s in seqs:
            x_off = s.features.copy()
            x_off[:, a_dim:dim] = cfg.fill_value
            hyp_off.append(_decode(pseudo_log_likelihood(posteriors(models.fusion, x_off), models.priors)))
            hyp_on.append(_decode(pseudo_log_likelihood(posteriors(models.fusion, s.features), models.priors)))
        ff_rows.append(ResultRow(FEATURE_FUSION, cond, "OFF", cer(hyp_off, refs)))
        ff_rows.append(ResultRow(FEATURE_FUSION, cond, "ON", cer(hyp_on, refs)))

        post_a, post_v = stream_posteriors(cfg, models, test, snr)
        hyp_a = [_decode(decision_fuse(pa, pv, 1.0, models.priors)) for pa, pv in zip(post_a, post_v)]
        hyp_av = [
            _decode(decision_fuse(pa, pv, gamma_from_kl(utterance_kl(pv, pa), fcfg), models.priors))
            for pa, pv in zip(post_a, post_v)
        ]
        df_rows.append(ResultRow(DECISION_FUSION, cond, "OFF", cer(hyp_a, refs)))
        df_rows.append(ResultRow(DECISION_FUSION, cond, "ON", cer(hyp_av, refs)))
        if video_only is None:
            video_only = post_v

    # audio switched off entirely; independent of the noise condition
    seqs = fusion_sequences(cfg, models.bn, test)
    hyp_v = []
    for s in seqs:
        x = s.features.copy()
        x[:, :a_dim] = cfg.fill_value
        hyp_v.append(_decode(pseudo_log_likelihood(posteriors(models.fusion, x), models.priors)))
    ff_v = ResultRow(FEATURE_FUSION, OFF, "ON", cer(hyp_v, refs))
    df_v = ResultRow(DECISION_FUSION, OFF, "ON", cer(
        [_decode(decision_fuse(pv, pv, 0.0, models.priors)) for pv in video_only], refs))
    return _table_order(ff_rows, ff_v) + _table_order(df_rows, df_v)


def _table_order(rows, video_row) -> list:
    # clean rows first, then video-only, then the noisy conditions
    return rows[:2] + [video_row] + rows[2:]


def lookup(rows, model, audio, visual) -> float:
    for r in rows:
        if (r.model, r.audio, r.visual) == (model, audio, visual):
            return r.cer
    raise KeyError((model, audio, visual))


def format_table(rows) -> str:
    lines = [f"{'Model':<12} {'Audio':<8} {'Visual':<7} {'CER %':>7}"]
    lines += [f"{r.model:<12} {r.audio:<8} {r.visual:<7} {r.cer:7.2f}" for r in rows]
    return "\n".join(lines)


@dataclass
class PipelineResult:
    models: Models
    logs: dict = field(default_factory=dict)  # stage -> list of EpochReport / history rows
    bias_table: list = field(default_factory=list)
    rows: list = field(default_factory=list)


def run_pipeline(cfg: PipelineConfig, corpus_dir, on_epoch=None) -> PipelineResult:
    """Generate the corpus under ``corpus_dir`` and run every stage plus evaluation."""
    data = build_corpus(cfg, corpus_dir)
    train, cv, test = data["train"], data["cv"], data["test"]
    res = PipelineResult(Models())
    m = res.models
    m.am, res.logs["am"] = train_am(cfg, train, cv, on_epoch)
    m.priors = estimate_priors(aligned_frame_labels(m.am, train), len(ALPHABET))
    m.bn, res.logs["bn"] = train_bn(cfg, m.am, train, cv)
    m.lip, res.logs["lip"] = train_lip(cfg, m.bn, train, cv, on_epoch=on_epoch)
    m.fusion, res.logs["fusion"], _ = train_fusion(cfg, m.bn, train, cv, on_epoch)
    m.bias, res.bias_table = select_bias(cfg, m, cv)
    res.rows = evaluate_conditions(cfg, m, test)
    return res
