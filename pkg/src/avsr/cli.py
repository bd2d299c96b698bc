"""Command-line entry point.

Subcommands: gen-corpus, train {am,bn,lip,fusion}, extract-bn, decode,
tune-bias, evaluate. Every command takes an optional ``--config`` file of
``key = value`` lines (``#`` starts a comment); ``--set key=value`` and the
dedicated flags override file values.

Exit codes: 0 success, 1 usage, 2 missing prerequisite, 3 bad data.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .checkpoint import load_dnn, load_network, save_dnn, save_network
from .corpus import Grammar, generate_corpus, split_sizes
from .ctc import ALPHABET
from .decode import best_path_decode, cer
from .fusion import FusionConfig, decision_fuse, estimate_priors, gamma_from_kl, pseudo_log_likelihood, utterance_kl
from .network import posteriors
from .pipeline import (
    CLEAN,
    Models,
    PipelineConfig,
    aligned_frame_labels,
    audio_features,
    bottleneck_features,
    corpus_profile,
    evaluate_conditions,
    format_table,
    frame_labels,
    fusion_sequences,
    load_split,
    noisy_audio,
    select_bias,
    train_am,
    train_bn,
    train_fusion,
    train_lip,
)

log = logging.getLogger("avsr")

USAGE, DEPENDENCY, DATA = 1, 2, 3
PATH_KEYS = ("corpus_dir", "model_dir")
STAGES = ("am", "bn", "lip", "fusion")
STAGE_NEEDS = {"am": (), "bn": ("am",), "lip": ("bn",), "fusion": ("bn",)}
SPLITS = ("train", "cv", "test")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class DependencyError(CliError):
    def __init__(self, stage: str, path):
        super().__init__(f"missing prerequisite stage '{stage}' (expected {path})", DEPENDENCY)
        self.stage = stage


# configuration --------------------------------------------------------------

def _parse_value(key: str, text: str, default):
    text = text.strip()
    try:
        if key == "conditions":
            return tuple(CLEAN if t.strip() == CLEAN else float(t) for t in text.split(",") if t.strip())
        if isinstance(default, tuple):
            return tuple(float(t) for t in text.split(",") if t.strip())
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise CliError(f"config key '{key}': cannot parse {text!r}", USAGE) from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` pairs from config text; blank lines and ``#`` comments skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{source}:{n}: expected 'key = value'", USAGE)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise CliError(f"{source}:{n}: empty key", USAGE)
        out[key] = value
    return out


def build_config(pairs: dict):
    """Return ``(PipelineConfig, paths)`` from raw string pairs; unknown keys are rejected."""
    defaults = {f.name: f.default for f in fields(PipelineConfig)}
    unknown = sorted(set(pairs) - set(defaults) - set(PATH_KEYS))
    if unknown:
        raise CliError(f"unknown config key(s): {', '.join(unknown)}", USAGE)
    values = {k: _parse_value(k, v, defaults[k]) for k, v in pairs.items() if k in defaults}
    paths = {k: Path(pairs[k]) for k in PATH_KEYS if k in pairs}
    try:
        return PipelineConfig(**values), paths
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", USAGE) from None


def _require_path(paths: dict, key: str) -> Path:
    if key not in paths:
        raise CliError(f"required config key '{key}' is not set", USAGE)
    return paths[key]


def _load_config(args, extra: dict | None = None):
    pairs = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc.strerror}", USAGE) from None
        pairs.update(parse_config_text(text, args.config))
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}", USAGE)
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    for k, v in (extra or {}).items():
        if v is not None:
            pairs[k] = str(v)
    return build_config(pairs)


# model files ----------------------------------------------------------------

def model_path(model_dir: Path, stage: str) -> Path:
    return model_dir / f"{stage}.modl"


def priors_path(model_dir: Path) -> Path:
    return model_dir / "priors.prio"


def bias_path(model_dir: Path) -> Path:
    return model_dir / "bias.txt"


def _need(model_dir: Path, stage: str):
    path = model_path(model_dir, stage)
    if not path.exists():
        raise DependencyError(stage, path)
    return load_dnn(path) if stage == "bn" else load_network(path)


def _need_priors(model_dir: Path) -> np.ndarray:
    path = priors_path(model_dir)
    if not path.exists():
        raise DependencyError("am", path)
    return io.read_priors(path)


def _need_bias(model_dir: Path) -> float:
    path = bias_path(model_dir)
    if not path.exists():
        raise DependencyError("tune-bias", path)
    try:
        return float(path.read_text().strip())
    except ValueError:
        raise CliError(f"{path}: not a number", DATA) from None


def _splits(corpus_dir: Path, names=SPLITS) -> dict:
    for name in names:
        if not (corpus_dir / f"{name}.tsv").exists():
            raise CliError(f"corpus manifest {corpus_dir / (name + '.tsv')} not found; run gen-corpus", DATA)
    return {name: load_split(corpus_dir, name) for name in names}


class _LogWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")

    def __call__(self, report):
        self.fh.write(report.log_line() + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


# commands -------------------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    cfg, paths = _load_config(args, {"n_utterances": args.n, "corpus_seed": args.seed, "corpus_dir": args.out})
    out = _require_path(paths, "corpus_dir")
    try:
        generate_corpus(cfg.n_utterances, Grammar(), corpus_profile(cfg), cfg.corpus_seed, out)
    except PermissionError as exc:
        raise CliError(str(exc), DATA) from None
    except ValueError as exc:
        raise CliError(str(exc), USAGE) from None
    n_train, n_cv, n_test = split_sizes(cfg.n_utterances)
    print(f"wrote {cfg.n_utterances} utterances to {out}: train {n_train}, cv {n_cv}, test {n_test}")
    return 0


def cmd_train(args) -> int:
    cfg, paths = _load_config(args)
    corpus_dir, model_dir = _require_path(paths, "corpus_dir"), _require_path(paths, "model_dir")
    stage = args.stage
    # check prerequisites before touching the corpus
    prereq = {s: _need(model_dir, s) for s in STAGE_NEEDS[stage]}
    data = _splits(corpus_dir, ("train", "cv"))
    model_dir.mkdir(parents=True, exist_ok=True)
    writer = _LogWriter(model_dir / f"{stage}.log")
    try:
        if stage == "am":
            model, _ = train_am(cfg, data["train"], data["cv"], writer)
            save_network(model_path(model_dir, "am"), model)
            io.write_priors(priors_path(model_dir), estimate_priors(aligned_frame_labels(model, data["train"]),
                                                                    len(ALPHABET)))
        elif stage == "bn":
            am = prereq["am"]
            dnn, history = train_bn(cfg, am, data["train"], data["cv"])
            for rep in history:
                writer(rep)
            save_dnn(model_path(model_dir, "bn"), dnn)
            flab = model_dir / "flab"
            flab.mkdir(exist_ok=True)
            for split in ("train", "cv"):
                for u, lab in zip(data[split], frame_labels(am, data[split])):
                    io.write_flab(flab / f"{u.id}.flab", lab)
        elif stage == "lip":
            model, _ = train_lip(cfg, prereq["bn"], data["train"], data["cv"], on_epoch=writer)
            save_network(model_path(model_dir, "lip"), model)
        else:
            model, _, _ = train_fusion(cfg, prereq["bn"], data["train"], data["cv"], writer)
            save_network(model_path(model_dir, "fusion"), model)
    finally:
        writer.close()
    print(f"trained {stage}: {model_path(model_dir, stage)}")
    return 0


def cmd_extract_bn(args) -> int:
    cfg, paths = _load_config(args)
    corpus_dir, model_dir = _require_path(paths, "corpus_dir"), _require_path(paths, "model_dir")
    dnn = _need(model_dir, "bn")
    utts = _splits(corpus_dir, (args.split,))[args.split]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for u in utts:
        io.write_feat(out / f"{u.id}.bn.feat", bottleneck_features(dnn, u.video, cfg.bn_context))
    print(f"wrote {len(utts)} bottleneck feature files to {out}")
    return 0


def _parse_snr(text: str):
    if text in (CLEAN, "off"):
        return text
    try:
        return float(text)
    except ValueError:
        raise CliError(f"audio condition must be 'clean', 'off' or a dB value, got {text!r}", USAGE) from None


def cmd_decode(args) -> int:
    cfg, paths = _load_config(args)
    corpus_dir, model_dir = _require_path(paths, "corpus_dir"), _require_path(paths, "model_dir")
    snr = _parse_snr(args.audio)
    visual = args.visual == "on"
    if snr == "off" and not visual:
        raise CliError("audio and video cannot both be off", USAGE)
    if args.model == "am" and (visual or snr == "off"):
        raise CliError("the acoustic model takes audio only: use --audio clean|<dB> --visual off", USAGE)
    if args.model == "lip" and (not visual or snr != "off"):
        raise CliError("the lip reader takes video only: use --audio off --visual on", USAGE)
    priors = _need_priors(model_dir)
    needs = {"am": ("am",), "lip": ("bn", "lip"), "fusion": ("bn", "fusion"), "decision": ("am", "bn", "lip")}
    m = {s: _need(model_dir, s) for s in needs[args.model]}
    bias = _need_bias(model_dir) if args.model == "decision" and visual and snr != "off" else 0.0
    utts = _splits(corpus_dir, (args.split,))[args.split]
    a_dim = 3 * cfg.audio_dim

    def scores(u):
        audio = None if snr == "off" else noisy_audio(u, snr, cfg)
        if args.model == "am":
            return pseudo_log_likelihood(posteriors(m["am"], audio_features(audio)), priors)
        if args.model == "lip":
            return pseudo_log_likelihood(posteriors(m["lip"], bottleneck_features(m["bn"], u.video, cfg.bn_context)),
                                         priors)
        if args.model == "fusion":
            x = fusion_sequences(cfg, m["bn"], [u], [u.audio if audio is None else audio])[0].features
            if snr == "off":
                x[:, :a_dim] = cfg.fill_value
            if not visual:
                x[:, a_dim:] = cfg.fill_value
            return pseudo_log_likelihood(posteriors(m["fusion"], x), priors)
        pv = posteriors(m["lip"], bottleneck_features(m["bn"], u.video, cfg.bn_context)) if visual else None
        pa = None if audio is None else posteriors(m["am"], audio_features(audio))
        if pa is None:
            return decision_fuse(pv, pv, 0.0, priors)
        if pv is None:
            return decision_fuse(pa, pa, 1.0, priors)
        return decision_fuse(pa, pv, gamma_from_kl(utterance_kl(pv, pa), FusionConfig(bias=bias)), priors)

    rows, hyps = [], []
    for u in utts:
        res = best_path_decode(scores(u))
        hyp = ALPHABET.decode(res.hypothesis)
        hyps.append(hyp)
        rows.append((u.id, hyp, res.score))
    io.write_decodes(args.out, rows)
    print(f"CER {cer(hyps, [u.text for u in utts]):.2f}% over {len(utts)} utterances; decodes in {args.out}")
    return 0


def cmd_tune_bias(args) -> int:
    cfg, paths = _load_config(args)
    corpus_dir, model_dir = _require_path(paths, "corpus_dir"), _require_path(paths, "model_dir")
    models = Models(am=_need(model_dir, "am"), bn=_need(model_dir, "bn"), lip=_need(model_dir, "lip"),
                    priors=_need_priors(model_dir))
    cv = _splits(corpus_dir, ("cv",))["cv"]
    best, table = select_bias(cfg, models, cv)
    for b, c in table:
        print(f"b={b:g}\tcv CER {c:.2f}")
    bias_path(model_dir).write_text(f"{best!r}\n")
    print(f"selected b={best:g}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, paths = _load_config(args)
    corpus_dir, model_dir = _require_path(paths, "corpus_dir"), _require_path(paths, "model_dir")
    models = Models(**{s: _need(model_dir, s) for s in STAGES})
    models.priors = _need_priors(model_dir)
    models.bias = _need_bias(model_dir)
    test = _splits(corpus_dir, ("test",))["test"]
    rows = evaluate_conditions(cfg, models, test)
    print(format_table(rows))
    out = Path(args.out) if args.out else model_dir / "results.tsv"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model\taudio_cond\tvisual\tcer\n")
        for r in rows:
            fh.write(r.line() + "\n")
    print(f"results written to {out}")
    return 0


# argument parsing -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = _Parser(prog="avsr", description="Audio-visual CTC recogniser toolkit on a synthetic GRID-style corpus.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-corpus", parents=[common], help="render a synthetic corpus")
    g.add_argument("--n", type=int, help="number of utterances")
    g.add_argument("--seed", type=int, help="corpus seed")
    g.add_argument("--out", help="output directory (config key corpus_dir)")
    g.set_defaults(func=cmd_gen_corpus)

    t = sub.add_parser("train", parents=[common], help="train one stage")
    t.add_argument("stage", choices=STAGES)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("extract-bn", parents=[common], help="write bottleneck features as FEAT files")
    e.add_argument("--split", choices=SPLITS, default="test")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_extract_bn)

    d = sub.add_parser("decode", parents=[common], help="decode one split with one model")
    d.add_argument("--model", choices=("am", "lip", "fusion", "decision"), required=True)
    d.add_argument("--split", choices=SPLITS, default="test")
    d.add_argument("--audio", default=CLEAN, help="clean, off, or an SNR in dB")
    d.add_argument("--visual", choices=("on", "off"), default="off")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    b = sub.add_parser("tune-bias", parents=[common], help="pick the decision-fusion offset on cv")
    b.set_defaults(func=cmd_tune_bias)

    v = sub.add_parser("evaluate", parents=[common], help="CER table for every condition")
    v.add_argument("--out", help="machine-readable results file (default <model_dir>/results.tsv)")
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"avsr: error: {exc}", file=sys.stderr)
        return exc.code
    except (io.FormatError, FileNotFoundError) as exc:
        print(f"avsr: error: {exc}", file=sys.stderr)
        return DATA
    except ValueError as exc:
        print(f"avsr: error: {exc}", file=sys.stderr)
        return DATA


if __name__ == "__main__":
    sys.exit(main())
