"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence during training.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import metrics, search, toygen
from .config import ConfigError, RunConfig, dump_config, load_config
from .tokenization import (BpeModel, bpe_detokenize, bpe_learn, bpe_segment_sentence, normalize,
                           word_frequencies)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def _table(header, rows) -> str:
    out = ["\t".join(header)]
    out += ["\t".join(str(c) for c in r) for r in rows]
    return "\n".join(out) + "\n"


def _load_checkpoint(path):
    try:
        return ckpt.load(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except ckpt.CheckpointError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---- commands -------------------------------------------------------------------


def cmd_gen_toy(args) -> int:
    if args.size < 1:
        raise ConfigError("size", "must be >= 1")
    pairs = toygen.gen_corpus(args.seed, args.size)
    try:
        toygen.write_corpus(pairs, args.out)
    except OSError as exc:
        raise DataError(f"cannot write corpus {args.out}: {exc.strerror}") from None
    print(_table(["file", "lines"], [(f"{args.out}.{e}", len(pairs)) for e in ("src", "tgt", "seg")]),
          end="")
    return EXIT_OK


def cmd_bpe_learn(args) -> int:
    corpus = _lines(args.input)
    if not any(line.strip() for line in corpus):
        raise DataError(f"{args.input}: empty corpus")
    model = bpe_learn(word_frequencies(corpus), args.merges)
    _write(args.out, model.dumps())
    print(_table(["merges"], [(len(model.merges),)]), end="")
    return EXIT_OK


def cmd_bpe_apply(args) -> int:
    try:
        model = BpeModel.loads(Path(args.model).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {args.model}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(f"{args.model}: {exc}") from None
    lines = _lines(args.input)
    if args.reverse:
        out = [bpe_detokenize(line.split()) for line in lines]
    else:
        out = [" ".join(bpe_segment_sentence(model, line)) for line in lines]
    _write(args.out, "".join(line + "\n" for line in out))
    return EXIT_OK


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(item, "expected key=value")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for f in dataclasses.fields(RunConfig):
        val = getattr(args, "cfg_" + f.name, None)
        if val is not None:
            overrides[f.name] = val
    return load_config(args.config, overrides)


def _read_pairs(src, tgt):
    from .training import read_parallel
    try:
        pairs = read_parallel(src, tgt)
    except OSError as exc:
        raise DataError(f"cannot read corpus: {exc}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if not pairs:
        raise DataError(f"{src}: no sentence pairs")
    return pairs


def _run_training(cfg: RunConfig, log_path: str | None):
    from .training import train
    train_pairs = _read_pairs(cfg.train_src, cfg.train_tgt)
    dev_pairs = _read_pairs(cfg.dev_src, cfg.dev_tgt)
    if log_path:
        with open(log_path, "w", encoding="utf-8") as log:
            return train(cfg, train_pairs, dev_pairs, log_stream=log), dev_pairs
    return train(cfg, train_pairs, dev_pairs), dev_pairs


def cmd_train(args) -> int:
    from .training import TrainingDiverged
    cfg = _config_from_args(args).validate(check_paths=True)
    log_path = cfg.log or (cfg.checkpoint + ".log" if cfg.checkpoint else None)
    try:
        result, _ = _run_training(cfg, log_path)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    last = result.history[-1]
    print(_table(["epochs", "train_loss", "dev_ppl", "checkpoint"],
                 [(last.epoch, f"{last.train_loss:.6f}", f"{last.dev_ppl:.6f}", cfg.checkpoint)]),
          end="")
    return EXIT_OK


def cmd_translate(args) -> int:
    model, meta = _load_checkpoint(args.checkpoint)
    if args.src_vocab or args.tgt_vocab:
        from .tokenization import Vocab
        try:
            ckpt.check_vocab(meta, Vocab.load(args.src_vocab) if args.src_vocab else None,
                             Vocab.load(args.tgt_vocab) if args.tgt_vocab else None)
        except (OSError, ValueError) as exc:
            raise DataError(str(exc)) from None
    out = [search.translate(model, line, beam=args.beam, max_words=args.max_words,
                            max_chars=args.max_chars) for line in _lines(args.input)]
    text = "".join(line + "\n" for line in out)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def evaluation_report(hyps, refs, train_tgt=None, segs=None) -> dict:
    if len(hyps) != len(refs):
        raise DataError(f"hypotheses have {len(hyps)} lines but references have {len(refs)}")
    report = {"bleu": metrics.bleu(hyps, refs), "chrf3": metrics.chrf3(hyps, refs)}
    if segs is not None:
        if len(segs) != len(refs):
            raise DataError("segmentation file does not align with references")
        report["t_bleu"] = metrics.t_bleu(hyps, segs)
    if any(refs) and any(hyps):
        report["char_trigram_kl"] = metrics.char_trigram_kl(refs, hyps)
    if train_tgt is not None:
        vocab = {w for line in train_tgt for w in normalize(line).split()}
        if any(h.split() for h in hyps):
            report["oov_rate"] = metrics.oov_rate(hyps, vocab)
    return report


def cmd_evaluate(args) -> int:
    hyps = [normalize(x) for x in _lines(args.hyp)]
    refs = [normalize(x) for x in _lines(args.ref)]
    train_tgt = _lines(args.train_tgt) if args.train_tgt else None
    segs = [normalize(x) for x in _lines(args.seg)] if args.seg else None
    report = evaluation_report(hyps, refs, train_tgt, segs)
    if args.checkpoint and args.src:
        model, _ = _load_checkpoint(args.checkpoint)
        srcs = [normalize(x) for x in _lines(args.src)]
        pairs = [(s, r) for s, r in zip(srcs, refs) if s.strip() and r.strip()]
        if train_tgt is not None:
            vocab = {w for line in train_tgt for w in normalize(line).split()}
            pairs = [(s, r) for s, r in pairs if any(w not in vocab for w in r.split())]
        if pairs:
            report["char_perplexity"] = metrics.char_perplexity(model, pairs)
    print("metric\tvalue")
    print(metrics.format_report(report), end="")
    return EXIT_OK


def _parse_features(text: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError("features", f"cannot parse {text!r}") from None
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise ConfigError("features", "values must lie in [0, 1]")
    return vals


def cmd_probe(args) -> int:
    model, _ = _load_checkpoint(args.checkpoint)
    if model.variant != "lmm":
        raise DataError(f"probe needs an LMM checkpoint, got variant {model.variant!r}")
    K = model.dims.features
    if args.enumerate:
        feats = search.feature_corners(K)
    elif args.zero_features:
        feats = [(0.0,) * K]
    elif args.features:
        feats = [_parse_features(f) for f in args.features]
    else:
        feats = [(0.0,) * K, (1.0,) * K]
    try:
        rows = search.probe(model, args.lemma_from, feats, args.position, args.beam, args.max_chars)
    except ValueError as exc:
        raise ConfigError("features", str(exc)) from None
    print(_table(["features", "surface"],
                 [(" ".join(f"{v:g}" for v in f), s) for f, s in rows]), end="")
    return EXIT_OK


def _int_list(text: str, name: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise ConfigError(name, "empty list")
    return vals


def cell_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def cmd_sweep(args) -> int:
    from .training import TrainingDiverged, train
    base = _config_from_args(args)
    base = dataclasses.replace(base, variant="lmm").validate(check_paths=True)
    dims = _int_list(args.dims, "dims")
    kdims = _int_list(args.feature_dims, "feature_dims")
    train_pairs = _read_pairs(base.train_src, base.train_tgt)
    dev_pairs = _read_pairs(base.dev_src, base.dev_tgt)
    rows = []
    for idx, (zd, k) in enumerate((z, k) for z in dims for k in kdims):
        cfg = dataclasses.replace(base, lemma_dim=zd, features=k, seed=cell_seed(base.seed, idx),
                                  checkpoint="", log="").validate()
        try:
            result = train(cfg, train_pairs, dev_pairs)
        except TrainingDiverged:
            rows.append((zd, k, cfg.seed, "nan", "nan", "diverged"))
            continue
        hyps = [search.translate(result.model, s, beam=args.beam) for s, _ in dev_pairs]
        chrf = metrics.chrf3(hyps, [t for _, t in dev_pairs])
        rows.append((zd, k, cfg.seed, f"{result.history[-1].dev_ppl:.6f}", f"{chrf:.6f}", "ok"))
    print(_table(["lemma_dim", "features", "seed", "dev_ppl", "dev_chrf3", "status"], rows), end="")
    return EXIT_OK


def cmd_show_config(args) -> int:
    sys.stdout.write(dump_config(_config_from_args(args).validate()))
    return EXIT_OK


# ---- parser -----------------------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key")
    for f in dataclasses.fields(RunConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None,
                       metavar="V", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="latmorph", description="Latent-morphology translation toolkit")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-toy", help="write a synthetic parallel corpus")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("bpe-learn", help="learn BPE merges")
    p.add_argument("--input", required=True)
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="segment (or with --reverse, join) text")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reverse", action="store_true")
    p.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_show_config)

    p = sub.add_parser("translate", help="translate a file line by line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-words", type=int, default=50)
    p.add_argument("--max-chars", type=int, default=50)
    p.add_argument("--src-vocab")
    p.add_argument("--tgt-vocab")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--train-tgt")
    p.add_argument("--seg", help="gold segmentation of the references (toy t-BLEU)")
    p.add_argument("--checkpoint", help="with --src: per-character perplexity")
    p.add_argument("--src")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("probe", help="decode a fixed lemma under chosen features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lemma-from", required=True, help="source word or sentence")
    p.add_argument("--position", type=int, default=0, help="target word position")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--features", action="append", help="K values, comma or space separated")
    g.add_argument("--zero-features", action="store_true")
    g.add_argument("--enumerate", action="store_true", help="all 2^K binary corners")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-chars", type=int, default=50)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sweep", help="train one LMM per (lemma_dim, K) cell")
    _add_config_flags(p)
    p.add_argument("--dims", required=True, help="comma-separated lemma dimensions")
    p.add_argument("--feature-dims", required=True, help="comma-separated feature counts")
    p.add_argument("--beam", type=int, default=5)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except toygen.GrammarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
