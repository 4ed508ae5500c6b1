"""Command-line pipeline: prepare, align, train, decode, eval.

Exit codes: 0 success, 2 input or configuration error, 3 training divergence,
4 some words failed to decode.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import aligner, lexicon
from .config import RunConfig, RunConfigError, parse_segments
from .decoder import BeamConfig, decode_batch, format_results
from .lexicon import LexiconParseError, PartitionConflictError, SymbolTable
from .metrics import CoverageError, evaluate, write_report_tsv
from .models import (
    ConfigError,
    ModelConfig,
    ModelFileError,
    TrainingDivergedError,
    TrainSchedule,
    build_model,
    enc_dec_examples,
    load_model,
    train,
    write_history,
)

log = logging.getLogger("g2plstm")

EXIT_INPUT = 2
EXIT_DIVERGED = 3
EXIT_PARTIAL = 4

PARTITIONS = ("train", "valid", "test")


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        if not getattr(cfg, key):
            raise InputError(f"missing required setting {key!r} (use --{key.replace('_', '-')})")


def _read_partition(data_dir: Path, name: str):
    path = data_dir / f"{name}.tsv"
    if not path.exists():
        raise InputError(f"dataset file {path} not found (run 'prepare' first)")
    return lexicon.read_lexicon(path, format="tabular", strip_stress=False)


# -- prepare -----------------------------------------------------------------

def cmd_prepare(cfg: RunConfig) -> int:
    _require(cfg, "lexicon", "out")
    entries = lexicon.read_lexicon(cfg.lexicon, cfg.format, cfg.strip_stress)
    if not entries:
        raise InputError(f"lexicon {cfg.lexicon} has no entries")
    lists = {}
    for part, key in zip(("train", "validation", "test"), ("train_list", "valid_list", "test_list")):
        path = getattr(cfg, key)
        if path:
            if not Path(path).is_file():
                raise InputError(f"partition file {path} not found")
            lists[part] = lexicon.read_word_list(path)
    if lists:
        split, report = lexicon.load_split(entries, **lists)
        for part, words in report.missing.items():
            print(f"warning: {len(words)} {part} words not in lexicon (first: {words[0]})", file=sys.stderr)
        if report.unlisted:
            print(f"warning: {len(report.unlisted)} lexicon words in no partition", file=sys.stderr)
    else:
        split = lexicon.DatasetSplit(list(entries), [], [])
    letters, phonemes = lexicon.build_symbol_tables(entries)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lexicon.write_lexicon(entries, out / "lexicon.tsv")
    for name, part in zip(PARTITIONS, (split.train, split.validation, split.test)):
        lexicon.write_lexicon(part, out / f"{name}.tsv")
    letters.save(out / "letters.txt")
    phonemes.save(out / "phonemes.txt")
    for name, count in split.counts().items():
        print(f"{name}\t{count}")
    return 0


# -- align -------------------------------------------------------------------

def cmd_align(cfg: RunConfig) -> int:
    _require(cfg, "data_dir", "out")
    data = Path(cfg.data_dir)
    train_entries = _read_partition(data, "train")
    valid_entries = _read_partition(data, "valid")
    try:
        em = aligner.em_train_aligner(train_entries, cfg.em_iters, cfg.em_tol)
    except aligner.EmptyCorpusError as exc:
        raise InputError(str(exc)) from None
    for word, pron in em.skipped:
        print(f"skip\t{word}\t{' '.join(pron)}", file=sys.stderr)
    print(f"skipped {len(em.skipped)} infeasible pairs", file=sys.stderr)
    loglik_lines = [f"{i}\t{ll:.6f}" for i, ll in enumerate(em.log_likelihoods)]
    for line in loglik_lines:
        print(f"loglik\t{line}")
    pairs, report, _ = aligner.align_corpus(train_entries + valid_entries, em.table)
    for word, pron, why in report.failures:
        print(f"unaligned\t{word}\t{' '.join(pron)}\t{why}", file=sys.stderr)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    aligner.write_aligned(pairs, out)
    Path(str(out) + ".loglik").write_text("".join(line + "\n" for line in loglik_lines), encoding="utf-8")
    print(f"aligned {report.aligned} pairs, {len(report.failures)} failures")
    return 0


# -- train -------------------------------------------------------------------

def _schedule(cfg: RunConfig) -> TrainSchedule:
    return TrainSchedule(
        mode=cfg.schedule,
        learning_rate=cfg.learning_rate,
        segments=parse_segments(cfg.segments),
        minibatch=cfg.minibatch,
        max_epochs=cfg.max_epochs,
        sort_by_length=cfg.sort_by_length,
        clip=cfg.clip,
    ).validate()


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "data_dir", "out")
    data = Path(cfg.data_dir)
    letters = SymbolTable.load(data / "letters.txt", "letter")
    phonemes = SymbolTable.load(data / "phonemes.txt", "phoneme")
    train_entries = _read_partition(data, "train")
    valid_entries = _read_partition(data, "valid")
    model_config = ModelConfig(
        cfg.architecture, cfg.letter_dim, cfg.phoneme_dim, cfg.hidden_dim,
        cfg.layers, cfg.window, cfg.seed, cfg.init_scale,
    ).validate()
    schedule = _schedule(cfg)
    if cfg.architecture == "enc-dec":
        if cfg.aligned:
            print("warning: encoder-decoder ignores the aligned corpus", file=sys.stderr)
        train_data = enc_dec_examples(train_entries)
        valid_data = enc_dec_examples(valid_entries)
    else:
        if not cfg.aligned:
            raise InputError(f"architecture {cfg.architecture} needs an aligned corpus (--aligned)")
        if not Path(cfg.aligned).is_file():
            raise InputError(f"aligned corpus {cfg.aligned} not found")
        pairs = aligner.read_aligned(cfg.aligned)
        compounds = {s for p in pairs for s in p.slot_symbols if lexicon.COMPOUND_SEP in s}
        phonemes = phonemes.extended(compounds)
        train_words = {e.word for e in train_entries}
        valid_words = {e.word for e in valid_entries}
        train_data = [p for p in pairs if "".join(p.letters) in train_words]
        valid_data = [p for p in pairs if "".join(p.letters) in valid_words]
    if schedule.mode == "validation" and not valid_data:
        raise InputError("validation-driven schedule needs a validation partition; use schedule = piecewise")
    model = build_model(model_config, letters, phonemes)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text("".join(line + "\n" for line in cfg.lines()), encoding="utf-8")
    result = train(model, train_data, schedule, valid_data, checkpoint_dir=out)
    write_history(result.history, out / "history.tsv")
    last = result.history[-1]
    print(f"trained {len(result.history)} epochs; final train CE {last.train_ce:.6f}; best epoch {result.best_epoch}")
    return 0


# -- decode ------------------------------------------------------------------

def read_words(path) -> list[str]:
    """Words to decode: first column of each line, uppercased, de-duplicated."""
    seen, words = set(), []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith(";;;"):
                continue
            word = line.split("\t")[0].split()[0].upper()
            if word not in seen:
                seen.add(word)
                words.append(word)
    return words


def cmd_decode(cfg: RunConfig) -> int:
    _require(cfg, "model", "words", "out")
    if not Path(cfg.words).is_file():
        raise InputError(f"word list {cfg.words} not found")
    model = load_model(cfg.model)
    beam = BeamConfig(cfg.band, cfg.max_beam, cfg.max_length or None)
    words = read_words(cfg.words)
    items = decode_batch(model, words, beam, cfg.n_best, cfg.workers)
    failed = 0
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            if item.error is not None:
                failed += 1
                print(f"error\t{item.index}\t{item.word}\t{item.error}", file=sys.stderr)
                continue
            for line in format_results(item.word, item.results):
                fh.write(line + "\n")
    print(f"decoded {len(items) - failed} of {len(items)} words")
    return EXIT_PARTIAL if failed else 0


# -- eval --------------------------------------------------------------------

def read_hypotheses(path) -> list[tuple[str, tuple[str, ...]]]:
    """1-best per word from a decode file (first line of each word's block)."""
    out, last = [], None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise InputError(f"{path}:{lineno}: expected word<TAB>log-likelihood<TAB>phonemes")
            word = fields[0]
            if word != last:
                out.append((word, tuple(fields[2].split())))
                last = word
    return out


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "hyp", "data_dir")
    if cfg.partition not in PARTITIONS:
        raise InputError(f"partition must be one of {PARTITIONS}")
    if not Path(cfg.hyp).is_file():
        raise InputError(f"hypothesis file {cfg.hyp} not found")
    entries = _read_partition(Path(cfg.data_dir), cfg.partition)
    report = evaluate(read_hypotheses(cfg.hyp), entries)
    if cfg.out:
        write_report_tsv(report, cfg.out)
    print(report.summary())
    return 0


# -- argument parsing --------------------------------------------------------

COMMANDS = {
    "prepare": (cmd_prepare, ["lexicon", "format", "train_list", "valid_list", "test_list", "out"]),
    "align": (cmd_align, ["data_dir", "em_iters", "em_tol", "out"]),
    "train": (cmd_train, ["data_dir", "aligned", "architecture", "layers", "hidden_dim",
                          "letter_dim", "phoneme_dim", "window", "schedule", "learning_rate",
                          "segments", "minibatch", "max_epochs", "init_scale", "clip", "seed", "out"]),
    "decode": (cmd_decode, ["model", "words", "band", "max_beam", "max_length", "n_best",
                            "workers", "out"]),
    "eval": (cmd_eval, ["hyp", "data_dir", "partition", "out"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="g2plstm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, keys) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any setting; repeatable")
        for key in keys:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
        if name == "prepare":
            p.add_argument("--no-strip-stress", dest="strip_stress", action="store_const", const="false")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg.load(args.config)
    for key in RunConfig.keys():
        value = getattr(args, key, None)
        if value is not None:
            cfg.set(key, value, f"--{key.replace('_', '-')}")
    for item in args.set:
        if "=" not in item:
            raise RunConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value, "--set")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        print(f"# {args.command}: effective configuration", file=sys.stderr)
        for line in cfg.lines():
            print(f"#   {line}", file=sys.stderr)
        return COMMANDS[args.command][0](cfg)
    except TrainingDivergedError as exc:
        _err(f"training diverged: {exc}")
        return EXIT_DIVERGED
    except (InputError, RunConfigError, ConfigError, LexiconParseError, PartitionConflictError,
            CoverageError, ModelFileError, lexicon.VocabularyError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except OSError as exc:
        _err(f"{exc.filename}: {exc.strerror}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
