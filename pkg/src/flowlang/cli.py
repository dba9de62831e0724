"""Command line front end: prepare, train, score, eval, synth, words.

Every stage reads and writes plain files so the pipeline is resumable
and each step is testable on its own. Diagnostics go to stderr; exit
codes: 0 success, 2 usage error, 3 format error, 4 data error.
"""

from __future__ import annotations

import argparse
import datetime
import io
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import DataError, FormatError
from .evaluate import EvalReport, evaluate
from .flows import CSV_HEADER, Label, parse_labeled_csv, parse_zeek_conn
from .language import (
    SessionPolicy,
    TokenScheme,
    Vocabulary,
    read_sequences,
    sessionize,
    write_sequences,
)
from .pst import (
    Pst,
    PstParams,
    Score,
    build_tree,
    count_contexts,
    flag_anomalies,
    load_model,
    save_model,
    score_sequence,
)
from .synth import GenConfig, corpus_to_sequences, demo_spec_pair, generate_corpus

SCORES_HEADER = "id,likelihood,per_symbol_log_loss,zero_likelihood"


@dataclass(frozen=True)
class RunConfig:
    """One parsed invocation; domain dataclasses carry the validation."""

    command: str
    input: str | None = None
    output: str | None = None
    model: str | None = None
    scores: str | None = None
    sequences: str | None = None
    out_dir: str | None = None
    wordlist: str | None = None
    scheme: TokenScheme = TokenScheme()
    policy: SessionPolicy = SessionPolicy()
    params: PstParams = PstParams()
    limit: float = 1e-6
    rank: str = "logloss"
    zero_policy: str = "exclude_zero"
    bins: int = 20
    precision_at: tuple[int, ...] = (10, 50, 100)
    seed: int = 0
    min_length: int = 1
    n_sequences: int = 2000
    length_min: int = 30
    length_max: int = 70
    anomaly_fraction: float = 0.05
    alphabet: int = 8
    no_timestamp: bool = False


def _now_utc() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _seq_id(index: int) -> str:
    return f"{index:08d}"


def _read_lines(path: str, lossy: bool = False) -> list[str]:
    errors = "replace" if lossy else "strict"
    try:
        with open(path, encoding="utf-8", errors=errors) as fh:
            return fh.readlines()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path} is not UTF-8 text: {exc}") from None


def _session_policy(text: str) -> SessionPolicy:
    if text in ("hour", "day", "week"):
        return SessionPolicy(kind=text)
    if text.startswith("gap:"):
        try:
            return SessionPolicy(kind="gap", gap_seconds=float(text[4:]))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(
        f"expected hour, day, week, or gap:SECONDS, got {text!r}")


def _precision_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"bad precision depths: {text!r}")
    return values


def _add_pst_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--depth", type=int, default=14, help="max context length")
    sp.add_argument("--p-min", type=float, default=0.0001,
                    help="min context frequency for candidacy")
    sp.add_argument("--threshold", type=float, default=0.0005,
                    help="min conditional probability in the retention test")
    sp.add_argument("--tau", type=float, default=10.0,
                    help="retention ratio against the suffix context")
    sp.add_argument("--epsilon", type=float, default=0.0,
                    help="uniform smoothing floor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowlang",
        description="Tokenize network flows, model them with a probabilistic "
                    "suffix tree, and rank sequences by likelihood.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="flows file -> sequences file")
    sp.add_argument("--in", dest="input", required=True,
                    help="Zeek conn log or labeled CSV (auto-detected)")
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--scheme", choices=("proto-bytes", "proto-density"),
                    default="proto-bytes")
    sp.add_argument("--bucket-width", type=int, default=10)
    sp.add_argument("--session", type=_session_policy, default=SessionPolicy(),
                    metavar="{hour,day,week,gap:SECONDS}")
    sp.add_argument("--min-length", type=int, default=1,
                    help="drop sequences with fewer flows")
    sp.add_argument("--no-timestamp", action="store_true")

    sp = sub.add_parser("train", help="sequences file -> model file")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", required=True)
    _add_pst_flags(sp)
    sp.add_argument("--no-timestamp", action="store_true")

    sp = sub.add_parser("score", help="model + sequences -> scores CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--limit", type=float, default=1e-6,
                    help="flag sequences with 0 < likelihood < limit")

    sp = sub.add_parser("eval", help="scores + sequences -> report and CSVs")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--sequences", required=True)
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--rank", choices=("logloss", "likelihood"), default="logloss")
    sp.add_argument("--zero-policy", choices=("exclude", "most-anomalous"),
                    default="exclude")
    sp.add_argument("--bins", type=int, default=20)
    sp.add_argument("--precision-at", type=_precision_list, default=(10, 50, 100),
                    metavar="N[,N...]")

    sp = sub.add_parser("synth", help="built-in Markov pair -> sequences file")
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--n", dest="n_sequences", type=int, default=2000)
    sp.add_argument("--length-min", type=int, default=30)
    sp.add_argument("--length-max", type=int, default=70)
    sp.add_argument("--anomaly-fraction", type=float, default=0.05)
    sp.add_argument("--alphabet", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--no-timestamp", action="store_true")

    sp = sub.add_parser("words", help="character-level demo on a wordlist")
    sp.add_argument("--wordlist", help="one lowercase word per line "
                                       "(default: bundled list)")
    sp.add_argument("--out", dest="output",
                    help="write the listing here instead of stdout")
    _add_pst_flags(sp)

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields: dict = {"command": args.command}
    for name in ("input", "output", "model", "scores", "sequences", "out_dir",
                 "wordlist", "limit", "bins", "precision_at", "seed",
                 "min_length", "n_sequences", "length_min", "length_max",
                 "anomaly_fraction", "alphabet", "no_timestamp", "rank"):
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    if hasattr(args, "zero_policy"):
        fields["zero_policy"] = (
            "exclude_zero" if args.zero_policy == "exclude" else "zero_most_anomalous")
    if hasattr(args, "scheme"):
        fields["scheme"] = TokenScheme(kind=args.scheme, bucket_width=args.bucket_width)
    if hasattr(args, "session"):
        fields["policy"] = args.session
    if hasattr(args, "depth"):
        fields["params"] = PstParams(
            depth=args.depth, p_min=args.p_min, threshold=args.threshold,
            tau=args.tau, epsilon=args.epsilon)
    return RunConfig(**fields)


def _sniff_format(lines: list[str]) -> str:
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            return "zeek"
        if [h.strip() for h in stripped.split(",")] == CSV_HEADER:
            return "csv"
        raise FormatError("unrecognized input format "
                          "(expected a Zeek conn log or the labeled CSV)")
    raise FormatError("empty input")


def cmd_prepare(cfg: RunConfig) -> int:
    lines = _read_lines(cfg.input, lossy=True)
    kind = _sniff_format(lines)
    if kind == "zeek":
        records, stats = parse_zeek_conn(lines)
    else:
        records, stats = parse_labeled_csv(lines)
    seqs, vocab = sessionize(
        records, cfg.scheme, cfg.policy, min_length=cfg.min_length)
    comment = None if cfg.no_timestamp else f"generated {_now_utc()}"
    with open(cfg.output, "w", encoding="utf-8") as fh:
        write_sequences(seqs, vocab, fh, comment=comment)
    by_label = {label: 0 for label in Label}
    for s in seqs:
        by_label[s.label] += 1
    print(f"rows: {stats.rows_read} read, {stats.rows_parsed} parsed, "
          f"{stats.rows_rejected} rejected")
    print(f"sequences: {len(seqs)}")
    print(f"vocabulary: {len(vocab)} tokens")
    print(f"labels: {by_label[Label.ATTACK]} attack, {by_label[Label.NORMAL]} normal, "
          f"{by_label[Label.UNLABELED]} unlabeled")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    seqs, vocab = read_sequences(_read_lines(cfg.input))
    counts = count_contexts((s.token_ids for s in seqs), cfg.params.depth)
    tree = build_tree(counts, cfg.params, vocab)
    created = None if cfg.no_timestamp else _now_utc()
    with open(cfg.output, "w", encoding="utf-8") as fh:
        save_model(tree, fh, created=created)
    print(f"nodes: {tree.node_count}")
    print(f"depth: {cfg.params.depth}")
    print(f"vocabulary: {len(vocab)} tokens")
    print(f"trained on {tree.n_train_sequences} sequences, "
          f"{tree.n_train_tokens} tokens")
    return 0


def _score_all(tree: Pst, seqs, vocab: Vocabulary) -> list[tuple[str, Score]]:
    out = []
    for i, seq in enumerate(seqs):
        texts = [vocab.token_of(t) for t in seq.token_ids]
        out.append((_seq_id(i), score_sequence(tree, texts)))
    return out


def _format_score_row(seq_id: str, s: Score) -> str:
    flag = "true" if s.zero_likelihood else "false"
    return f"{seq_id},{s.likelihood!r},{s.per_symbol_log_loss!r},{flag}\n"


def cmd_score(cfg: RunConfig) -> int:
    with open(cfg.model, encoding="utf-8") as fh:
        tree = load_model(fh)
    seqs, vocab = read_sequences(_read_lines(cfg.input))
    scored = _score_all(tree, seqs, vocab)
    flagged, zeros = flag_anomalies(scored, cfg.limit)
    with open(cfg.output, "w", encoding="utf-8") as fh:
        fh.write(SCORES_HEADER + "\n")
        for seq_id, s in scored:
            fh.write(_format_score_row(seq_id, s))
    print(f"scored {len(scored)} sequences: {len(flagged)} flagged below "
          f"{cfg.limit!r}, {len(zeros)} zero-likelihood")
    for seq_id in flagged:
        print(f"flag {seq_id}")
    for seq_id in zeros:
        print(f"zero {seq_id}")
    return 0


def _parse_scores_csv(lines: list[str]) -> dict[str, Score]:
    if not lines or lines[0].rstrip("\n") != SCORES_HEADER:
        raise FormatError(f"scores file must start with {SCORES_HEADER!r}")
    rows: dict[str, Score] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\n")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        seq_id, lik_text, loss_text, zero_text = parts
        if seq_id in rows:
            raise FormatError(f"line {lineno}: duplicate id {seq_id!r}")
        if zero_text not in ("true", "false"):
            raise FormatError(f"line {lineno}: bad zero_likelihood {zero_text!r}")
        try:
            likelihood = float(lik_text)
            loss = float(loss_text)
        except ValueError:
            raise FormatError(f"line {lineno}: bad numeric field") from None
        zero = zero_text == "true"
        log2_lik = -math.inf if likelihood == 0.0 else math.log2(likelihood)
        rows[seq_id] = Score(
            likelihood=likelihood, log2_likelihood=log2_lik,
            per_symbol_log_loss=loss, zero_likelihood=zero, length=1)
    return rows


def _report_json(report: EvalReport) -> dict:
    h = report.histogram
    return {
        "auc": report.auc,
        "n_attack": report.n_attack,
        "n_normal": report.n_normal,
        "n_zero_likelihood": report.n_zero_likelihood,
        "precision_at": {str(n): v for n, v in sorted(report.precision_at.items())},
        "histogram": {
            "edges": list(h.edges),
            "normal_counts": list(h.normal_counts),
            "attack_counts": list(h.attack_counts),
            "overflow_normal": h.overflow_normal,
            "overflow_attack": h.overflow_attack,
        },
    }


def cmd_eval(cfg: RunConfig) -> int:
    seqs, _ = read_sequences(_read_lines(cfg.sequences))
    rows = _parse_scores_csv(_read_lines(cfg.scores))
    if len(rows) != len(seqs):
        raise DataError(
            f"scores file has {len(rows)} rows for {len(seqs)} sequences")
    triples = []
    for i, seq in enumerate(seqs):
        seq_id = _seq_id(i)
        score = rows.get(seq_id)
        if score is None:
            raise DataError(f"scores file is missing id {seq_id}")
        triples.append((seq_id, score, seq.label))

    report = evaluate(
        triples, policy=cfg.zero_policy, rank=cfg.rank,
        n_bins=cfg.bins, precision_ns=cfg.precision_at)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_report_json(report), fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(out_dir / "roc.csv", "w", encoding="utf-8") as fh:
        fh.write("fpr,tpr,threshold\n")
        for pt in report.roc:
            fh.write(f"{pt.fpr!r},{pt.tpr!r},{pt.threshold!r}\n")
    with open(out_dir / "hist.csv", "w", encoding="utf-8") as fh:
        fh.write("bin_lo,bin_hi,normal_count,attack_count\n")
        h = report.histogram
        for b in range(len(h.normal_counts)):
            fh.write(f"{h.edges[b]!r},{h.edges[b + 1]!r},"
                     f"{h.normal_counts[b]},{h.attack_counts[b]}\n")
        fh.write(f"inf,inf,{h.overflow_normal},{h.overflow_attack}\n")

    print(f"auc: {report.auc!r}")
    print(f"examples: {report.n_attack} attack, {report.n_normal} normal, "
          f"{report.n_zero_likelihood} zero-likelihood")
    for n, v in sorted(report.precision_at.items()):
        print(f"precision@{n}: {v!r}")
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    background, anomaly = demo_spec_pair(cfg.alphabet)
    gen = GenConfig(
        n_sequences=cfg.n_sequences, length_min=cfg.length_min,
        length_max=cfg.length_max, anomaly_fraction=cfg.anomaly_fraction,
        seed=cfg.seed)
    corpus = generate_corpus(background, anomaly, gen)
    seqs, vocab = corpus_to_sequences(corpus, cfg.alphabet)
    comment = None if cfg.no_timestamp else f"generated {_now_utc()}"
    with open(cfg.output, "w", encoding="utf-8") as fh:
        write_sequences(seqs, vocab, fh, comment=comment)
    n_attack = sum(1 for s in seqs if s.label is Label.ATTACK)
    print(f"wrote {len(seqs)} sequences ({n_attack} attack, "
          f"{len(seqs) - n_attack} normal), alphabet {cfg.alphabet}")
    return 0


def _load_wordlist(cfg: RunConfig) -> list[str]:
    if cfg.wordlist is not None:
        lines = _read_lines(cfg.wordlist)
    else:
        data = resources.files("flowlang").joinpath("data/words.txt").read_text("utf-8")
        lines = data.splitlines()
    words = []
    for lineno, raw in enumerate(lines, start=1):
        word = raw.strip()
        if not word:
            continue
        if not word.isascii() or not word.isalpha() or word != word.lower():
            raise FormatError(f"line {lineno}: not a lowercase word: {word!r}")
        words.append(word)
    if not words:
        raise DataError("word list is empty")
    return words


def cmd_words(cfg: RunConfig) -> int:
    words = _load_wordlist(cfg)
    vocab = Vocabulary()
    id_seqs = [tuple(vocab.add(ch) for ch in word) for word in words]
    counts = count_contexts(id_seqs, cfg.params.depth)
    tree = build_tree(counts, cfg.params, vocab)
    scored = sorted(
        ((word, score_sequence(tree, list(word))) for word in words),
        key=lambda pair: (pair[1].per_symbol_log_loss, pair[0]),
    )
    listing = "".join(
        f"{word}\t{s.per_symbol_log_loss!r}\t{s.likelihood!r}\n"
        for word, s in scored)
    if cfg.output is not None:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(listing)
        print(f"scored {len(words)} words against a {tree.node_count}-node tree")
    else:
        sys.stdout.write(listing)
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "words": cmd_words,
}

_INPUT_FIELDS = ("input", "model", "scores", "sequences", "wordlist")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        for name in _INPUT_FIELDS:
            path = getattr(cfg, name)
            if path is not None and not Path(path).is_file():
                print(f"error: input file not found: {path}", file=sys.stderr)
                return 2
        return _COMMANDS[cfg.command](cfg)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
