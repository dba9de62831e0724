"""Probabilistic suffix tree: counting, construction, scoring, persistence.

The tree stores contexts (recent-history suffixes) with their empirical
next-symbol distributions. Construction keeps a context only when it is
frequent enough and predicts some symbol markedly differently from its
own suffix; scoring walks the longest stored suffix per position.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence as Seq, TextIO

from .errors import CorruptModelError, FormatError, ModelVersionError
from .language import Vocabulary

MODEL_VERSION = 1

# Smallest positive float; reported instead of 0.0 when the likelihood
# underflows but the log-likelihood is finite, so likelihood == 0 remains
# synonymous with the zero_likelihood flag.
_TINY = 5e-324


@dataclass(frozen=True, slots=True)
class PstParams:
    """Construction hyperparameters.

    depth: maximum context length L. p_min: minimum context frequency
    N(s)/total for candidacy. threshold: minimum conditional probability a
    symbol must reach for the retention test. tau: retention keeps a
    context when some conditional differs from its suffix's by a factor
    of tau or more (either direction). epsilon: uniform smoothing floor
    mixed into every queried distribution.
    """

    depth: int = 14
    p_min: float = 0.0001
    threshold: float = 0.0005
    tau: float = 10.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")
        if not 0.0 <= self.p_min <= 1.0:
            raise ValueError(f"p_min must be in [0, 1], got {self.p_min}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if not (math.isfinite(self.tau) and self.tau >= 1.0):
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")


@dataclass
class ContextCounts:
    """Mergeable count tables for contexts up to max_len symbols.

    occurrences[s] counts s as a contiguous substring; follows[s][sym]
    counts occurrences of s immediately followed by sym within the same
    sequence. follows[()] holds successor pairs of the empty context (a
    count for every position that has a predecessor). The empty context
    itself occurs total_positions times.
    """

    max_len: int
    total_positions: int = 0
    n_sequences: int = 0
    unigrams: dict[int, int] = field(default_factory=dict)
    occurrences: dict[tuple[int, ...], int] = field(default_factory=dict)
    follows: dict[tuple[int, ...], dict[int, int]] = field(default_factory=dict)


def count_contexts(id_sequences: Iterable[Seq[int]], max_len: int) -> ContextCounts:
    """Count context occurrences and successors across sequences.

    Args:
        id_sequences: iterable of token-id sequences; sequences are never
            concatenated, so no context spans a sequence boundary.
        max_len: longest context length to count (0 counts only unigrams
            and empty-context successor pairs).

    Returns:
        ContextCounts covering every observed context of length <= max_len.
    """
    if max_len < 0:
        raise ValueError(f"max_len must be >= 0, got {max_len}")
    counts = ContextCounts(max_len=max_len)
    unigrams = counts.unigrams
    occurrences = counts.occurrences
    follows = counts.follows

    for raw in id_sequences:
        ids = tuple(raw)
        n = len(ids)
        counts.n_sequences += 1
        counts.total_positions += n
        for sym in ids:
            unigrams[sym] = unigrams.get(sym, 0) + 1
        if n > 1:
            pair_follows = follows.setdefault((), {})
            for sym in ids[1:]:
                pair_follows[sym] = pair_follows.get(sym, 0) + 1
        for length in range(1, max_len + 1):
            for j in range(n - length + 1):
                ctx = ids[j:j + length]
                occurrences[ctx] = occurrences.get(ctx, 0) + 1
                if j + length < n:
                    ctx_follows = follows.setdefault(ctx, {})
                    nxt = ids[j + length]
                    ctx_follows[nxt] = ctx_follows.get(nxt, 0) + 1
    return counts


def merge_counts(a: ContextCounts, b: ContextCounts) -> ContextCounts:
    """Entrywise sum of two count tables; commutative and associative."""
    if a.max_len != b.max_len:
        raise ValueError(f"max_len mismatch: {a.max_len} vs {b.max_len}")
    merged = ContextCounts(
        max_len=a.max_len,
        total_positions=a.total_positions + b.total_positions,
        n_sequences=a.n_sequences + b.n_sequences,
    )
    for src in (a, b):
        for sym, c in src.unigrams.items():
            merged.unigrams[sym] = merged.unigrams.get(sym, 0) + c
        for ctx, c in src.occurrences.items():
            merged.occurrences[ctx] = merged.occurrences.get(ctx, 0) + c
        for ctx, d in src.follows.items():
            dst = merged.follows.setdefault(ctx, {})
            for sym, c in d.items():
                dst[sym] = dst.get(sym, 0) + c
    return merged


@dataclass
class PstNode:
    """One stored context: its raw conditional and links one symbol
    deeper into the past (child context = (sym,) + this context)."""

    context: tuple[int, ...]
    dist: dict[int, float]
    children: dict[int, "PstNode"] = field(default_factory=dict)


@dataclass
class Pst:
    root: PstNode
    params: PstParams
    vocab: Vocabulary
    n_train_sequences: int = 0
    n_train_tokens: int = 0

    @property
    def node_count(self) -> int:
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += 1
            stack.extend(node.children.values())
        return total

    def iter_nodes(self) -> Iterable[PstNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())

    def smoothed(self, node: PstNode, sym: int) -> float:
        """P(sym | node) with the uniform epsilon floor mixed in."""
        raw = node.dist.get(sym, 0.0)
        eps = self.params.epsilon
        if eps == 0.0:
            return raw
        return (1.0 - len(self.vocab) * eps) * raw + eps

    def smoothed_dist(self, node: PstNode) -> dict[int, float]:
        return {sym: self.smoothed(node, sym) for sym in range(len(self.vocab))}


def _conditional(follows: dict[tuple[int, ...], dict[int, int]],
                 ctx: tuple[int, ...]) -> dict[int, float] | None:
    d = follows.get(ctx)
    if not d:
        return None
    total = sum(d.values())
    return {sym: c / total for sym, c in d.items()}


def build_tree(counts: ContextCounts, params: PstParams, vocab: Vocabulary) -> Pst:
    """Construct a PST from count tables.

    Candidates are observed contexts with frequency >= p_min. A candidate
    is retained when some symbol has conditional probability >= threshold
    AND that conditional differs from the suffix context's by a factor
    >= tau in either direction (a zero suffix conditional with a positive
    numerator counts as an infinite ratio). Retained contexts are closed
    under suffixes. The root always exists and holds the order-0
    (marginal) distribution.
    """
    m = len(vocab)
    if params.epsilon > 0.0 and (m == 0 or params.epsilon >= 1.0 / m):
        raise ValueError(
            f"epsilon {params.epsilon} must be < 1/{m} for this vocabulary")
    if counts.max_len < params.depth:
        raise ValueError(
            f"counts cover contexts up to {counts.max_len} symbols, need {params.depth}")

    total = counts.total_positions
    if total > 0:
        root_dist = {sym: c / total for sym, c in counts.unigrams.items()}
    elif m > 0:
        root_dist = {sym: 1.0 / m for sym in range(m)}
    else:
        root_dist = {}

    follows = counts.follows
    # The gates compare count ratios against float parameters. Doing that
    # in integer arithmetic on the parameters' exact binary values keeps
    # boundary cases (a ratio of exactly tau, a frequency of exactly
    # p_min) deterministic instead of at the mercy of division rounding.
    pmin_n, pmin_d = params.p_min.as_integer_ratio()
    thr_n, thr_d = params.threshold.as_integer_ratio()
    tau_n, tau_d = params.tau.as_integer_ratio()
    kept: set[tuple[int, ...]] = set()
    for ctx, occ in counts.occurrences.items():
        if len(ctx) > params.depth:
            continue
        if occ * pmin_d < pmin_n * total:
            continue
        ctx_follows = follows.get(ctx)
        if not ctx_follows:
            continue
        suffix_follows = follows.get(ctx[1:]) or {}
        denom_p = sum(ctx_follows.values())
        denom_q = sum(suffix_follows.values())
        for sym in set(ctx_follows) | set(suffix_follows):
            cp = ctx_follows.get(sym, 0)
            # threshold gate: cp/denom_p >= threshold
            if cp * thr_d < thr_n * denom_p:
                continue
            cq = suffix_follows.get(sym, 0)
            if cp == 0 and cq == 0:
                continue
            # ratio (cp/denom_p)/(cq/denom_q) vs tau, cq == 0 -> +inf
            lhs = cp * denom_q
            rhs = cq * denom_p
            if cq == 0 or lhs * tau_d >= tau_n * rhs or lhs * tau_n <= rhs * tau_d:
                kept.add(ctx)
                break

    closed: set[tuple[int, ...]] = set()
    for ctx in kept:
        for k in range(len(ctx)):
            closed.add(ctx[k:])

    root = PstNode(context=(), dist=root_dist)
    nodes: dict[tuple[int, ...], PstNode] = {(): root}
    for ctx in sorted(closed, key=lambda c: (len(c), c)):
        node = PstNode(context=ctx, dist=_conditional(follows, ctx) or {})
        nodes[ctx] = node
        nodes[ctx[1:]].children[ctx[0]] = node

    return Pst(
        root=root,
        params=params,
        vocab=vocab,
        n_train_sequences=counts.n_sequences,
        n_train_tokens=counts.total_positions,
    )


def lookup_context(pst: Pst, history: Seq[int]) -> PstNode:
    """Node of the longest stored suffix of history; root when none match."""
    node = pst.root
    for sym in reversed(history):
        child = node.children.get(sym)
        if child is None:
            break
        node = child
    return node


@dataclass(frozen=True, slots=True)
class Score:
    likelihood: float
    log2_likelihood: float
    per_symbol_log_loss: float
    zero_likelihood: bool
    length: int


def _zero_score(length: int) -> Score:
    return Score(
        likelihood=0.0,
        log2_likelihood=-math.inf,
        per_symbol_log_loss=math.inf,
        zero_likelihood=True,
        length=length,
    )


def score_sequence(pst: Pst, tokens: Iterable[str]) -> Score:
    """Likelihood of a token sequence under the tree.

    Each position is predicted from the longest stored suffix of the
    preceding tokens. An out-of-vocabulary token, or any zero smoothed
    probability, makes the whole sequence zero-likelihood. Accumulation
    happens in log2 space; the reported likelihood is clamped to the
    smallest positive float when exponentiation underflows.
    """
    texts = list(tokens)
    n = len(texts)
    if n == 0:
        return Score(1.0, 0.0, 0.0, False, 0)

    ids: list[int] = []
    for t in texts:
        i = pst.vocab.id_of(t)
        if i is None:
            return _zero_score(n)
        ids.append(i)

    log2_lik = 0.0
    for i in range(n):
        node = lookup_context(pst, ids[:i])
        p = pst.smoothed(node, ids[i])
        if p <= 0.0:
            return _zero_score(n)
        log2_lik += math.log2(p)

    likelihood = 2.0 ** log2_lik
    if likelihood == 0.0:
        likelihood = _TINY
    loss = -log2_lik / n + 0.0
    return Score(likelihood, log2_lik, loss, False, n)


def flag_anomalies(scores: Iterable[tuple[str, Score]],
                   limit: float) -> tuple[list[str], list[str]]:
    """Split scored ids into (flagged, zero_likelihood).

    Flagged ids have 0 < likelihood < limit, ordered ascending by
    likelihood (id breaks ties). Zero-likelihood ids cannot be ranked by
    likelihood and are returned separately, in input order.
    """
    if not 0.0 < limit <= 1.0:
        raise ValueError(f"limit must be in (0, 1], got {limit}")
    pairs = list(scores)
    flagged = [
        seq_id
        for _, seq_id in sorted(
            (s.likelihood, seq_id)
            for seq_id, s in pairs
            if not s.zero_likelihood and s.likelihood < limit
        )
    ]
    zeros = [seq_id for seq_id, s in pairs if s.zero_likelihood]
    return flagged, zeros


def save_model(pst: Pst, sink: TextIO, created: str | None = None) -> None:
    """Write the versioned model document.

    Raw distributions are stored as binary floats (via their shortest
    decimal repr), so a load never re-derives probabilities and scores
    are bit-equal across a save/load round trip.
    """
    nodes = sorted(pst.iter_nodes(), key=lambda nd: (len(nd.context), nd.context))
    doc: dict = {
        "version": MODEL_VERSION,
        "params": {
            "depth": pst.params.depth,
            "p_min": pst.params.p_min,
            "threshold": pst.params.threshold,
            "tau": pst.params.tau,
            "epsilon": pst.params.epsilon,
        },
        "vocab": pst.vocab.tokens(),
        "training": {
            "n_sequences": pst.n_train_sequences,
            "n_tokens": pst.n_train_tokens,
        },
        "nodes": [
            {
                "context": list(nd.context),
                "dist": [[sym, p] for sym, p in sorted(nd.dist.items())],
            }
            for nd in nodes
        ],
    }
    if created is not None:
        doc["created"] = created
    json.dump(doc, sink, sort_keys=True, indent=1)
    sink.write("\n")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CorruptModelError(message)


def load_model(source: TextIO) -> Pst:
    """Parse and validate a model document written by save_model."""
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"model is not valid JSON: {exc}") from None

    _require(isinstance(doc, dict), "model document is not an object")
    version = doc.get("version")
    _require(isinstance(version, int), "missing or non-integer version field")
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"model version {version} not supported (expected {MODEL_VERSION})")

    raw_params = doc.get("params")
    _require(isinstance(raw_params, dict), "missing params object")
    try:
        params = PstParams(
            depth=int(raw_params["depth"]),
            p_min=float(raw_params["p_min"]),
            threshold=float(raw_params["threshold"]),
            tau=float(raw_params["tau"]),
            epsilon=float(raw_params["epsilon"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"bad params: {exc}") from None

    raw_vocab = doc.get("vocab")
    _require(isinstance(raw_vocab, list), "missing vocab list")
    _require(all(isinstance(t, str) for t in raw_vocab), "non-string vocab entry")
    try:
        vocab = Vocabulary(raw_vocab)
    except ValueError as exc:
        raise CorruptModelError(f"bad vocab: {exc}") from None
    _require(len(vocab) == len(raw_vocab), "duplicate vocab tokens")
    m = len(vocab)

    training = doc.get("training")
    _require(isinstance(training, dict), "missing training object")
    n_sequences = training.get("n_sequences")
    n_tokens = training.get("n_tokens")
    _require(
        isinstance(n_sequences, int) and n_sequences >= 0
        and isinstance(n_tokens, int) and n_tokens >= 0,
        "bad training counts")

    raw_nodes = doc.get("nodes")
    _require(isinstance(raw_nodes, list) and raw_nodes, "missing nodes list")
    nodes: dict[tuple[int, ...], PstNode] = {}
    for entry in raw_nodes:
        _require(isinstance(entry, dict), "node entry is not an object")
        raw_ctx = entry.get("context")
        _require(isinstance(raw_ctx, list), "node missing context")
        _require(
            all(isinstance(s, int) and 0 <= s < m for s in raw_ctx),
            f"context symbol out of range in {raw_ctx!r}")
        ctx = tuple(raw_ctx)
        _require(len(ctx) <= params.depth, f"context longer than depth: {raw_ctx!r}")
        _require(ctx not in nodes, f"duplicate context {raw_ctx!r}")
        raw_dist = entry.get("dist")
        _require(isinstance(raw_dist, list), "node missing dist")
        dist: dict[int, float] = {}
        for item in raw_dist:
            _require(
                isinstance(item, list) and len(item) == 2, "malformed dist entry")
            sym, p = item
            _require(isinstance(sym, int) and 0 <= sym < m,
                     f"dist symbol out of range: {sym!r}")
            _require(isinstance(p, (int, float)) and 0.0 <= p <= 1.0,
                     f"dist probability out of range: {p!r}")
            _require(sym not in dist, f"duplicate dist symbol {sym}")
            dist[sym] = float(p)
        nodes[ctx] = PstNode(context=ctx, dist=dist)

    root = nodes.get(())
    _require(root is not None, "missing root node")
    for ctx, node in nodes.items():
        if not ctx:
            continue
        parent = nodes.get(ctx[1:])
        _require(parent is not None,
                 f"suffix closure broken: no parent for {list(ctx)!r}")
        parent.children[ctx[0]] = node

    return Pst(
        root=root,
        params=params,
        vocab=vocab,
        n_train_sequences=n_sequences,
        n_train_tokens=n_tokens,
    )
