"""Independent reference implementations used to cross-check the library.

Everything here is written the slow, obvious way (explicit loops, Fraction
arithmetic where it matters) so that agreement with the fast code is
meaningful evidence rather than the same algorithm twice.
"""

from __future__ import annotations

import math
from fractions import Fraction

from flowlang.language import Vocabulary
from flowlang.pst import Pst, PstParams
from flowlang.synth import MarkovSpec


# ---------------------------------------------------------------------------
# counting


def brute_context_stats(sequences, max_len):
    """Count context occurrences and successor pairs by direct enumeration.

    Returns (total_positions, n_sequences, unigrams, occurrences, follows)
    where follows includes the empty context mapped to successor-pair
    counts, mirroring the shape of ContextCounts.
    """
    total = 0
    n_seq = 0
    unigrams: dict[int, int] = {}
    occurrences: dict[tuple[int, ...], int] = {}
    follows: dict[tuple[int, ...], dict[int, int]] = {(): {}}
    for seq in sequences:
        seq = list(seq)
        n_seq += 1
        total += len(seq)
        for sym in seq:
            unigrams[sym] = unigrams.get(sym, 0) + 1
        for pos in range(1, len(seq)):
            follows[()][seq[pos]] = follows[()].get(seq[pos], 0) + 1
        for length in range(1, max_len + 1):
            for start in range(0, len(seq) - length + 1):
                ctx = tuple(seq[start:start + length])
                occurrences[ctx] = occurrences.get(ctx, 0) + 1
                nxt = start + length
                if nxt < len(seq):
                    row = follows.setdefault(ctx, {})
                    row[seq[nxt]] = row.get(seq[nxt], 0) + 1
    return total, n_seq, unigrams, occurrences, follows


def brute_conditional(follows, ctx):
    """Normalized successor distribution of ctx, or None if it has none."""
    row = follows.get(tuple(ctx))
    if not row:
        return None
    denom = sum(row.values())
    return {sym: Fraction(count, denom) for sym, count in row.items()}


def brute_retained_contexts(total, occurrences, follows, params):
    """Decide retention for every candidate context from first principles.

    Returns the set of contexts that pass the frequency, probability and
    ratio gates; suffix closure is NOT applied here.
    """
    # Fraction(float) is the parameter's exact binary value, which is the
    # value the gates are defined over.
    p_min = Fraction(params.p_min)
    threshold = Fraction(params.threshold)
    tau = Fraction(params.tau)
    retained = set()
    for ctx, occ in occurrences.items():
        if len(ctx) > params.depth:
            continue
        if total == 0 or Fraction(occ, total) < p_min:
            continue
        cond = brute_conditional(follows, ctx)
        if cond is None:
            continue
        suffix_cond = brute_conditional(follows, ctx[1:]) or {}
        for sym in set(cond) | set(suffix_cond):
            p = cond.get(sym, Fraction(0))
            q = suffix_cond.get(sym, Fraction(0))
            if p < threshold:
                continue
            if p == 0 and q == 0:
                continue
            if q == 0:
                retained.add(ctx)
                break
            if p / q >= tau or p / q <= 1 / tau:
                retained.add(ctx)
                break
    return retained


def suffix_closed(contexts):
    """True if every proper suffix of every context is present."""
    ctxs = set(contexts)
    for ctx in ctxs:
        for start in range(1, len(ctx)):
            if ctx[start:] not in ctxs:
                return False
    return True


# ---------------------------------------------------------------------------
# scoring


def brute_longest_context(pst: Pst, history):
    """Longest stored context that is a suffix of history, by scanning
    every node rather than walking the tree."""
    best = ()
    for node in pst.iter_nodes():
        ctx = node.context
        if len(ctx) <= len(history) and tuple(history[len(history) - len(ctx):]) == ctx:
            if len(ctx) >= len(best):
                best = ctx
    return best


def brute_score(pst: Pst, token_ids):
    """Chain-rule likelihood computed with full-scan context lookup."""
    m = len(pst.vocab)
    eps = pst.params.epsilon
    log2_total = 0.0
    likelihood = 1.0
    nodes_by_ctx = {node.context: node for node in pst.iter_nodes()}
    for pos, sym in enumerate(token_ids):
        ctx = brute_longest_context(pst, token_ids[:pos])
        raw = nodes_by_ctx[ctx].dist.get(sym, 0.0)
        p = raw if eps == 0.0 else (1.0 - m * eps) * raw + eps
        if p <= 0.0:
            return 0.0, None
        likelihood *= p
        log2_total += math.log2(p)
    return likelihood, log2_total


# ---------------------------------------------------------------------------
# evaluation


def pairwise_rank_statistic(examples):
    """Probability that a random attack outscores a random normal,
    counting ties as half, by explicit O(n^2) enumeration."""
    attacks = [e.anomaly_score for e in examples if e.label.value == "attack"]
    normals = [e.anomaly_score for e in examples if e.label.value == "normal"]
    wins = 0.0
    for a in attacks:
        for b in normals:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(attacks) * len(normals))


def brute_roc_points(examples):
    """ROC points at +inf and every distinct score, descending."""
    attacks = [e.anomaly_score for e in examples if e.label.value == "attack"]
    normals = [e.anomaly_score for e in examples if e.label.value == "normal"]
    points = [(0.0, 0.0, math.inf)]
    for cut in sorted(set(attacks) | set(normals), reverse=True):
        tpr = sum(1 for a in attacks if a >= cut) / len(attacks)
        fpr = sum(1 for b in normals if b >= cut) / len(normals)
        points.append((fpr, tpr, cut))
    return points


def trapezoid(points):
    area = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


# ---------------------------------------------------------------------------
# synthetic sources


def empirical_spec(corpus, order, alphabet_size):
    """Fit a dense order-k source to a corpus by plain counting.

    A suffix tree built with every pruning gate disabled scores position 0
    with the symbol marginal and each later position with the empirical
    conditional of the longest available context. This mirrors that: the
    initial distribution chains the order 0..k-1 conditionals, and rows
    for contexts that never gained a successor fall back to uniform so the
    construction still sums to one. The fallback rows are never consulted
    when scoring the training corpus itself.
    """
    follows: list[dict[tuple[int, ...], dict[int, int]]] = [
        {} for _ in range(order + 1)
    ]
    unigrams: dict[int, int] = {}
    total = 0
    for seq, _label in corpus:
        total += len(seq)
        for sym in seq:
            unigrams[sym] = unigrams.get(sym, 0) + 1
        for k in range(0, order + 1):
            for pos in range(max(k, 1), len(seq)):
                ctx = tuple(seq[pos - k:pos])
                row = follows[k].setdefault(ctx, {})
                row[seq[pos]] = row.get(seq[pos], 0) + 1

    def cond_row(k, ctx):
        row = follows[k].get(tuple(ctx))
        if not row:
            return [1.0 / alphabet_size] * alphabet_size
        denom = sum(row.values())
        return [row.get(sym, 0) / denom for sym in range(alphabet_size)]

    marginal = [unigrams.get(sym, 0) / total for sym in range(alphabet_size)]

    contexts = [()]
    for _ in range(order):
        contexts = [ctx + (s,) for ctx in contexts for s in range(alphabet_size)]

    transitions = {}
    for ctx in contexts:
        transitions[ctx] = tuple(cond_row(order, ctx))
    if order == 0:
        # A depth-0 tree scores every position with the marginal.
        transitions[()] = tuple(marginal)

    initial: dict[tuple[int, ...], float] = {}
    if order == 0:
        initial[()] = 1.0
    else:
        for prefix in contexts:
            p = marginal[prefix[0]]
            for k in range(1, order):
                p *= cond_row(k, prefix[:k])[prefix[k]]
            initial[prefix] = p
    return MarkovSpec(
        order=order,
        alphabet_size=alphabet_size,
        transitions=transitions,
        initial=initial,
    )


def random_markov_spec(rng, order, alphabet_size):
    """A random dense order-k source drawn from a given random.Random."""
    contexts = [()]
    for _ in range(order):
        contexts = [ctx + (sym,) for ctx in contexts for sym in range(alphabet_size)]
    transitions = {}
    for ctx in contexts:
        weights = [rng.random() + 0.05 for _ in range(alphabet_size)]
        denom = math.fsum(weights)
        row = [w / denom for w in weights]
        row[-1] = 1.0 - math.fsum(row[:-1])
        transitions[ctx] = tuple(row)
    weights = [rng.random() + 0.05 for _ in contexts]
    denom = math.fsum(weights)
    initial = {}
    for ctx, w in zip(contexts, weights):
        initial[ctx] = w / denom
    # force exact unity on the last entry
    last = contexts[-1]
    initial[last] = 1.0 - math.fsum(v for c, v in initial.items() if c != last)
    return MarkovSpec(
        order=order,
        alphabet_size=alphabet_size,
        transitions=transitions,
        initial=initial,
    )


# ---------------------------------------------------------------------------
# misc


def small_vocab(n):
    vocab = Vocabulary()
    for i in range(n):
        vocab.add(f"s{i}")
    return vocab


def exact_params(depth):
    """Parameters that disable every pruning gate."""
    return PstParams(depth=depth, p_min=0.0, threshold=0.0, tau=1.0, epsilon=0.0)
