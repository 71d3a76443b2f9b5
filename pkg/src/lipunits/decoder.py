"""Bigram language models, unit networks, and lattice Viterbi decoding.

The language model uses absolute discounting with unigram backoff: a seen
bigram keeps (count - d) / history-count and the withheld mass is spread over
the unseen successors in proportion to their unigram probability, so every
history's successor mass sums to one.

A unit network is a looped graph: per vocabulary unit, an epsilon arc carries
the (scaled) bigram score into a chain of classifier-model arcs, and the
chain's final arc emits the network-unit label and pays the transition
penalty.  Decoding is frame-synchronous token passing over the composed
network/HMM state graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError, LanguageModelError, MappingError
from .corpus import FeatureSequence
from .hmm import HmmSet
from .lexicon import P2VMap, PronLexicon, Transcript, PHONEME, VISEME, WORD, phonemes_to_units

START = "<s>"
END = "</s>"

# The classifier/network unit pairings supported by build_network.
UNIT_PAIRINGS = (
    (VISEME, VISEME),
    (VISEME, PHONEME),
    (PHONEME, PHONEME),
    (VISEME, WORD),
    (PHONEME, WORD),
    (WORD, WORD),
)


@dataclass(frozen=True)
class BigramModel:
    """Backoff bigram model over unit labels plus sentence markers."""

    vocab: tuple[str, ...]
    bigram_logp: dict[tuple[str, str], float]   # natural log, seen bigrams only
    backoff_logw: dict[str, float]              # natural log backoff weight per history
    unigram_logp: dict[str, float]              # natural log unigram distribution
    discount: float

    def successors(self) -> tuple[str, ...]:
        return self.vocab + (END,)

    def logprob(self, word: str, history: str) -> float:
        if word not in self.unigram_logp:
            raise LanguageModelError(f"label {word!r} not in language model")
        explicit = self.bigram_logp.get((history, word))
        if explicit is not None:
            return explicit
        return self.backoff_logw.get(history, 0.0) + self.unigram_logp[word]

    def sequence_logprob(self, labels) -> float:
        """Log probability of a full sentence including both markers."""
        total = 0.0
        history = START
        for label in labels:
            total += self.logprob(label, history)
            history = label
        return total + self.logprob(END, history)


def estimate_bigram(transcripts, discount: float = 0.5) -> BigramModel:
    """Absolute-discounting bigram estimation over label sequences.

    Sentence-start/-end markers are added per transcript.  Empty transcripts
    are ignored.
    """
    if not 0.0 < discount < 1.0:
        raise LanguageModelError(f"discount must be in (0, 1), got {discount}")
    seqs = []
    for tr in transcripts:
        labels = tuple(tr.labels if isinstance(tr, Transcript) else tr)
        if labels:
            seqs.append(labels)
    vocab = sorted({label for seq in seqs for label in seq})
    if not vocab:
        raise LanguageModelError("no labels to estimate a language model from")

    uni_counts: dict[str, int] = {}
    big_counts: dict[tuple[str, str], int] = {}
    hist_counts: dict[str, int] = {}
    for seq in seqs:
        history = START
        for label in (*seq, END):
            uni_counts[label] = uni_counts.get(label, 0) + 1
            big_counts[(history, label)] = big_counts.get((history, label), 0) + 1
            hist_counts[history] = hist_counts.get(history, 0) + 1
            history = label

    total_uni = sum(uni_counts.values())
    unigram = {w: uni_counts.get(w, 0) / total_uni for w in (*vocab, END)}
    unigram_logp = {
        w: (math.log(p) if p > 0 else -math.inf) for w, p in unigram.items()
    }

    bigram_logp: dict[tuple[str, str], float] = {}
    backoff_logw: dict[str, float] = {}
    for history, h_count in hist_counts.items():
        seen = {w: c for (h, w), c in big_counts.items() if h == history}
        leftover = discount * len(seen) / h_count
        unseen_mass = sum(unigram[w] for w in (*vocab, END) if w not in seen)
        if unseen_mass > 0:
            for w, c in seen.items():
                bigram_logp[(history, w)] = math.log((c - discount) / h_count)
            backoff_logw[history] = math.log(leftover / unseen_mass)
        else:
            # Every successor was seen; fold the withheld mass back in.
            scale = 1.0 / (1.0 - leftover)
            for w, c in seen.items():
                bigram_logp[(history, w)] = math.log((c - discount) / h_count * scale)
            backoff_logw[history] = -math.inf
    return BigramModel(
        vocab=tuple(vocab),
        bigram_logp=bigram_logp,
        backoff_logw=backoff_logw,
        unigram_logp=unigram_logp,
        discount=discount,
    )


_LN10 = math.log(10.0)


def format_arpa(lm: BigramModel) -> str:
    """Render in an ARPA-like text form with base-10 logs."""

    def ten(x: float) -> str:
        return repr(x / _LN10) if np.isfinite(x) else "-99"

    lines = [f"; discount {lm.discount!r}", "", "\\data\\"]
    uni_items = [START, *lm.vocab, END]
    lines.append(f"ngram 1={len(uni_items)}")
    lines.append(f"ngram 2={len(lm.bigram_logp)}")
    lines.append("")
    lines.append("\\1-grams:")
    for w in uni_items:
        prob = ten(lm.unigram_logp[w]) if w in lm.unigram_logp else "-99"
        bow = lm.backoff_logw.get(w)
        if bow is None:
            lines.append(f"{prob}\t{w}")
        else:
            lines.append(f"{prob}\t{w}\t{ten(bow)}")
    lines.append("")
    lines.append("\\2-grams:")
    for (h, w), lp in sorted(lm.bigram_logp.items()):
        lines.append(f"{ten(lp)}\t{h}\t{w}")
    lines.append("")
    lines.append("\\end\\")
    return "\n".join(lines) + "\n"


def parse_arpa(text: str) -> BigramModel:
    discount = 0.5
    section = None
    unigram_logp: dict[str, float] = {}
    backoff_logw: dict[str, float] = {}
    bigram_logp: dict[tuple[str, str], float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("; discount"):
            discount = float(line.split()[2])
            continue
        if line in ("\\data\\", "\\end\\"):
            section = None
            continue
        if line == "\\1-grams:":
            section = 1
            continue
        if line == "\\2-grams:":
            section = 2
            continue
        if section is None:
            continue
        parts = line.split()
        if section == 1:
            prob, w = float(parts[0]), parts[1]
            if w != START:
                unigram_logp[w] = prob * _LN10
            if len(parts) > 2:
                backoff_logw[w] = float(parts[2]) * _LN10
        elif section == 2:
            bigram_logp[(parts[1], parts[2])] = float(parts[0]) * _LN10
    if not unigram_logp:
        raise LanguageModelError("no unigram section in language-model file")
    vocab = tuple(sorted(w for w in unigram_logp if w != END))
    return BigramModel(
        vocab=vocab,
        bigram_logp=bigram_logp,
        backoff_logw=backoff_logw,
        unigram_logp=unigram_logp,
        discount=discount,
    )


def write_arpa(lm: BigramModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_arpa(lm))


def read_arpa(path) -> BigramModel:
    with open(path, encoding="utf-8") as fh:
        return parse_arpa(fh.read())


@dataclass(frozen=True)
class Arc:
    """One network arc: either an epsilon (model None) or a model arc."""

    src: int
    dst: int
    model: str | None
    lm: float = 0.0
    emit: str | None = None
    penalize: bool = False


@dataclass(frozen=True)
class UnitNetwork:
    n_nodes: int
    start: int
    end: int
    arcs: tuple[Arc, ...]
    granularity: str

    def model_labels(self) -> set[str]:
        return {a.model for a in self.arcs if a.model is not None}


@dataclass(frozen=True)
class DecodeParams:
    grammar_scale: float = 1.0
    penalty: float = 0.5   # natural-log units, charged once per emitted label

    def __post_init__(self):
        if self.grammar_scale < 0:
            raise DecodeError("grammar scale must be >= 0")


def _chain_for(unit: str, classifier: str, network: str, lex, pmap) -> list[str]:
    if network == WORD:
        pron = lex.pronunciation(unit)
        if classifier == PHONEME:
            return list(pron)
        if classifier == VISEME:
            return list(phonemes_to_units(Transcript(PHONEME, pron), pmap).labels)
        return [unit]
    if network == PHONEME:
        if classifier == PHONEME:
            return [unit]
        unit_label = pmap.unit_of(unit)
        if unit_label is None:
            raise MappingError(f"phoneme {unit!r} is not covered by the map")
        return [unit_label]
    return [unit]


def build_network(
    lm: BigramModel,
    lex: PronLexicon | None,
    pmap: P2VMap | None,
    classifier_units: str,
    network_units: str,
) -> UnitNetwork:
    """Build the looped bigram network for one classifier/network pairing.

    Word arcs expand into their pronunciations (and on to visual units when
    the classifiers are visual units); the expansion's final arc emits the
    network-unit label.  Decoding output granularity equals network_units.
    """
    if (classifier_units, network_units) not in UNIT_PAIRINGS:
        raise DecodeError(
            f"unsupported pairing: {classifier_units}/{network_units}"
        )
    if network_units == WORD and lex is None:
        raise DecodeError("word networks need a lexicon")
    if classifier_units == VISEME and network_units != VISEME and pmap is None:
        raise DecodeError("visual-unit classifiers need a phoneme-to-unit map")

    vocab = lm.vocab
    n_nodes = 2 + 2 * len(vocab)
    start, end = 0, 1
    hist = {v: 2 + 2 * k for k, v in enumerate(vocab)}
    entry = {v: 3 + 2 * k for k, v in enumerate(vocab)}
    arcs: list[Arc] = []
    next_node = n_nodes

    for v in vocab:
        arcs.append(Arc(src=start, dst=entry[v], model=None, lm=lm.logprob(v, START)))
        for u in vocab:
            arcs.append(Arc(src=hist[u], dst=entry[v], model=None, lm=lm.logprob(v, u)))
    for u in vocab:
        arcs.append(Arc(src=hist[u], dst=end, model=None, lm=lm.logprob(END, u)))

    for v in vocab:
        chain = _chain_for(v, classifier_units, network_units, lex, pmap)
        node = entry[v]
        for k, model_label in enumerate(chain):
            last = k == len(chain) - 1
            dst = hist[v] if last else next_node
            if not last:
                next_node += 1
            arcs.append(
                Arc(
                    src=node,
                    dst=dst,
                    model=model_label,
                    emit=v if last else None,
                    penalize=last,
                )
            )
            node = dst
    return UnitNetwork(
        n_nodes=next_node,
        start=start,
        end=end,
        arcs=tuple(arcs),
        granularity=network_units,
    )


class _Graph:
    """The network compiled against a model set for frame-synchronous search."""

    def __init__(self, hmms: HmmSet, net: UnitNetwork, params: DecodeParams):
        for label in sorted(net.model_labels()):
            hmms[label]  # raises on unmodeled labels
        self.net = net
        self.params = params
        self.distinct = sorted(net.model_labels())
        d_index = {m: k for k, m in enumerate(self.distinct)}

        model_arcs = [a for a in net.arcs if a.model is not None]
        eps: list[tuple[int, int, float, int | None, str | None]] = []
        for a in net.arcs:
            if a.model is None:
                eps.append((a.src, a.dst, params.grammar_scale * a.lm, None, a.emit))

        st_arc: list[int] = []
        st_distinct: list[int] = []
        st_s: list[int] = []
        entry_logp: list[float] = []
        exit_logp: list[float] = []
        src_node: list[int] = []
        dst_node: list[int] = []
        in_edges: list[tuple[int, int, float]] = []  # (dst_state, src_state, logp)
        self.arc_emit: list[str | None] = []
        base = 0
        for arc_id, a in enumerate(model_arcs):
            model = hmms[a.model]
            s_m = model.n_states
            with np.errstate(divide="ignore"):
                log_t = np.log(model.trans)
            static = params.grammar_scale * a.lm - (params.penalty if a.penalize else 0.0)
            for s in range(s_m):
                st_arc.append(arc_id)
                st_distinct.append(d_index[a.model])
                st_s.append(s)
                entry_logp.append(static + log_t[0, s + 1])
                exit_logp.append(log_t[s + 1, s_m + 1])
                src_node.append(a.src)
                dst_node.append(a.dst)
            for i in range(s_m):
                for j in range(s_m):
                    if model.trans[i + 1, j + 1] > 0:
                        in_edges.append((base + j, base + i, log_t[i + 1, j + 1]))
            if model.trans[0, s_m + 1] > 0:
                eps.append((a.src, a.dst, static + log_t[0, s_m + 1], arc_id, a.emit))
            self.arc_emit.append(a.emit)
            base += s_m
        self.n_states = base
        self.st_arc = np.array(st_arc, dtype=np.int64)
        self.st_distinct = np.array(st_distinct, dtype=np.int64)
        self.st_s = np.array(st_s, dtype=np.int64)
        self.entry_logp = np.array(entry_logp)
        self.exit_logp = np.array(exit_logp)
        self.src_node = np.array(src_node, dtype=np.int64)
        self.dst_node = np.array(dst_node, dtype=np.int64)

        width = 1
        per_state: list[list[tuple[int, float]]] = [[] for _ in range(self.n_states)]
        for dst, src, logp in in_edges:
            per_state[dst].append((src, logp))
        width = max((len(lst) for lst in per_state), default=1) or 1
        self.pred_state = np.zeros((self.n_states, width), dtype=np.int64)
        self.pred_logp = np.full((self.n_states, width), -np.inf)
        for n, lst in enumerate(per_state):
            for k, (src, logp) in enumerate(lst):
                self.pred_state[n, k] = src
                self.pred_logp[n, k] = logp

        per_node: list[list[int]] = [[] for _ in range(net.n_nodes)]
        for n in range(self.n_states):
            if np.isfinite(self.exit_logp[n]):
                per_node[self.dst_node[n]].append(n)
        wx = max((len(lst) for lst in per_node), default=1) or 1
        self.node_exit_state = np.zeros((net.n_nodes, wx), dtype=np.int64)
        self.node_exit_logp = np.full((net.n_nodes, wx), -np.inf)
        for v, lst in enumerate(per_node):
            for k, n in enumerate(lst):
                self.node_exit_state[v, k] = n
                self.node_exit_logp[v, k] = self.exit_logp[n]

        # Epsilon arcs, relaxed in passes; their graph must be acyclic.
        self.eps = eps
        order = self._eps_depth()
        self.eps_rounds = max(order) if order else 0
        per_dst: list[list[tuple[int, float, int]]] = [[] for _ in range(net.n_nodes)]
        for e_id, (src, dst, logp, _arc, _emit) in enumerate(eps):
            per_dst[dst].append((src, logp, e_id))
        we = max((len(lst) for lst in per_dst), default=1) or 1
        self.eps_pred_node = np.zeros((net.n_nodes, we), dtype=np.int64)
        self.eps_logp = np.full((net.n_nodes, we), -np.inf)
        self.eps_id = np.full((net.n_nodes, we), -1, dtype=np.int64)
        for v, lst in enumerate(per_dst):
            for k, (src, logp, e_id) in enumerate(lst):
                self.eps_pred_node[v, k] = src
                self.eps_logp[v, k] = logp
                self.eps_id[v, k] = e_id

    def _eps_depth(self) -> list[int]:
        succ: dict[int, list[int]] = {}
        for src, dst, *_ in self.eps:
            succ.setdefault(src, []).append(dst)
        depth: dict[int, int] = {}

        def visit(node, seen):
            if node in depth:
                return depth[node]
            if node in seen:
                raise DecodeError("epsilon cycle in network")
            seen = seen | {node}
            d = 1 + max((visit(n, seen) for n in succ.get(node, [])), default=0)
            depth[node] = d
            return d

        return [visit(src, frozenset()) for src, *_ in self.eps]


def _emissions(hmms: HmmSet, graph: _Graph, frames: np.ndarray) -> np.ndarray:
    t_len = frames.shape[0]
    log_b = np.empty((t_len, graph.n_states))
    for d, label in enumerate(graph.distinct):
        state_ll, _ = hmms[label].state_log_likelihood(frames)
        cols = np.flatnonzero(graph.st_distinct == d)
        log_b[:, cols] = state_ll[:, graph.st_s[cols]]
    return log_b


def decode(
    hmms: HmmSet,
    net: UnitNetwork,
    features,
    params: DecodeParams = DecodeParams(),
) -> tuple[list[str], float]:
    """Best-path token-passing Viterbi through the composed network.

    Returns the emitted label sequence at the network's granularity and the
    path log score: acoustic log-likelihood plus grammar_scale times the LM
    score minus the penalty per emitted label.
    """
    frames = features.frames if isinstance(features, FeatureSequence) else np.asarray(features)
    graph = _Graph(hmms, net, params)
    t_len = frames.shape[0]
    if t_len < 1:
        raise DecodeError("no frames to decode")
    log_b = _emissions(hmms, graph, frames)
    n_nodes = net.n_nodes
    neg = -np.inf

    def relax(node_score):
        """Epsilon relaxation; returns provenance (pred node, eps id) per node."""
        prov_node = np.full(n_nodes, -1, dtype=np.int64)
        prov_eps = np.full(n_nodes, -1, dtype=np.int64)
        for _ in range(graph.eps_rounds):
            cand = node_score[graph.eps_pred_node] + graph.eps_logp
            best = cand.argmax(axis=1)
            vals = cand[np.arange(n_nodes), best]
            better = vals > node_score
            if not np.any(better):
                break
            node_score = np.where(better, vals, node_score)
            prov_node[better] = graph.eps_pred_node[better, best[better]]
            prov_eps[better] = graph.eps_id[better, best[better]]
        return node_score, prov_node, prov_eps

    node_score = np.full(n_nodes, neg)
    node_score[net.start] = 0.0
    node_score, pn, pe = relax(node_score)
    init_prov = (pn, pe)

    state_bp = np.full((t_len, graph.n_states), -2, dtype=np.int64)  # -1 = arc entry
    node_from_state = np.full((t_len, n_nodes), -1, dtype=np.int64)
    node_eps_prov = []

    state_score = np.full(graph.n_states, neg)
    for t in range(t_len):
        entry_cand = node_score[graph.src_node] + graph.entry_logp
        internal = state_score[graph.pred_state] + graph.pred_logp
        k_best = internal.argmax(axis=1)
        rows = np.arange(graph.n_states)
        internal_best = internal[rows, k_best]
        take_entry = entry_cand >= internal_best
        state_score = np.where(take_entry, entry_cand, internal_best) + log_b[t]
        state_bp[t] = np.where(take_entry, -1, graph.pred_state[rows, k_best])

        exit_cand = state_score[graph.node_exit_state] + graph.node_exit_logp
        kx = exit_cand.argmax(axis=1)
        node_rows = np.arange(n_nodes)
        node_new = exit_cand[node_rows, kx]
        valid = np.isfinite(node_new)
        node_from_state[t][valid] = graph.node_exit_state[node_rows, kx][valid]
        node_new = np.where(valid, node_new, neg)
        node_score, pn, pe = relax(node_new)
        eps_better = pn >= 0
        node_from_state[t][eps_better] = -1
        node_eps_prov.append((pn, pe))

    score = float(node_score[net.end])
    if not np.isfinite(score):
        raise DecodeError("no reachable end node")

    # Backtrace: resolve epsilon chains at each boundary, then walk each
    # model arc back to its entry frame.
    labels_rev: list[str] = []
    t = t_len - 1
    node = net.end
    while True:
        if t >= 0:
            pn, pe = node_eps_prov[t]
        else:
            pn, pe = init_prov
        while pn[node] >= 0:
            emit = graph.eps[pe[node]][4]
            if emit is not None:
                labels_rev.append(emit)
            node = int(pn[node])
        if t < 0:
            break
        state = int(node_from_state[t][node])
        if state < 0:
            raise DecodeError("backtrace lost (internal error)")
        emit = graph.arc_emit[graph.st_arc[state]]
        if emit is not None:
            labels_rev.append(emit)
        while state_bp[t][state] != -1:
            state = int(state_bp[t][state])
            t -= 1
        node = int(graph.src_node[state])
        t -= 1
    if node != net.start:
        raise DecodeError("backtrace did not reach the start node (internal error)")
    return list(reversed(labels_rev)), score
