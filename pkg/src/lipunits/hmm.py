"""Left-to-right diagonal-covariance GMM-HMMs and embedded training.

Models carry S emitting states plus non-emitting entry/exit states; the
short-pause model "sp" has a single emitting state and an entry-to-exit skip
arc.  Training concatenates the models named by each utterance's transcript
into a composite chain and runs log-domain forward-backward accumulation;
tied states pool their statistics.  All probability work stays in the log
domain, so underflow cannot occur and any NaN is an internal error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ModelError, TrainingError
from .corpus import FeatureSequence
from .lexicon import SIL, SP

log = logging.getLogger(__name__)

ABS_VAR_FLOOR = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


def logsumexp_last(x: np.ndarray) -> np.ndarray:
    """logsumexp over the last axis, tolerant of all -inf rows."""
    m = np.max(x, axis=-1)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    s = np.exp(x - shift[..., None]).sum(axis=-1)
    with np.errstate(divide="ignore"):
        out = shift + np.log(s)
    return np.where(finite, out, -np.inf)


@dataclass
class GmmHmm:
    """One left-to-right model: per-state Gaussian mixtures plus transitions.

    Transition matrix indices: 0 is the non-emitting entry state, 1..S the
    emitting states, S+1 the non-emitting exit.  Every row except the exit
    row is a probability distribution; the exit row is all zero.
    """

    label: str
    means: np.ndarray       # (S, G, D)
    variances: np.ndarray   # (S, G, D)
    weights: np.ndarray     # (S, G)
    trans: np.ndarray       # (S+2, S+2)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        s, g, d = self.means.shape
        if self.variances.shape != (s, g, d) or self.weights.shape != (s, g):
            raise ModelError(f"model {self.label!r}: inconsistent parameter shapes")
        if self.trans.shape != (s + 2, s + 2):
            raise ModelError(f"model {self.label!r}: transition matrix must be {(s + 2, s + 2)}")

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def n_components(self) -> int:
        return self.means.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    def copy(self, label: str | None = None) -> "GmmHmm":
        return GmmHmm(
            label=self.label if label is None else label,
            means=self.means.copy(),
            variances=self.variances.copy(),
            weights=self.weights.copy(),
            trans=self.trans.copy(),
        )

    def validate(self, floor: np.ndarray | None = None) -> None:
        s = self.n_states
        row_sums = self.trans[: s + 1].sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > 1e-10:
            raise ModelError(f"model {self.label!r}: transition rows must sum to 1")
        if np.any(np.abs(self.trans[s + 1]) > 0):
            raise ModelError(f"model {self.label!r}: exit row must be zero")
        if np.max(np.abs(self.weights.sum(axis=1) - 1.0)) > 1e-10:
            raise ModelError(f"model {self.label!r}: mixture weights must sum to 1")
        if np.any(self.variances <= 0):
            raise ModelError(f"model {self.label!r}: variances must be positive")
        if floor is not None and np.any(self.variances < floor - 1e-12):
            raise ModelError(f"model {self.label!r}: variance below floor")

    def component_log_likelihood(self, frames: np.ndarray) -> np.ndarray:
        """Per-frame log density of every mixture component: (T, S, G)."""
        diff = frames[:, None, None, :] - self.means[None]
        quad = np.sum(diff * diff / self.variances[None], axis=3)
        gconst = self.dim * LOG_2PI + np.log(self.variances).sum(axis=2)
        return -0.5 * (quad + gconst[None])

    def state_log_likelihood(self, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (state log density (T, S), component log density (T, S, G))."""
        comp = self.component_log_likelihood(frames)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        state = logsumexp_last(comp + logw[None])
        return state, comp


@dataclass(frozen=True)
class StateTie:
    """Emission tie: every alias state shares the owner state's parameters."""

    owner: tuple[str, int]
    aliases: tuple[tuple[str, int], ...]


@dataclass
class HmmSet:
    """A labeled collection of models plus state-tying records."""

    models: dict[str, GmmHmm]
    ties: tuple[StateTie, ...] = ()

    def __post_init__(self):
        for label, model in self.models.items():
            if model.label != label:
                raise ModelError(f"model keyed {label!r} is labeled {model.label!r}")
        if SP in self.models and self.models[SP].n_states != 1:
            raise ModelError("short-pause model must have exactly one emitting state")
        for tie in self.ties:
            for label, state in (tie.owner, *tie.aliases):
                if label not in self.models:
                    raise ModelError(f"tie references unknown model {label!r}")
                if not 0 <= state < self.models[label].n_states:
                    raise ModelError(f"tie references state {state} of {label!r}")

    def labels(self) -> list[str]:
        return list(self.models)

    def __getitem__(self, label: str) -> GmmHmm:
        try:
            return self.models[label]
        except KeyError:
            raise ModelError(f"no model for label {label!r}") from None

    def copy(self) -> "HmmSet":
        return HmmSet(models={k: m.copy() for k, m in self.models.items()}, ties=self.ties)

    def physical_states(self) -> dict[tuple[str, int], tuple[str, int]]:
        """Map every (label, state) to its owning physical state under ties."""
        owner_of = {}
        for tie in self.ties:
            for alias in tie.aliases:
                owner_of[alias] = tie.owner
        phys = {}
        for label, model in self.models.items():
            for s in range(model.n_states):
                key = (label, s)
                while key in owner_of:
                    key = owner_of[key]
                phys[(label, s)] = key
        return phys


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 11
    floor_factor: float = 1e-4    # of the global per-dimension variance
    beam: float | None = None     # optional log-domain pruning beam
    seed: int = 0                 # drives the symmetry-breaking jitter
    jitter_eps: float = 0.01      # jitter magnitude as a fraction of global std

    def __post_init__(self):
        if self.iterations < 1:
            raise TrainingError("iterations must be >= 1")
        if self.floor_factor <= 0:
            raise TrainingError("variance floor factor must be > 0")


def global_stats(utts) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance over every frame of the corpus."""
    frames = np.concatenate([u.features.frames for u in utts], axis=0)
    return frames.mean(axis=0), frames.var(axis=0)


def variance_floor(gvar: np.ndarray, factor: float) -> np.ndarray:
    return np.maximum(factor * gvar, ABS_VAR_FLOOR)


def _lr_transitions(n_states: int) -> np.ndarray:
    trans = np.zeros((n_states + 2, n_states + 2))
    trans[0, 1] = 1.0
    for s in range(1, n_states + 1):
        trans[s, s] = 0.5
        trans[s, s + 1] = 0.5
    return trans


def _sp_transitions() -> np.ndarray:
    # Single emitting state with an entry-to-exit skip arc.
    trans = np.zeros((3, 3))
    trans[0, 1] = 0.5
    trans[0, 2] = 0.5
    trans[1, 1] = 0.5
    trans[1, 2] = 0.5
    return trans


def flat_start(corpus, labels, proto: tuple[int, int, int], cfg: TrainConfig) -> HmmSet:
    """Initialize one model per label from the global corpus statistics.

    Every Gaussian mean starts at the global frame mean and every variance at
    the (floored) global variance, so all models are defined equal.  A seeded
    jitter of magnitude jitter_eps * global std, drawn once and shared by all
    labels, separates the mixture components of a state; identical components
    would otherwise never diverge under re-estimation.  The short-pause label
    gets a single emitting state with a skip arc; all others use the prototype
    state count.
    """
    if not labels:
        raise ModelError("no labels to initialize")
    corpus = list(corpus)
    if not corpus:
        raise TrainingError("empty corpus")
    n_states, n_comp, dim = proto
    if corpus[0].features.dim != dim:
        raise ModelError(
            f"prototype dimension {dim} does not match corpus dimension {corpus[0].features.dim}"
        )
    gmean, gvar = global_stats(corpus)
    floor = variance_floor(gvar, cfg.floor_factor)
    var0 = np.maximum(gvar, floor)
    gstd = np.sqrt(var0)
    rng = np.random.default_rng(cfg.seed)
    jitter = cfg.jitter_eps * gstd * rng.standard_normal((n_states, n_comp, dim))

    models = {}
    for label in labels:
        if label == SP:
            s_l = 1
            trans = _sp_transitions()
        else:
            s_l = n_states
            trans = _lr_transitions(s_l)
        models[label] = GmmHmm(
            label=label,
            means=np.tile(gmean, (s_l, n_comp, 1)) + jitter[:s_l],
            variances=np.tile(var0, (s_l, n_comp, 1)),
            weights=np.full((s_l, n_comp), 1.0 / n_comp),
            trans=trans,
        )
    return HmmSet(models=models)


def tie_sp(hmms: HmmSet) -> HmmSet:
    """Alias the short-pause emitting state to the silence center state.

    After tying, re-estimation pools their statistics and their emission
    parameters stay equal.  Untying is unsupported; tying twice is an error.
    """
    if SIL not in hmms.models:
        raise ModelError("tie_sp requires a 'sil' model")
    if SP not in hmms.models:
        raise ModelError("tie_sp requires an 'sp' model")
    if hmms.models[SIL].n_states != 3:
        raise ModelError("'sil' must have three emitting states")
    for tie in hmms.ties:
        if (SP, 0) in tie.aliases or tie.owner == (SP, 0):
            raise ModelError("'sp' is already tied; untying is unsupported")
    out = hmms.copy()
    center = 1
    sil = out.models[SIL]
    sp = out.models[SP]
    sp.means[0] = sil.means[center].copy()
    sp.variances[0] = sil.variances[center].copy()
    sp.weights[0] = sil.weights[center].copy()
    return HmmSet(
        models=out.models,
        ties=out.ties + (StateTie(owner=(SIL, center), aliases=((SP, 0),)),),
    )


class _TransLayout:
    """Flat addressing of every model's transition matrix in one vector."""

    def __init__(self, hmms: HmmSet):
        self.labels = list(hmms.models)
        self.base: dict[str, int] = {}
        self.side: dict[str, int] = {}
        offset = 0
        for label in self.labels:
            side = hmms.models[label].n_states + 2
            self.base[label] = offset
            self.side[label] = side
            offset += side * side
        self.total = offset

    def flat(self, label: str, row: int, col: int) -> int:
        return self.base[label] + row * self.side[label] + col

    def log_all(self, hmms: HmmSet) -> np.ndarray:
        out = np.empty(self.total)
        with np.errstate(divide="ignore"):
            for label in self.labels:
                base, side = self.base[label], self.side[label]
                out[base : base + side * side] = np.log(hmms.models[label].trans).ravel()
        return out


class CompositeChain:
    """The concatenation of the models named by one transcript.

    Structure (states, edges, and which transition-matrix entries each edge
    multiplies together) is fixed; edge log probabilities are refreshed from
    the current models every iteration.  Entry and exit pass through the
    non-emitting junctions, including chains of skippable models, with one
    edge per distinct junction path so statistics attribute exactly.
    """

    def __init__(self, hmms: HmmSet, labels, layout: _TransLayout):
        self.labels = tuple(labels)
        if not self.labels:
            raise TrainingError("empty transcript")
        self.distinct = sorted(set(self.labels))
        for label in self.distinct:
            if label not in hmms.models:
                raise ModelError(f"transcript label {label!r} has no model")
        d_index = {label: k for k, label in enumerate(self.distinct)}
        self.pos_distinct = [d_index[label] for label in self.labels]

        n_states_of = [hmms.models[label].n_states for label in self.labels]
        offsets = np.cumsum([0] + n_states_of)
        self.n_states = int(offsets[-1])
        self.state_pos = np.empty(self.n_states, dtype=np.int64)
        self.state_s = np.empty(self.n_states, dtype=np.int64)
        for l, s_l in enumerate(n_states_of):
            self.state_pos[offsets[l] : offsets[l + 1]] = l
            self.state_s[offsets[l] : offsets[l + 1]] = np.arange(s_l)
        self.state_distinct = np.array(
            [self.pos_distinct[p] for p in self.state_pos], dtype=np.int64
        )
        # Composite columns grouped by (distinct model, model state).
        self.state_cols: list[list[np.ndarray]] = []
        for d, label in enumerate(self.distinct):
            of_model = self.state_distinct == d
            self.state_cols.append(
                [
                    np.flatnonzero(of_model & (self.state_s == s))
                    for s in range(hmms.models[label].n_states)
                ]
            )

        trans_of = [hmms.models[label].trans for label in self.labels]
        exit_of = [t.shape[0] - 1 for t in trans_of]

        def attr(l, row, col):
            return layout.flat(self.labels[l], row, col)

        skippable = [trans_of[l][0, exit_of[l]] > 0 for l in range(len(self.labels))]

        edges_src: list[int] = []
        edges_dst: list[int] = []
        edge_attrs: list[list[int]] = []
        for l, t in enumerate(trans_of):
            s_l = n_states_of[l]
            for i in range(s_l):
                for j in range(s_l):
                    if t[i + 1, j + 1] > 0:
                        if j < i:
                            raise ModelError("composite chains require left-to-right models")
                        edges_src.append(offsets[l] + i)
                        edges_dst.append(offsets[l] + j)
                        edge_attrs.append([attr(l, i + 1, j + 1)])
            for i in range(s_l):
                if t[i + 1, exit_of[l]] <= 0:
                    continue
                bridge = [attr(l, i + 1, exit_of[l])]
                nxt = l + 1
                while nxt < len(self.labels):
                    t2 = trans_of[nxt]
                    for j in range(n_states_of[nxt]):
                        if t2[0, j + 1] > 0:
                            edges_src.append(offsets[l] + i)
                            edges_dst.append(offsets[nxt] + j)
                            edge_attrs.append(bridge + [attr(nxt, 0, j + 1)])
                    if not skippable[nxt]:
                        break
                    bridge = bridge + [attr(nxt, 0, exit_of[nxt])]
                    nxt += 1

        entry_dst: list[int] = []
        entry_attrs: list[list[int]] = []
        bridge: list[int] = []
        for l in range(len(self.labels)):
            t = trans_of[l]
            for j in range(n_states_of[l]):
                if t[0, j + 1] > 0:
                    entry_dst.append(offsets[l] + j)
                    entry_attrs.append(bridge + [attr(l, 0, j + 1)])
            if not skippable[l]:
                break
            bridge = bridge + [attr(l, 0, exit_of[l])]

        exit_src: list[int] = []
        exit_attrs: list[list[int]] = []
        tail_ok = [False] * (len(self.labels) + 1)
        tail_ok[len(self.labels)] = True
        tail_attr: list[list[int]] = [[] for _ in range(len(self.labels) + 1)]
        for l in range(len(self.labels) - 1, -1, -1):
            if tail_ok[l + 1] and skippable[l]:
                tail_ok[l] = True
                tail_attr[l] = [attr(l, 0, exit_of[l])] + tail_attr[l + 1]
        for l, t in enumerate(trans_of):
            if not tail_ok[l + 1]:
                continue
            for i in range(n_states_of[l]):
                if t[i + 1, exit_of[l]] > 0:
                    exit_src.append(offsets[l] + i)
                    exit_attrs.append([attr(l, i + 1, exit_of[l])] + tail_attr[l + 1])

        self.edge_src = np.array(edges_src, dtype=np.int64)
        self.edge_dst = np.array(edges_dst, dtype=np.int64)
        self.edge_attr_edge, self.edge_attr_flat = _flatten_attrs(edge_attrs)
        self.entry_dst = np.array(entry_dst, dtype=np.int64)
        self.entry_attr_edge, self.entry_attr_flat = _flatten_attrs(entry_attrs)
        self.exit_src = np.array(exit_src, dtype=np.int64)
        self.exit_attr_edge, self.exit_attr_flat = _flatten_attrs(exit_attrs)

        self.pred_src, self.pred_edge = _dense_adjacency(
            self.edge_dst, self.edge_src, self.n_states
        )
        self.succ_dst, self.succ_edge = _dense_adjacency(
            self.edge_src, self.edge_dst, self.n_states
        )

        # Minimum frames: shortest entry-to-exit path, one frame per state.
        big = self.n_states + 1
        dist = np.full(self.n_states, big, dtype=np.int64)
        dist[self.entry_dst] = 1
        order = np.argsort(self.edge_src, kind="stable")
        for e in order:
            src, dst = self.edge_src[e], self.edge_dst[e]
            if src != dst and dist[src] + 1 < dist[dst]:
                dist[dst] = dist[src] + 1
        self.min_frames = int(dist[self.exit_src].min()) if len(self.exit_src) else big

    def refresh(self, log_trans: np.ndarray) -> "_ChainWeights":
        edge_logp = _sum_attrs(self.edge_attr_edge, self.edge_attr_flat, len(self.edge_src), log_trans)
        entry_logp = _sum_attrs(
            self.entry_attr_edge, self.entry_attr_flat, len(self.entry_dst), log_trans
        )
        exit_logp = _sum_attrs(self.exit_attr_edge, self.exit_attr_flat, len(self.exit_src), log_trans)
        init_vec = np.full(self.n_states, -np.inf)
        init_vec[self.entry_dst] = entry_logp
        exit_vec = np.full(self.n_states, -np.inf)
        exit_vec[self.exit_src] = exit_logp
        pred_logp = np.where(
            self.pred_edge >= 0, edge_logp[np.maximum(self.pred_edge, 0)], -np.inf
        )
        succ_logp = np.where(
            self.succ_edge >= 0, edge_logp[np.maximum(self.succ_edge, 0)], -np.inf
        )
        return _ChainWeights(edge_logp, init_vec, exit_vec, pred_logp, succ_logp)

    def emission_matrix(self, state_ll_of_distinct) -> np.ndarray:
        """Assemble the composite (T, N) state log-likelihood matrix."""
        t = state_ll_of_distinct[0].shape[0]
        log_b = np.empty((t, self.n_states))
        start = 0
        for l, d in enumerate(self.pos_distinct):
            s_l = state_ll_of_distinct[d].shape[1]
            log_b[:, start : start + s_l] = state_ll_of_distinct[d]
            start += s_l
        return log_b


@dataclass
class _ChainWeights:
    edge_logp: np.ndarray
    init_vec: np.ndarray
    exit_vec: np.ndarray
    pred_logp: np.ndarray
    succ_logp: np.ndarray


def _flatten_attrs(attrs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    edge_idx = []
    flat_idx = []
    for e, lst in enumerate(attrs):
        edge_idx.extend([e] * len(lst))
        flat_idx.extend(lst)
    return np.array(edge_idx, dtype=np.int64), np.array(flat_idx, dtype=np.int64)


def _sum_attrs(attr_edge, attr_flat, n_edges, log_trans) -> np.ndarray:
    out = np.zeros(n_edges)
    np.add.at(out, attr_edge, log_trans[attr_flat])
    return out


def _dense_adjacency(key_states, other_states, n_states) -> tuple[np.ndarray, np.ndarray]:
    """Pad per-state edge lists into (N, K) index matrices (-1 edge = absent)."""
    lists: list[list[tuple[int, int]]] = [[] for _ in range(n_states)]
    for e, (k, o) in enumerate(zip(key_states, other_states)):
        lists[k].append((o, e))
    width = max((len(lst) for lst in lists), default=1) or 1
    other = np.zeros((n_states, width), dtype=np.int64)
    edge = np.full((n_states, width), -1, dtype=np.int64)
    for n, lst in enumerate(lists):
        for k, (o, e) in enumerate(lst):
            other[n, k] = o
            edge[n, k] = e
    return other, edge


def _forward(chain: CompositeChain, w: _ChainWeights, log_b: np.ndarray, beam=None) -> np.ndarray:
    t_len = log_b.shape[0]
    alpha = np.empty_like(log_b)
    alpha[0] = w.init_vec + log_b[0]
    for t in range(1, t_len):
        cand = alpha[t - 1][chain.pred_src] + w.pred_logp
        alpha[t] = logsumexp_last(cand) + log_b[t]
        if beam is not None:
            cut = alpha[t].max() - beam
            alpha[t][alpha[t] < cut] = -np.inf
    return alpha


def _backward(chain: CompositeChain, w: _ChainWeights, log_b: np.ndarray) -> np.ndarray:
    t_len = log_b.shape[0]
    beta = np.empty_like(log_b)
    beta[t_len - 1] = w.exit_vec
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + log_b[t + 1]
        cand = nxt[chain.succ_dst] + w.succ_logp
        beta[t] = logsumexp_last(cand)
    return beta


def chain_log_likelihood(chain, weights, log_b) -> float:
    alpha = _forward(chain, weights, log_b)
    return float(logsumexp_last(alpha[-1] + weights.exit_vec))


def _distinct_emissions(hmms: HmmSet, chain: CompositeChain, frames: np.ndarray):
    state_lls = []
    comps = []
    for label in chain.distinct:
        state_ll, comp = hmms.models[label].state_log_likelihood(frames)
        state_lls.append(state_ll)
        comps.append(comp)
    return state_lls, comps


class _Accumulators:
    def __init__(self, hmms: HmmSet, layout: _TransLayout, dim: int):
        self.phys = hmms.physical_states()
        keys = sorted(set(self.phys.values()))
        self.key_index = {k: i for i, k in enumerate(keys)}
        self.keys = keys
        g = max(m.n_components for m in hmms.models.values())
        self.wsum = np.zeros((len(keys), g))
        self.mean_num = np.zeros((len(keys), g, dim))
        self.var_num = np.zeros((len(keys), g, dim))
        self.trans = np.zeros(layout.total)

    def index(self, label: str, state: int) -> int:
        return self.key_index[self.phys[(label, state)]]


def _accumulate_utterance(
    hmms: HmmSet,
    chain: CompositeChain,
    weights: _ChainWeights,
    frames: np.ndarray,
    acc: _Accumulators,
    beam=None,
) -> float:
    state_lls, comps = _distinct_emissions(hmms, chain, frames)
    log_b = chain.emission_matrix(state_lls)
    alpha = _forward(chain, weights, log_b, beam=beam)
    beta = _backward(chain, weights, log_b)
    ll = float(logsumexp_last(alpha[-1] + weights.exit_vec))
    if not np.isfinite(ll):
        raise TrainingError("non-finite utterance likelihood (internal error)")
    gamma = alpha + beta - ll
    occ = np.exp(gamma)

    frames_sq = frames * frames
    for d, label in enumerate(chain.distinct):
        model = hmms.models[label]
        with np.errstate(divide="ignore"):
            logw = np.log(model.weights)
        resp = np.exp(comps[d] + logw[None] - state_lls[d][:, :, None])
        for s in range(model.n_states):
            cols = chain.state_cols[d][s]
            occ_ds = occ[:, cols].sum(axis=1)
            weighted = occ_ds[:, None] * resp[:, s, :]
            k = acc.index(label, s)
            g = model.n_components
            acc.wsum[k, :g] += weighted.sum(axis=0)
            acc.mean_num[k, :g] += weighted.T @ frames
            acc.var_num[k, :g] += weighted.T @ frames_sq

    if len(chain.edge_src):
        xi = (
            alpha[:-1, chain.edge_src]
            + weights.edge_logp[None]
            + log_b[1:, chain.edge_dst]
            + beta[1:, chain.edge_dst]
            - ll
        )
        mass = np.exp(xi).sum(axis=0)
        np.add.at(acc.trans, chain.edge_attr_flat, mass[chain.edge_attr_edge])
    entry_mass = occ[0, chain.entry_dst]
    np.add.at(acc.trans, chain.entry_attr_flat, entry_mass[chain.entry_attr_edge])
    exit_mass = np.exp(alpha[-1, chain.exit_src] + weights.exit_vec[chain.exit_src] - ll)
    np.add.at(acc.trans, chain.exit_attr_flat, exit_mass[chain.exit_attr_edge])
    return ll


def _apply_update(hmms: HmmSet, acc: _Accumulators, layout: _TransLayout, floor: np.ndarray):
    # Emissions: shared physical states write back to every alias.
    by_key: dict[tuple[str, int], list[tuple[str, int]]] = {}
    for (label, s), key in acc.phys.items():
        by_key.setdefault(key, []).append((label, s))
    for key, members in by_key.items():
        k = acc.key_index[key]
        model = hmms.models[key[0]]
        g = model.n_components
        wsum = acc.wsum[k, :g]
        total = wsum.sum()
        if total <= 0:
            continue
        weights = wsum / total
        means = model.means[key[1]].copy()
        variances = model.variances[key[1]].copy()
        for gi in range(g):
            if wsum[gi] > 0:
                mu = acc.mean_num[k, gi] / wsum[gi]
                var = acc.var_num[k, gi] / wsum[gi] - mu * mu
                means[gi] = mu
                variances[gi] = np.maximum(var, floor)
        for label, s in members:
            m = hmms.models[label]
            m.means[s] = means
            m.variances[s] = variances
            m.weights[s] = weights

    for label in layout.labels:
        model = hmms.models[label]
        side = layout.side[label]
        base = layout.base[label]
        counts = acc.trans[base : base + side * side].reshape(side, side)
        for row in range(side - 1):
            total = counts[row].sum()
            if total > 0:
                model.trans[row] = counts[row] / total


def embedded_reestimate(hmms: HmmSet, corpus, transcripts, cfg: TrainConfig):
    """Baum-Welch re-estimation over composite utterance models.

    Runs cfg.iterations accumulate/update passes and returns the re-estimated
    set plus the per-iteration total log-likelihood (evaluated under the
    parameters entering each pass, so the trace is non-decreasing).
    Utterances shorter than their composite's minimum path are skipped with a
    warning; it is an error if nothing remains.
    """
    corpus = list(corpus)
    transcripts = list(transcripts)
    if len(corpus) != len(transcripts):
        raise TrainingError(
            f"{len(corpus)} utterances but {len(transcripts)} transcripts"
        )
    if not corpus:
        raise TrainingError("empty corpus")
    out = hmms.copy()
    layout = _TransLayout(out)
    dim = corpus[0].features.dim
    _, gvar = global_stats(corpus)
    floor = variance_floor(gvar, cfg.floor_factor)

    jobs = []
    for utt, transcript in zip(corpus, transcripts):
        chain = CompositeChain(out, transcript.labels, layout)
        t_len = utt.features.n_frames
        if t_len < chain.min_frames:
            log.warning(
                "skipping %s: %d frames < composite minimum %d",
                utt.id, t_len, chain.min_frames,
            )
            continue
        jobs.append((chain, utt.features.frames))
    if not jobs:
        raise TrainingError("every utterance is shorter than its composite model")

    trace = []
    for _ in range(cfg.iterations):
        log_trans = layout.log_all(out)
        acc = _Accumulators(out, layout, dim)
        total = 0.0
        for chain, frames in jobs:
            weights = chain.refresh(log_trans)
            total += _accumulate_utterance(out, chain, weights, frames, acc, beam=cfg.beam)
        trace.append(total)
        _apply_update(out, acc, layout, floor)
    return out, trace


def corpus_log_likelihood(hmms: HmmSet, corpus, transcripts) -> float:
    """Total composite log-likelihood of a corpus under a fixed model set."""
    layout = _TransLayout(hmms)
    log_trans = layout.log_all(hmms)
    total = 0.0
    for utt, transcript in zip(corpus, transcripts):
        chain = CompositeChain(hmms, transcript.labels, layout)
        state_lls, _ = _distinct_emissions(hmms, chain, utt.features.frames)
        log_b = chain.emission_matrix(state_lls)
        total += chain_log_likelihood(chain, chain.refresh(log_trans), log_b)
    return total


def forced_align(hmms: HmmSet, features, transcript) -> tuple[list[int], float]:
    """Viterbi-align features against the transcript's composite model.

    Returns the best state path as 1-based composite emitting-state indices,
    and its log probability (entry, internal, and exit transitions plus all
    emissions).
    """
    if isinstance(features, FeatureSequence):
        frames = features.frames
    else:
        frames = np.asarray(features, dtype=np.float64)
    layout = _TransLayout(hmms)
    chain = CompositeChain(hmms, transcript.labels, layout)
    t_len = frames.shape[0]
    if t_len < chain.min_frames:
        raise AlignmentError(
            f"{t_len} frames cannot cover a composite needing {chain.min_frames}"
        )
    weights = chain.refresh(layout.log_all(hmms))
    state_lls, _ = _distinct_emissions(hmms, chain, frames)
    log_b = chain.emission_matrix(state_lls)

    delta = np.empty((t_len, chain.n_states))
    back = np.zeros((t_len, chain.n_states), dtype=np.int64)
    delta[0] = weights.init_vec + log_b[0]
    for t in range(1, t_len):
        cand = delta[t - 1][chain.pred_src] + weights.pred_logp
        best = cand.argmax(axis=1)
        delta[t] = cand[np.arange(chain.n_states), best] + log_b[t]
        back[t] = chain.pred_src[np.arange(chain.n_states), best]
    final = delta[t_len - 1] + weights.exit_vec
    end = int(final.argmax())
    score = float(final[end])
    if not np.isfinite(score):
        raise AlignmentError("no admissible state path")
    path = [end]
    for t in range(t_len - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [p + 1 for p in path], score


def format_hmms(hmms: HmmSet) -> str:
    lines = [f"hmmset models {len(hmms.models)}"]
    for label, m in hmms.models.items():
        lines.append(f"model {label} states {m.n_states} comps {m.n_components} dim {m.dim}")
        for s in range(m.n_states):
            lines.append(f"state {s + 1}")
            lines.append("weights " + " ".join(repr(float(x)) for x in m.weights[s]))
            for g in range(m.n_components):
                lines.append(f"comp {g + 1} mean " + " ".join(repr(float(x)) for x in m.means[s, g]))
                lines.append(f"comp {g + 1} var " + " ".join(repr(float(x)) for x in m.variances[s, g]))
        lines.append("trans")
        for row in m.trans:
            lines.append(" ".join(repr(float(x)) for x in row))
    for tie in hmms.ties:
        for alias in tie.aliases:
            lines.append(f"tie {tie.owner[0]} {tie.owner[1]} {alias[0]} {alias[1]}")
    return "\n".join(lines) + "\n"


def write_hmms(hmms: HmmSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_hmms(hmms))


def parse_hmms(text: str) -> HmmSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("hmmset"):
        raise ModelError("missing hmmset header")
    models: dict[str, GmmHmm] = {}
    ties: list[StateTie] = []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "tie":
            ties.append(
                StateTie(owner=(parts[1], int(parts[2])), aliases=((parts[3], int(parts[4])),))
            )
            i += 1
            continue
        if parts[0] != "model":
            raise ModelError(f"expected model block, got {lines[i]!r}")
        label = parts[1]
        n_states, n_comp, dim = int(parts[3]), int(parts[5]), int(parts[7])
        i += 1
        means = np.empty((n_states, n_comp, dim))
        variances = np.empty((n_states, n_comp, dim))
        weights = np.empty((n_states, n_comp))
        for s in range(n_states):
            if lines[i].split() != ["state", str(s + 1)]:
                raise ModelError(f"model {label!r}: expected state {s + 1}")
            i += 1
            weights[s] = [float(x) for x in lines[i].split()[1:]]
            i += 1
            for g in range(n_comp):
                means[s, g] = [float(x) for x in lines[i].split()[3:]]
                i += 1
                variances[s, g] = [float(x) for x in lines[i].split()[3:]]
                i += 1
        if lines[i].strip() != "trans":
            raise ModelError(f"model {label!r}: expected transition block")
        i += 1
        side = n_states + 2
        trans = np.empty((side, side))
        for r in range(side):
            trans[r] = [float(x) for x in lines[i].split()]
            i += 1
        models[label] = GmmHmm(
            label=label, means=means, variances=variances, weights=weights, trans=trans
        )
    # Collapse per-alias tie lines that share an owner.
    merged: dict[tuple[str, int], list[tuple[str, int]]] = {}
    for tie in ties:
        merged.setdefault(tie.owner, []).extend(tie.aliases)
    tie_records = tuple(
        StateTie(owner=owner, aliases=tuple(aliases)) for owner, aliases in merged.items()
    )
    return HmmSet(models=models, ties=tie_records)


def read_hmms(path) -> HmmSet:
    with open(path, encoding="utf-8") as fh:
        return parse_hmms(fh.read())
