"""The knowledge-selection network.

Per candidate instance the forward pass runs:

1. context embedding: word vector + position encoding of the distance to
   each focal entity, giving two views X1, X2 of the same token sequence;
2. two entity-conditioned encoders: multi-head scaled dot-product
   attention whose queries are the sequence with the entity vector
   concatenated to every position, plus a position-wise feed-forward
   sublayer, each wrapped in dropout -> residual -> layer norm;
3. pooling over the two encoded sequences (mutual attention by default;
   separate additive attention, average or max as variants) giving
   context features s1, s2;
4. a gated knowledge selector that distills the pair's KB relation
   vector against the context features (optionally also the entity
   vectors, or nothing);
5. a softmax classifier over [s1, s2, selected relation].

All trainable tensors are registered in a ParameterStore under stable
dotted names, so checkpointing and gradient checks can address every
weight individually. Forward passes over distinct instances with frozen
parameters may run in parallel; only the training loop mutates them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .corpus import CandidateInstance, LABEL_POSITIVE
from .kb import PairKnowledge, read_embeddings, write_embeddings

logger = logging.getLogger(__name__)

CLASS_NEGATIVE = 0
CLASS_POSITIVE = 1

_ACTIVATIONS = {"tanh": ad.tanh, "sigmoid": ad.sigmoid, "relu": ad.relu}


class ConfigError(Exception):
    pass


@dataclass
class ModelConfig:
    d: int = 100
    n_blocks: int = 2
    n_heads: int = 4
    d_head: int | None = None          # defaults to d // n_heads
    d_kb: int = 100
    dropout_rate: float = 0.1
    selector_activation: str = "tanh"  # tanh | sigmoid | relu
    selector_op: str = "hadamard"      # hadamard | sum
    selector_target: str = "relation"  # relation | entity | both | none
    gate_uses_relation: bool = True    # False: gate from context features only
    pooling: str = "mutual"            # mutual | separate | average | max
    shared_encoder: bool = False
    position_encoding: str = "sinusoidal"  # sinusoidal | learned
    max_distance: int = 512            # learned-table size; distances clipped
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.d_head is None:
            self.d_head = self.d // self.n_heads
        self.validate()

    def validate(self) -> None:
        if self.d != self.n_heads * self.d_head:
            raise ConfigError(
                f"d ({self.d}) must equal n_heads*d_head "
                f"({self.n_heads}*{self.d_head})")
        if self.d_kb != self.d:
            raise ConfigError(
                f"d_kb ({self.d_kb}) must equal d ({self.d}): the selector "
                "gate and the 3d classifier features couple the two")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0,1), "
                              f"got {self.dropout_rate}")
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if self.selector_activation not in _ACTIVATIONS:
            raise ConfigError(
                f"unknown selector_activation {self.selector_activation!r}")
        if self.selector_op not in ("hadamard", "sum"):
            raise ConfigError(f"unknown selector_op {self.selector_op!r}")
        if self.selector_target not in ("relation", "entity", "both", "none"):
            raise ConfigError(
                f"unknown selector_target {self.selector_target!r}")
        if self.pooling not in ("mutual", "separate", "average", "max"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.position_encoding not in ("sinusoidal", "learned"):
            raise ConfigError(
                f"unknown position_encoding {self.position_encoding!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# embeddings


def sinusoidal_encoding(positions: Sequence[int], d: int) -> np.ndarray:
    """Fixed sin/cos encoding of integer distances, shape (len(positions), d)."""
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    k = np.arange(d)
    angles = pos / np.power(10000.0, (k - k % 2) / d)
    return np.where(k % 2 == 0, np.sin(angles), np.cos(angles))


class WordTable:
    """Frozen token -> vector lookup with a reserved UNK row."""

    UNK = "UNK"

    def __init__(self, vectors: dict[str, np.ndarray], d: int,
                 unk: np.ndarray | None = None):
        self.vectors = vectors
        self.d = d
        if unk is None:
            unk = vectors.get(self.UNK)
        if unk is None:
            unk = np.zeros(d)
        self.unk = np.asarray(unk, dtype=np.float64)

    @classmethod
    def random(cls, vocab: Sequence[str], d: int, seed: int = 0) -> "WordTable":
        rng = np.random.default_rng(seed)
        lim = 0.5 / d
        vectors = {tok: rng.uniform(-lim, lim, size=d)
                   for tok in sorted(set(vocab))}
        return cls(vectors, d, unk=rng.uniform(-lim, lim, size=d))

    @classmethod
    def load(cls, path) -> "WordTable":
        vectors = read_embeddings(path)
        if not vectors:
            raise ConfigError(f"{path}: empty embedding file")
        d = len(next(iter(vectors.values())))
        return cls(vectors, d)

    def save(self, path) -> None:
        table = dict(self.vectors)
        table.setdefault(self.UNK, self.unk)
        write_embeddings(path, table)

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        return np.stack([self.vectors.get(t, self.unk) for t in tokens])


def embed_context(instance: CandidateInstance, word_table: WordTable,
                  config: ModelConfig,
                  params: ParameterStore | None = None) -> tuple[Tensor, Tensor]:
    """Two L x d context views: word vector + position encoding per entity."""
    if not instance.tokens:
        raise ValueError("cannot embed an empty instance")
    if min(min(instance.pos1), min(instance.pos2)) < 0:
        raise ValueError("positions must be nonnegative")
    words = word_table.lookup(instance.tokens)
    if config.position_encoding == "sinusoidal":
        x1 = Tensor(words + sinusoidal_encoding(instance.pos1, config.d))
        x2 = Tensor(words + sinusoidal_encoding(instance.pos2, config.d))
        return x1, x2
    table = params["position.table"]
    hi = config.max_distance
    i1 = np.clip(instance.pos1, 0, hi)
    i2 = np.clip(instance.pos2, 0, hi)
    w = Tensor(words)
    return (ad.add(w, ad.gather_rows(table, i1)),
            ad.add(w, ad.gather_rows(table, i2)))


# ---------------------------------------------------------------------------
# parameter construction


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int,
            shape: tuple) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def build_params(config: ModelConfig, seed: int = 0) -> ParameterStore:
    """Register exactly the tensors the configured forward pass touches."""
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    d, dh, dkb = config.d, config.d_head, config.d_kb

    def mat(name, fan_in, fan_out, shape=None):
        store.add(name, Tensor(_xavier(rng, fan_in, fan_out,
                                       shape or (fan_in, fan_out))))

    def zeros(name, shape):
        store.add(name, Tensor(np.zeros(shape)))

    def ones(name, shape):
        store.add(name, Tensor(np.ones(shape)))

    encoder_prefixes = (["encoder"] if config.shared_encoder
                        else ["encoder1", "encoder2"])
    for enc in encoder_prefixes:
        for b in range(config.n_blocks):
            p = f"{enc}.block{b}"
            for h in range(config.n_heads):
                mat(f"{p}.head{h}.wq", d + dkb, dh)
                mat(f"{p}.head{h}.wk", d, dh)
                mat(f"{p}.head{h}.wv", d, dh)
            mat(f"{p}.wh", config.n_heads * dh, d)
            mat(f"{p}.ffn_w1", d, d)
            zeros(f"{p}.ffn_b1", (d,))
            mat(f"{p}.ffn_w2", d, d)
            zeros(f"{p}.ffn_b2", (d,))
            ones(f"{p}.ln1.gamma", (d,))
            zeros(f"{p}.ln1.beta", (d,))
            ones(f"{p}.ln2.gamma", (d,))
            zeros(f"{p}.ln2.beta", (d,))

    if config.pooling == "mutual":
        mat("mutual.w1", d, d)
        mat("mutual.w2", d, d)
        mat("mutual.w", d, 1)
    elif config.pooling == "separate":
        mat("separate.w_proj", d, d)
        zeros("separate.b", (d,))
        mat("separate.w", d, 1)

    if config.selector_target in ("relation", "both"):
        mat("selector.w", 2 * d, d, shape=(d, 2 * d))
        if config.gate_uses_relation:
            mat("selector.u", d, d)
        zeros("selector.b", (d,))
    if config.selector_target in ("entity", "both"):
        mat("entity_selector.w", d, d)
        mat("entity_selector.u", d, d)
        zeros("entity_selector.b", (d,))

    mat("classifier.w", 3 * d, 2, shape=(2, 3 * d))
    zeros("classifier.b", (2,))
    zeros("knowledge.null_relation", (dkb,))

    if config.position_encoding == "learned":
        lim = 0.5 / d
        store.add("position.table",
                  Tensor(rng.uniform(-lim, lim,
                                     size=(config.max_distance + 1, d))))
    return store


# ---------------------------------------------------------------------------
# forward pieces


def multi_head_attention(x: Tensor, e: Tensor, params: ParameterStore,
                         prefix: str, config: ModelConfig) -> Tensor:
    """Entity-conditioned multi-head attention; returns the L x d mix.

    Queries concatenate the entity vector to every sequence position;
    keys and values are the plain sequence. Per-head dot products are
    scaled by 1/sqrt(d_head).
    """
    length = x.shape[0]
    e_tiled = ad.gather_rows(e, [0] * length)     # (L, d_kb)
    q_in = ad.concat([x, e_tiled])                # (L, d + d_kb)
    inv_scale = 1.0 / np.sqrt(config.d_head)
    heads = []
    for h in range(config.n_heads):
        q = q_in @ params[f"{prefix}.head{h}.wq"]
        k = x @ params[f"{prefix}.head{h}.wk"]
        v = x @ params[f"{prefix}.head{h}.wv"]
        att = ad.softmax((q @ ad.transpose(k)) * inv_scale, axis=-1)
        heads.append(att @ v)
    return ad.concat(heads) @ params[f"{prefix}.wh"]


def encoder_block(x: Tensor, e: Tensor, params: ParameterStore, prefix: str,
                  config: ModelConfig, train: bool,
                  rng: np.random.Generator | None) -> Tensor:
    mh = multi_head_attention(x, e, params, prefix, config)
    mh = ad.dropout(mh, config.dropout_rate, rng, train)
    sub1 = ad.layer_norm(x + mh, params[f"{prefix}.ln1.gamma"],
                         params[f"{prefix}.ln1.beta"], config.layer_norm_eps)
    ff = ad.relu(sub1 @ params[f"{prefix}.ffn_w1"] + params[f"{prefix}.ffn_b1"])
    ff = ff @ params[f"{prefix}.ffn_w2"] + params[f"{prefix}.ffn_b2"]
    ff = ad.dropout(ff, config.dropout_rate, rng, train)
    return ad.layer_norm(sub1 + ff, params[f"{prefix}.ln2.gamma"],
                         params[f"{prefix}.ln2.beta"], config.layer_norm_eps)


def encode(x: Tensor, e: Tensor, params: ParameterStore, encoder_prefix: str,
           config: ModelConfig, train: bool = False,
           rng: np.random.Generator | None = None) -> Tensor:
    """Run all blocks; the entity vector re-enters the queries of each block."""
    out = x
    for b in range(config.n_blocks):
        out = encoder_block(out, e, params, f"{encoder_prefix}.block{b}",
                            config, train, rng)
    return out


def mutual_attention(v1: Tensor, v2: Tensor, params: ParameterStore
                     ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Additive attention over all position pairs of the two sequences.

    Returns (s1, s2, p1, p2): pooled vectors (1 x d) and the attention
    weights over positions ((L x 1) and (1 x L)). Row means of the pair
    score matrix drive the weights for the first sequence, column means
    for the second.
    """
    length = v1.shape[0]
    if v2.shape[0] != length:
        raise ValueError(f"sequence lengths differ: {length} vs {v2.shape[0]}")
    a1 = v1 @ ad.transpose(params["mutual.w1"])
    a2 = v2 @ ad.transpose(params["mutual.w2"])
    ii = np.repeat(np.arange(length), length)
    jj = np.tile(np.arange(length), length)
    pair = ad.tanh(ad.add(ad.gather_rows(a1, ii), ad.gather_rows(a2, jj)))
    alpha = ad.reshape(pair @ params["mutual.w"], (length, length))
    p1 = ad.softmax(ad.mean(alpha, axis=1, keepdims=True), axis=0)  # (L,1)
    p2 = ad.softmax(ad.mean(alpha, axis=0, keepdims=True), axis=1)  # (1,L)
    s1 = ad.transpose(p1) @ v1
    s2 = p2 @ v2
    return s1, s2, p1, p2


def separate_attention(v: Tensor, params: ParameterStore
                       ) -> tuple[Tensor, Tensor]:
    """Single-sequence additive attention with a bias; params are shared
    between the two sequences by construction (one set in the store)."""
    scores = ad.tanh(v @ ad.transpose(params["separate.w_proj"])
                     + params["separate.b"]) @ params["separate.w"]
    p = ad.softmax(scores, axis=0)        # (L,1)
    return ad.transpose(p) @ v, p


def pool_variants(v1: Tensor, v2: Tensor, params: ParameterStore,
                  config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Context features (s1, s2) under the configured pooling."""
    if config.pooling == "mutual":
        s1, s2, _, _ = mutual_attention(v1, v2, params)
        return s1, s2
    if config.pooling == "separate":
        return separate_attention(v1, params)[0], separate_attention(v2, params)[0]
    if config.pooling == "average":
        return (ad.mean(v1, axis=0, keepdims=True),
                ad.mean(v2, axis=0, keepdims=True))
    return (ad.amax(v1, axis=0, keepdims=True),
            ad.amax(v2, axis=0, keepdims=True))


def _elementwise_select(g: Tensor, e: Tensor, op: str) -> Tensor:
    return ad.multiply(g, e) if op == "hadamard" else ad.add(g, e)


def knowledge_select(s1: Tensor, s2: Tensor, er: Tensor,
                     params: ParameterStore, config: ModelConfig) -> Tensor:
    """Gate the relation vector against the context features.

    Default: g = tanh(W [s1,s2] + U er + b), output g (.) er. The
    context-only variant drops the U er term; the sum variant adds g
    to er instead of scaling it.
    """
    if config.selector_target == "entity":
        raise ConfigError("entity selection is routed through "
                          "entity_knowledge_select")
    pre = ad.concat([s1, s2]) @ ad.transpose(params["selector.w"])
    if config.gate_uses_relation:
        pre = pre + er @ ad.transpose(params["selector.u"])
    pre = pre + params["selector.b"]
    g = _ACTIVATIONS[config.selector_activation](pre)
    return _elementwise_select(g, er, config.selector_op)


def entity_knowledge_select(x: Tensor, e: Tensor, params: ParameterStore,
                            config: ModelConfig) -> Tensor:
    """Gate an entity vector against the mean of its input sequence.

    Both entities run through the same parameter set.
    """
    mx = ad.mean(x, axis=0, keepdims=True)
    pre = (mx @ ad.transpose(params["entity_selector.w"])
           + e @ ad.transpose(params["entity_selector.u"])
           + params["entity_selector.b"])
    g = _ACTIVATIONS[config.selector_activation](pre)
    return _elementwise_select(g, e, config.selector_op)


def classify(s1: Tensor, s2: Tensor, er_selected: Tensor,
             params: ParameterStore) -> tuple[Tensor, int]:
    """Class probabilities (1 x 2 tensor) and the predicted class.

    Exact probability ties resolve to the negative class.
    """
    feats = ad.concat([s1, s2, er_selected])
    logits = feats @ ad.transpose(params["classifier.w"]) + params["classifier.b"]
    probs = ad.softmax(logits, axis=1)
    label = (CLASS_POSITIVE
             if probs.data[0, CLASS_POSITIVE] > probs.data[0, CLASS_NEGATIVE]
             else CLASS_NEGATIVE)
    return probs, label


def nll_loss(batch_probs: Sequence[Tensor], gold_labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of the gold class over a batch.

    Gold-class probabilities are clamped at 1e-12 (a warning is logged if
    the clamp fires).
    """
    if len(batch_probs) != len(gold_labels) or not batch_probs:
        raise ValueError("batch_probs and gold_labels must be equal-length "
                         "and nonempty")
    picks = []
    for probs, y in zip(batch_probs, gold_labels):
        onehot = np.zeros((probs.shape[-1], 1))
        onehot[y, 0] = 1.0
        picks.append(probs @ Tensor(onehot))     # (1,1)
    return ad.mean(ad.neg(ad.log(ad.concat(picks), floor=1e-12)))


# ---------------------------------------------------------------------------
# the assembled model


class KSMModel:
    """Configuration + parameters + forward pass over candidate instances."""

    def __init__(self, config: ModelConfig, word_table: WordTable,
                 seed: int = 0, null_relation: np.ndarray | None = None):
        if word_table.d != config.d:
            raise ConfigError(
                f"word table dim {word_table.d} != model d {config.d}")
        self.config = config
        self.word_table = word_table
        self.params = build_params(config, seed=seed)
        if null_relation is not None:
            self.params["knowledge.null_relation"].data = np.asarray(
                null_relation, dtype=np.float64).copy()

    def _encoder_prefixes(self) -> tuple[str, str]:
        if self.config.shared_encoder:
            return "encoder", "encoder"
        return "encoder1", "encoder2"

    def _relation_tensor(self, knowledge: PairKnowledge) -> Tensor:
        if knowledge.er_is_null:
            return ad.reshape(self.params["knowledge.null_relation"],
                              (1, self.config.d_kb))
        return Tensor(np.asarray(knowledge.er).reshape(1, -1))

    def forward_instance(self, instance: CandidateInstance,
                         knowledge: PairKnowledge, train: bool = False,
                         rng: np.random.Generator | None = None
                         ) -> tuple[Tensor, int]:
        """Probabilities and predicted class for one instance."""
        cfg = self.config
        x1, x2 = embed_context(instance, self.word_table, cfg, self.params)
        e1 = Tensor(np.asarray(knowledge.e1).reshape(1, -1))
        e2 = Tensor(np.asarray(knowledge.e2).reshape(1, -1))
        er = self._relation_tensor(knowledge)
        if cfg.selector_target in ("entity", "both"):
            e1 = entity_knowledge_select(x1, e1, self.params, cfg)
            e2 = entity_knowledge_select(x2, e2, self.params, cfg)
        p1, p2 = self._encoder_prefixes()
        v1 = encode(x1, e1, self.params, p1, cfg, train, rng)
        v2 = encode(x2, e2, self.params, p2, cfg, train, rng)
        s1, s2 = pool_variants(v1, v2, self.params, cfg)
        if cfg.selector_target in ("relation", "both"):
            er = knowledge_select(s1, s2, er, self.params, cfg)
        return classify(s1, s2, er, self.params)

    def batch_loss(self, batch: Sequence[tuple[CandidateInstance, PairKnowledge]],
                   train: bool = True,
                   rng: np.random.Generator | None = None) -> Tensor:
        probs, labels = [], []
        for inst, kn in batch:
            p, _ = self.forward_instance(inst, kn, train=train, rng=rng)
            probs.append(p)
            labels.append(CLASS_POSITIVE if inst.label == LABEL_POSITIVE
                          else CLASS_NEGATIVE)
        return nll_loss(probs, labels)

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint
        save_checkpoint(path, self.params, config=self.config.to_dict())

    @classmethod
    def load(cls, path, word_table: WordTable) -> "KSMModel":
        from .checkpoint import CheckpointError, load_checkpoint
        values, config_dict = load_checkpoint(path)
        if not config_dict:
            raise CheckpointError(f"{path}: checkpoint carries no model config")
        config = ModelConfig.from_dict(config_dict)
        model = cls(config, word_table, seed=0)
        try:
            model.params.load_values(values)
        except (KeyError, ValueError) as e:
            raise CheckpointError(
                f"{path}: checkpoint does not match its config: {e}") from e
        return model
