"""GRU encoder over path tokens, one-step decoder onto KB relations.

Plain numpy float64 throughout.  Gradients are derived by hand and
checked against central finite differences in the test suite; no autograd
framework is involved.

Gate convention, fixed here and relied on by the tests: with update gate
z, reset gate r and candidate c,

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    c = tanh(x W_c + (r * h) U_c + b_c)
    h' = z * h + (1 - z) * c

so zero parameters leave the state at zero.  Decoding is a single GRU
step over the start token's embedding followed by a linear projection and
a max-shifted softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DimensionError
from .graph import KBRelation, RelationGraph, TextualRelation

UNK_TOKEN = "<UNK>"
GO_TOKEN = "<GO>"
UNK_ID = 0
GO_ID = 1

PROB_FLOOR = 1e-12

CHECKPOINT_FORMAT = "relembed-checkpoint"
CHECKPOINT_VERSION = 1


class Vocabulary:
    """Dense token -> index map with UNK and GO always present.

    Unseen tokens resolve to UNK, so any textual relation can be encoded.
    """

    def __init__(self, tokens: Iterable[str] = ()):
        self._index: dict[str, int] = {UNK_TOKEN: UNK_ID, GO_TOKEN: GO_ID}
        for tok in tokens:
            if tok not in self._index:
                self._index[tok] = len(self._index)
        self._tokens = [None] * len(self._index)
        for tok, i in self._index.items():
            self._tokens[i] = tok

    @classmethod
    def from_graph(cls, graph: RelationGraph) -> "Vocabulary":
        def all_tokens():
            for rel in graph.textual:
                for tok in rel.tokens:
                    yield tok.canonical()

        return cls(all_tokens())

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def encode(self, relation: TextualRelation) -> list[int]:
        return [self.id(tok.canonical()) for tok in relation.tokens]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


_GATES = ("z", "r", "c")


def init_params(
    vocab_size: int, embed_size: int, state_size: int, num_relations: int, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Uniform(-0.1, 0.1) weights, zero biases.

    Token vectors are randomly initialized; `load_pretrained_embeddings`
    can overwrite rows from an external table afterwards.
    """

    def u(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)

    params = {"emb": u(vocab_size, embed_size)}
    for side in ("enc", "dec"):
        for gate in _GATES:
            params[f"{side}_W{gate}"] = u(embed_size, state_size)
            params[f"{side}_U{gate}"] = u(state_size, state_size)
            params[f"{side}_b{gate}"] = np.zeros(state_size)
    params["out_W"] = u(state_size, num_relations)
    params["out_b"] = np.zeros(num_relations)
    return params


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _gru_forward(params, side, x, h_prev):
    W = lambda g: params[f"{side}_W{g}"]
    U = lambda g: params[f"{side}_U{g}"]
    b = lambda g: params[f"{side}_b{g}"]
    z = _sigmoid(x @ W("z") + h_prev @ U("z") + b("z"))
    r = _sigmoid(x @ W("r") + h_prev @ U("r") + b("r"))
    rh = r * h_prev
    c = np.tanh(x @ W("c") + rh @ U("c") + b("c"))
    h = z * h_prev + (1.0 - z) * c
    return h, (x, h_prev, z, r, rh, c)


def _gru_backward(params, side, step_cache, dh, grads):
    """Backprop one GRU step; returns (dx, dh_prev)."""
    x, h_prev, z, r, rh, c = step_cache
    W = lambda g: params[f"{side}_W{g}"]
    U = lambda g: params[f"{side}_U{g}"]

    dz = dh * (h_prev - c)
    dc = dh * (1.0 - z)
    da_c = dc * (1.0 - c * c)
    da_z = dz * z * (1.0 - z)
    drh = da_c @ U("c").T
    dr = drh * h_prev
    da_r = dr * r * (1.0 - r)

    grads[f"{side}_Wc"] += x.T @ da_c
    grads[f"{side}_Uc"] += rh.T @ da_c
    grads[f"{side}_bc"] += da_c.sum(axis=0)
    grads[f"{side}_Wz"] += x.T @ da_z
    grads[f"{side}_Uz"] += h_prev.T @ da_z
    grads[f"{side}_bz"] += da_z.sum(axis=0)
    grads[f"{side}_Wr"] += x.T @ da_r
    grads[f"{side}_Ur"] += h_prev.T @ da_r
    grads[f"{side}_br"] += da_r.sum(axis=0)

    dx = da_z @ W("z").T + da_r @ W("r").T + da_c @ W("c").T
    dh_prev = dh * z + drh * r + da_z @ U("z").T + da_r @ U("r").T
    return dx, dh_prev


@dataclass
class ForwardCache:
    token_ids: np.ndarray
    masks: list[np.ndarray]
    enc_steps: list[tuple]
    h_final: np.ndarray
    dec_step: tuple
    h_dec: np.ndarray
    probs: np.ndarray


class EmbeddingModel:
    """All trainable state: token table, encoder/decoder GRUs, output head."""

    def __init__(self, vocab: Vocabulary, kb: Sequence[KBRelation], params: dict[str, np.ndarray]):
        self.vocab = vocab
        self.kb = list(kb)
        self.params = params
        self._kb_index = {r.name: j for j, r in enumerate(self.kb)}
        if params["emb"].shape[0] != len(vocab):
            raise DimensionError(
                f"embedding table has {params['emb'].shape[0]} rows for a "
                f"{len(vocab)}-token vocabulary"
            )
        if params["out_b"].shape[0] != len(self.kb):
            raise DimensionError(
                f"output head covers {params['out_b'].shape[0]} relations, "
                f"expected {len(self.kb)}"
            )

    @classmethod
    def create(
        cls,
        vocab: Vocabulary,
        kb: Sequence[KBRelation],
        embed_size: int,
        state_size: int,
        seed: int,
    ) -> "EmbeddingModel":
        rng = np.random.default_rng(seed)
        params = init_params(len(vocab), embed_size, state_size, len(kb), rng)
        return cls(vocab, kb, params)

    @property
    def embed_size(self) -> int:
        return self.params["emb"].shape[1]

    @property
    def state_size(self) -> int:
        return self.params["out_W"].shape[0]

    @property
    def num_relations(self) -> int:
        return len(self.kb)

    @property
    def kb_names(self) -> list[str]:
        return [r.name for r in self.kb]

    def relation_index(self, name: str) -> int:
        try:
            return self._kb_index[name]
        except KeyError:
            raise DataError(f"unknown KB relation {name!r}") from None

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.params = {k: v.copy() for k, v in params.items()}

    # -- single-sequence API ------------------------------------------------

    def encode(self, relation: TextualRelation | Sequence[int]) -> np.ndarray:
        """Final encoder state for one textual relation."""
        ids = self._as_ids(relation)
        h = np.zeros((1, self.state_size))
        x = self.params["emb"][np.asarray(ids)]
        for l in range(len(ids)):
            h, _ = _gru_forward(self.params, "enc", x[l : l + 1], h)
        return h[0]

    def decode(self, h_m: np.ndarray) -> np.ndarray:
        """Distribution over KB relations from an encoder state."""
        go = self.params["emb"][GO_ID][None, :]
        h_dec, _ = _gru_forward(self.params, "dec", go, h_m[None, :])
        logits = h_dec @ self.params["out_W"] + self.params["out_b"]
        return _softmax(logits)[0]

    def predict(self, relation: TextualRelation | Sequence[int]) -> np.ndarray:
        return self.decode(self.encode(relation))

    def _as_ids(self, relation) -> list[int]:
        ids = self.vocab.encode(relation) if isinstance(relation, TextualRelation) else list(relation)
        if not ids:
            raise DataError("cannot encode an empty token sequence")
        return ids

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Versioned JSON checkpoint; byte-stable for a given model because
        floats are serialized with shortest round-tripping repr."""
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "dims": {
                "embed_size": self.embed_size,
                "state_size": self.state_size,
                "num_relations": self.num_relations,
                "vocab_size": len(self.vocab),
            },
            "vocab": self.vocab.tokens,
            "kb": [{"name": r.name, "is_na": r.is_na} for r in self.kb],
            "params": {k: self.params[k].tolist() for k in sorted(self.params)},
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingModel":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: not a v{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
        tokens = payload["vocab"]
        if tokens[:2] != [UNK_TOKEN, GO_TOKEN]:
            raise DataError(f"{path}: vocabulary missing reserved tokens")
        vocab = Vocabulary(tokens[2:])
        if vocab.tokens != tokens:
            raise DataError(f"{path}: vocabulary has duplicate tokens")
        kb = [KBRelation(r["name"], bool(r["is_na"])) for r in payload["kb"]]
        params = {k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()}
        dims = payload["dims"]
        if params["emb"].shape != (dims["vocab_size"], dims["embed_size"]):
            raise DimensionError(f"{path}: embedding table shape does not match recorded dims")
        return cls(vocab, kb, params)


def load_pretrained_embeddings(path: str | Path, model: EmbeddingModel) -> int:
    """Overwrite token vectors from a TSV (token, v1, ..., vd); returns the
    number of vocabulary rows replaced.  Tokens absent from the table keep
    their random initialization."""
    emb = model.params["emb"]
    loaded = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != emb.shape[1] + 1:
                raise DimensionError(
                    f"{path}:{lineno}: expected {emb.shape[1]} vector components, got {len(parts) - 1}"
                )
            idx = model.vocab.id(parts[0])
            if idx != UNK_ID or parts[0] == UNK_TOKEN:
                emb[idx] = np.array([float(v) for v in parts[1:]])
                loaded += 1
    return loaded


# ---------------------------------------------------------------------------
# Batched forward/backward over edges
# ---------------------------------------------------------------------------

@dataclass
class EdgeBatch:
    """A mini-batch of graph edges prepared for the model.

    ``weights`` holds target conditional probabilities (distribution
    regression); ``counts`` holds raw co-occurrence counts (likelihood
    weighting).  Either may be None when unused.
    """

    token_ids: np.ndarray  # (B, L) int64, padded with UNK
    lengths: np.ndarray  # (B,)
    relation_ids: np.ndarray  # (B,)
    weights: np.ndarray | None = None
    counts: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def batch_from_edges(
    graph: RelationGraph, vocab: Vocabulary, edges: Sequence[tuple[int, int]]
) -> EdgeBatch:
    if not edges:
        raise DataError("empty edge batch")
    id_lists = [vocab.encode(graph.textual[i]) for i, _ in edges]
    lengths = np.array([len(ids) for ids in id_lists], dtype=np.int64)
    L = int(lengths.max())
    token_ids = np.full((len(edges), L), UNK_ID, dtype=np.int64)
    for b, ids in enumerate(id_lists):
        token_ids[b, : len(ids)] = ids
    relation_ids = np.array([j for _, j in edges], dtype=np.int64)
    weights = None
    if graph.weights is not None:
        weights = np.array([graph.weights[i][j] for i, j in edges])
    counts = np.array([graph.counts[i][j] for i, j in edges], dtype=np.float64)
    return EdgeBatch(token_ids, lengths, relation_ids, weights, counts)


def forward_batch(model: EmbeddingModel, token_ids: np.ndarray, lengths: np.ndarray) -> ForwardCache:
    params = model.params
    B, L = token_ids.shape
    h = np.zeros((B, model.state_size))
    masks, enc_steps = [], []
    for l in range(L):
        x = params["emb"][token_ids[:, l]]
        h_new, step = _gru_forward(params, "enc", x, h)
        mask = (lengths > l)[:, None].astype(np.float64)
        h = mask * h_new + (1.0 - mask) * h
        masks.append(mask)
        enc_steps.append(step)
    go = np.broadcast_to(params["emb"][GO_ID], (B, model.embed_size))
    h_dec, dec_step = _gru_forward(params, "dec", go, h)
    logits = h_dec @ params["out_W"] + params["out_b"]
    probs = _softmax(logits)
    return ForwardCache(token_ids, masks, enc_steps, h, dec_step, h_dec, probs)


def backward_batch(model: EmbeddingModel, cache: ForwardCache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    params = model.params
    grads = zero_grads(params)
    grads["out_W"] += cache.h_dec.T @ dlogits
    grads["out_b"] += dlogits.sum(axis=0)
    dh_dec = dlogits @ params["out_W"].T
    dgo, dh = _gru_backward(params, "dec", cache.dec_step, dh_dec, grads)
    grads["emb"][GO_ID] += dgo.sum(axis=0)
    for l in reversed(range(len(cache.enc_steps))):
        mask = cache.masks[l]
        dh_step = dh * mask
        dx, dh_prev = _gru_backward(params, "enc", cache.enc_steps[l], dh_step, grads)
        np.add.at(grads["emb"], cache.token_ids[:, l], dx)
        dh = dh * (1.0 - mask) + dh_prev
    return grads


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _selected_logprobs(probs: np.ndarray, relation_ids: np.ndarray):
    p_sel = probs[np.arange(probs.shape[0]), relation_ids]
    active = p_sel > PROB_FLOOR
    logp = np.log(np.maximum(p_sel, PROB_FLOOR))
    return logp, active


def _dlogits_from_dlogp(probs: np.ndarray, relation_ids: np.ndarray, dlogp: np.ndarray) -> np.ndarray:
    dlogits = -probs * dlogp[:, None]
    dlogits[np.arange(probs.shape[0]), relation_ids] += dlogp
    return dlogits


def distribution_loss(model: EmbeddingModel, batch: EdgeBatch) -> float:
    """Mean squared difference between predicted and target log-probabilities
    over the batch edges (minimized).  Targets must be strictly positive."""
    loss, _, _ = _distribution_forward(model, batch)
    return loss


def _distribution_forward(model, batch):
    if batch.weights is None:
        raise DataError("batch carries no target weights; normalize the graph first")
    if np.any(batch.weights <= 0.0):
        raise DataError("target probabilities must be > 0 for distribution regression")
    cache = forward_batch(model, batch.token_ids, batch.lengths)
    logp, active = _selected_logprobs(cache.probs, batch.relation_ids)
    diffs = logp - np.log(batch.weights)
    loss = float(np.mean(diffs**2))
    dlogp = 2.0 * diffs / batch.size * active
    return loss, cache, dlogp


def count_loglik(model: EmbeddingModel, batch: EdgeBatch) -> float:
    """Count-weighted average log-likelihood over the batch edges
    (maximized); equals the mean log-likelihood of the individual
    distant-supervision occurrences behind the counts."""
    loss, _, _ = _count_forward(model, batch)
    return -loss


def _count_forward(model, batch):
    if batch.counts is None or np.any(batch.counts <= 0):
        raise DataError("count-weighted likelihood needs positive co-occurrence counts")
    cache = forward_batch(model, batch.token_ids, batch.lengths)
    logp, active = _selected_logprobs(cache.probs, batch.relation_ids)
    w = batch.counts / batch.counts.sum()
    loss = float(-np.sum(w * logp))
    dlogp = -w * active
    return loss, cache, dlogp


OBJECTIVES = ("global", "local")


def loss_and_gradients(
    model: EmbeddingModel, batch: EdgeBatch, objective: str
) -> tuple[float, dict[str, np.ndarray]]:
    """Scalar training loss (lower is better for both objectives) and exact
    analytic gradients for every parameter tensor.

    ``global`` regresses onto normalized co-occurrence distributions;
    ``local`` maximizes count-weighted likelihood (returned negated so the
    optimizer always minimizes).
    """
    if objective == "global":
        loss, cache, dlogp = _distribution_forward(model, batch)
    elif objective == "local":
        loss, cache, dlogp = _count_forward(model, batch)
    else:
        raise DataError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    dlogits = _dlogits_from_dlogp(cache.probs, batch.relation_ids, dlogp)
    grads = backward_batch(model, cache, dlogits)
    return loss, grads


def gradients(model: EmbeddingModel, batch: EdgeBatch, objective: str) -> dict[str, np.ndarray]:
    return loss_and_gradients(model, batch, objective)[1]


def training_loss(model: EmbeddingModel, batch: EdgeBatch, objective: str) -> float:
    if objective == "global":
        return distribution_loss(model, batch)
    if objective == "local":
        return -count_loglik(model, batch)
    raise DataError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
