"""Message-passing encoder, VAE heads, slot decoder and graph discriminator.

Graphs are processed as a disjoint union (``GraphBatch``): node rows of all
graphs are stacked and message indices are offset, so one tape op covers a
whole minibatch. A batch of one graph is the single-graph case.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..graph import D_EDGE, D_NODE, N_TYPES, RelationKind
from ..numeric import tensor as T
from ..numeric.optim import ParamStore
from ..numeric.rng import Rng

SLOT_WIDTH = 1 + N_TYPES + 4
D_DISC_NODE = 1 + N_TYPES + 4 + 1
D_DISC_EDGE = 2
BBOX_DELTA = 1e-3


# ---------------------------------------------------------------- parameters


@dataclass
class GnnLayerParams:
    W_msg: T.Tensor
    b_msg: T.Tensor


@dataclass
class EncoderParams:
    W_in: T.Tensor
    b_in: T.Tensor
    layers: list


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_range(-limit, limit, fan_in * fan_out).reshape(fan_in, fan_out)


def _add_affine(store, rng, name, fan_in, fan_out):
    store.add(f"{name}.W", _glorot(rng, fan_in, fan_out))
    store.add(f"{name}.b", np.zeros(fan_out))


def init_params(cfg, rng):
    """Glorot-uniform weights and zero biases, drawn in a fixed order.

    The log-variance head starts at zero.
    """
    H, Z, N = cfg.d_hidden, cfg.d_latent, cfg.n_max
    store = ParamStore()
    _add_affine(store, rng, "enc.in", D_NODE, H)
    for l in range(cfg.n_layers):
        _add_affine(store, rng, f"enc.mp{l}", 2 * H + D_EDGE, H)
    _add_affine(store, rng, "heads.mu", H, Z)
    # zero log-variance head: q(z|x) starts at unit variance whatever the
    # (unnormalised, degree-dependent) pooled magnitude is
    store.add("heads.logvar.W", np.zeros((H, Z)))
    store.add("heads.logvar.b", np.zeros(Z))
    _add_affine(store, rng, "dec.hidden", Z, H)
    _add_affine(store, rng, "dec.out", H, N * SLOT_WIDTH + cfg.n_pairs)
    _add_affine(store, rng, "disc.in", D_DISC_NODE, H)
    for l in range(cfg.n_layers):
        _add_affine(store, rng, f"disc.mp{l}", 2 * H + D_DISC_EDGE, H)
    _add_affine(store, rng, "disc.head", H, 1)
    return store


def encoder_params(store, prefix, n_layers):
    return EncoderParams(
        store[f"{prefix}.in.W"], store[f"{prefix}.in.b"],
        [GnnLayerParams(store[f"{prefix}.mp{l}.W"], store[f"{prefix}.mp{l}.b"])
         for l in range(n_layers)],
    )


def generator_names(store):
    return [n for n in store if not n.startswith("disc.")]


def discriminator_names(store):
    return store.names("disc.")


# ---------------------------------------------------------------- graph batches


@dataclass
class GraphBatch:
    """Disjoint union of graphs with per-message receiver/sender indices."""

    x: np.ndarray
    recv: np.ndarray
    send: np.ndarray
    edge_feat: np.ndarray
    graph_index: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self):
        return self.x.shape[0]

    @property
    def n_graphs(self):
        return len(self.counts)


def graph_messages(g):
    """Directed messages (recv, send, feature) for one graph.

    Undirected edges deliver in both directions with the offset negated on
    the reverse message; hierarchy edges deliver only at their destination.
    """
    recv, send, feats = [], [], []
    for e, f in zip(g.edges, g.edge_features):
        recv.append(e.dst)
        send.append(e.src)
        feats.append(f)
        if e.src != e.dst and e.kind is not RelationKind.hierarchy:
            rev = f.copy()
            rev[8:10] = -rev[8:10]
            recv.append(e.src)
            send.append(e.dst)
            feats.append(rev)
    return (np.array(recv, dtype=np.int64), np.array(send, dtype=np.int64),
            np.array(feats).reshape(len(feats), D_EDGE))


def batch_graphs(graphs):
    xs, recvs, sends, feats, gids = [], [], [], [], []
    offset = 0
    for b, g in enumerate(graphs):
        r, s, f = graph_messages(g)
        xs.append(g.node_features)
        recvs.append(r + offset)
        sends.append(s + offset)
        feats.append(f)
        gids.append(np.full(g.n_nodes, b, dtype=np.int64))
        offset += g.n_nodes
    return GraphBatch(
        x=np.concatenate(xs), recv=np.concatenate(recvs), send=np.concatenate(sends),
        edge_feat=np.concatenate(feats), graph_index=np.concatenate(gids),
        counts=np.array([g.n_nodes for g in graphs], dtype=np.float64),
    )


# ---------------------------------------------------------------- message passing


def message_passing(H, recv, send, edge_feat, layer, n_nodes, weights=None):
    """relu(sum over incoming messages of affine([h_recv | h_send | e]))."""
    H = T.as_tensor(H)
    d_in = H.shape[1]
    expected = (2 * d_in + edge_feat.shape[1], layer.b_msg.shape[0])
    if layer.W_msg.shape != expected:
        raise ValueError(f"message weights {layer.W_msg.shape} do not fit inputs {expected}")
    inputs = T.concat([T.gather_rows(H, recv), T.gather_rows(H, send), T.as_tensor(edge_feat)], axis=1)
    msgs = T.affine(inputs, layer.W_msg, layer.b_msg)
    if weights is not None:
        msgs = msgs * T.reshape(weights, (-1, 1))
    return T.relu(T.segment_sum(msgs, recv, n_nodes))


def message_passing_layer(H, g, layer):
    """One layer over a single LayoutGraph."""
    recv, send, feat = graph_messages(g)
    return message_passing(H, recv, send, feat, layer, g.n_nodes)


def encode_batch(batch, enc):
    """Node embeddings and per-graph mean-pooled embeddings."""
    H = T.affine(batch.x, enc.W_in, enc.b_in)
    for layer in enc.layers:
        H = message_passing(H, batch.recv, batch.send, batch.edge_feat, layer, batch.n_nodes)
    pooled = T.segment_sum(H, batch.graph_index, batch.n_graphs) * (1.0 / batch.counts[:, None])
    return H, pooled


def encode_graph(g, enc):
    H, pooled = encode_batch(batch_graphs([g]), enc)
    return H, T.reshape(pooled, (-1,))


def vae_heads(pooled, store):
    mu = T.affine(pooled, store["heads.mu.W"], store["heads.mu.b"])
    log_var = T.affine(pooled, store["heads.logvar.W"], store["heads.logvar.b"])
    return mu, log_var


def reparameterize(mu, log_var, rng=None, eps=None):
    """``mu + exp(log_var / 2) * eps``; eps is drawn from ``rng`` unless given."""
    mu, log_var = T.as_tensor(mu), T.as_tensor(log_var)
    if eps is None:
        eps = rng.normal(mu.data.size).reshape(mu.shape)
    return mu + T.exp(log_var * 0.5) * np.asarray(eps, dtype=np.float64).reshape(mu.shape)


# ---------------------------------------------------------------- soft graphs


@dataclass
class SoftGraph:
    """Decoder output for ``batch`` graphs of ``n_max`` slots each.

    presence (B*N,), type_probs (B*N, 8), bbox (B*N, 4), edge_probs (B, P).
    Pairs (i, j), i < j, are enumerated lexicographically.
    """

    presence: T.Tensor
    type_probs: T.Tensor
    bbox: T.Tensor
    edge_probs: T.Tensor
    n_max: int
    batch: int = 1

    def graph(self, b):
        """Numpy views of one graph of the batch."""
        sl = slice(b * self.n_max, (b + 1) * self.n_max)
        return {
            "presence": self.presence.data[sl],
            "type_probs": self.type_probs.data[sl],
            "bbox": self.bbox.data[sl],
            "edge_probs": self.edge_probs.data[b],
        }


@lru_cache(maxsize=None)
def pair_list(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


@lru_cache(maxsize=None)
def pair_index(n):
    idx = -np.ones((n, n), dtype=np.int64)
    for k, (i, j) in enumerate(pair_list(n)):
        idx[i, j] = idx[j, i] = k
    return idx


def decode(z, store, n_max):
    """Map latent rows (B, d_latent) to a SoftGraph batch."""
    z = T.as_tensor(z)
    if z.data.ndim == 1:
        z = T.reshape(z, (1, -1))
    B = z.shape[0]
    h = T.relu(T.affine(z, store["dec.hidden.W"], store["dec.hidden.b"]))
    out = T.affine(h, store["dec.out.W"], store["dec.out.b"])
    width = n_max * SLOT_WIDTH
    slots = T.reshape(out[:, :width], (B * n_max, SLOT_WIDTH))
    presence = T.sigmoid(slots[:, 0])
    type_probs = T.softmax_rows(slots[:, 1:1 + N_TYPES])
    raw = T.sigmoid(slots[:, 1 + N_TYPES:])
    a, b, c, d = raw[:, 0:1], raw[:, 1:2], raw[:, 2:3], raw[:, 3:4]
    x0 = T.minimum(T.minimum(a, b), 1.0 - BBOX_DELTA)
    y0 = T.minimum(T.minimum(c, d), 1.0 - BBOX_DELTA)
    x1 = T.minimum(T.maximum(a, b) + BBOX_DELTA, 1.0)
    y1 = T.minimum(T.maximum(c, d) + BBOX_DELTA, 1.0)
    bbox = T.concat([x0, y0, x1, y1], axis=1)
    edge_probs = T.sigmoid(out[:, width:])
    return SoftGraph(presence, type_probs, bbox, edge_probs, n_max, B)


def lift_arrays(g, n_max):
    """Numpy SoftGraph arrays of a hard LayoutGraph."""
    n = g.n_nodes
    if n > n_max:
        raise ValueError(f"graph {g.doc_id!r} has {n} nodes but N_max is {n_max}")
    presence = np.zeros(n_max)
    presence[:n] = 1.0
    types = np.full((n_max, N_TYPES), 1.0 / N_TYPES)
    types[:n] = g.node_features[:, :N_TYPES]
    bbox = np.zeros((n_max, 4))
    bbox[:n] = g.node_bboxes()
    adj = np.zeros(n_max * (n_max - 1) // 2)
    pidx = pair_index(n_max)
    for e in g.edges:
        if e.src != e.dst:
            adj[pidx[e.src, e.dst]] = 1.0
    return presence, types, bbox, adj


def lift_graphs(graphs, n_max, cache=None):
    """Stack hard graphs into one constant SoftGraph batch."""
    parts = [cache[id(g)] if cache is not None and id(g) in cache else lift_arrays(g, n_max)
             for g in graphs]
    return SoftGraph(
        presence=T.Tensor(np.concatenate([p[0] for p in parts])),
        type_probs=T.Tensor(np.concatenate([p[1] for p in parts])),
        bbox=T.Tensor(np.concatenate([p[2] for p in parts])),
        edge_probs=T.Tensor(np.stack([p[3] for p in parts])),
        n_max=n_max, batch=len(graphs),
    )


def slots_of(store):
    """N_max recovered from the decoder width N*SLOT_WIDTH + N(N-1)/2."""
    width = store["dec.out.W"].shape[1]
    b = 2 * SLOT_WIDTH - 1
    return int(round((-b + np.sqrt(b * b + 8 * width)) / 2))


@lru_cache(maxsize=None)
def _disc_messages(batch, n):
    """Receiver/sender/weight-index arrays for all ordered pairs plus self-loops."""
    pidx = pair_index(n)
    P = n * (n - 1) // 2
    recv, send, widx = [], [], []
    for b in range(batch):
        for i in range(n):
            for j in range(n):
                if i != j:
                    recv.append(b * n + i)
                    send.append(b * n + j)
                    widx.append(b * P + pidx[i, j])
    n_pair_msgs = len(recv)
    recv.extend(range(batch * n))
    send.extend(range(batch * n))
    graph_index = np.repeat(np.arange(batch), n)
    return (np.array(recv, dtype=np.int64), np.array(send, dtype=np.int64),
            np.array(widx, dtype=np.int64), n_pair_msgs, graph_index)


def discriminate(s, store, n_layers):
    """Probability (B,) that each graph of the batch is real.

    ``s`` is a SoftGraph batch; a hard LayoutGraph is lifted first. Slot features are [presence | presence*types | presence*bbox | slot
    fraction]; messages between slots are scaled by the pair's edge
    probability and each slot's self-loop by its presence.
    """
    if not isinstance(s, SoftGraph):
        s = lift_graphs([s], slots_of(store))
    B, N = s.batch, s.n_max
    recv, send, widx, _, gidx = _disc_messages(B, N)
    p = T.reshape(s.presence, (-1, 1))
    frac = np.tile(np.arange(N) / max(N - 1, 1), B).reshape(-1, 1)
    x = T.concat([p, s.type_probs * p, s.bbox * p, T.Tensor(frac)], axis=1)
    weights = T.concat([T.gather_rows(T.reshape(s.edge_probs, (-1,)), widx), s.presence], axis=0)
    centers = (s.bbox[:, 0:2] + s.bbox[:, 2:4]) * 0.5
    offsets = T.gather_rows(centers, recv) - T.gather_rows(centers, send)
    enc = encoder_params(store, "disc", n_layers)
    H = T.affine(x, enc.W_in, enc.b_in)
    for layer in enc.layers:
        inputs = T.concat([T.gather_rows(H, recv), T.gather_rows(H, send), offsets], axis=1)
        msgs = T.affine(inputs, layer.W_msg, layer.b_msg) * T.reshape(weights, (-1, 1))
        H = T.relu(T.segment_sum(msgs, recv, B * N))
    pooled = T.segment_sum(H, gidx, B) * (1.0 / N)
    logit = T.affine(pooled, store["disc.head.W"], store["disc.head.b"])
    return T.sigmoid(T.reshape(logit, (-1,)))


def new_model_store(cfg):
    rng = Rng(cfg.seed)
    store = init_params(cfg, rng)
    return store, rng
