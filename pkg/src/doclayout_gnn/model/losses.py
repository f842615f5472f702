"""Reconstruction, VAE, adversarial and combined generator objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numeric import tensor as T
from .network import lift_arrays


@dataclass
class ReconTarget:
    presence: np.ndarray
    types: np.ndarray
    bbox: np.ndarray
    adjacency: np.ndarray

    @property
    def n(self):
        return len(self.types)


def recon_target(g, n_max):
    presence, types, bbox, adj = lift_arrays(g, n_max)
    n = g.n_nodes
    return ReconTarget(presence, np.argmax(types[:n], axis=1), bbox[:n].copy(), adj)


def batch_reconstruction_sum(s, targets):
    """Sum over the batch of per-graph reconstruction losses.

    Per graph: presence BCE summed over all slots, type cross-entropy and
    per-slot bbox MSE summed over the n occupied slots, and edge BCE summed
    over all slot pairs. Slot k is matched to node k in reading order.
    """
    N = s.n_max
    if len(targets) != s.batch:
        raise ValueError(f"{len(targets)} targets for a batch of {s.batch}")
    rows, cols, boxes = [], [], []
    for b, t in enumerate(targets):
        rows.append(b * N + np.arange(t.n))
        cols.append(t.types)
        boxes.append(t.bbox)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    boxes = np.concatenate(boxes)
    presence = T.bce(s.presence, np.concatenate([t.presence for t in targets]), reduction="sum")
    types = T.neg_log_prob(s.type_probs[rows, cols])
    bbox = T.mse(T.gather_rows(s.bbox, rows), boxes) * float(len(rows))
    edges = T.bce(s.edge_probs, np.stack([t.adjacency for t in targets]), reduction="sum")
    return presence + types + bbox + edges


def reconstruction_loss(s, g):
    """Reconstruction loss of one graph against a single-graph SoftGraph."""
    if g.n_nodes > s.n_max:
        raise ValueError(f"graph {g.doc_id!r} has {g.n_nodes} nodes but N_max is {s.n_max}")
    return batch_reconstruction_sum(s, [recon_target(g, s.n_max)])


def vae_loss(s, g, mu, log_var, beta):
    return reconstruction_loss(s, g) + T.kl_diag_gaussian(mu, log_var) * beta


def _clamp(p):
    return min(max(float(p), T.PROB_EPS), 1.0 - T.PROB_EPS)


def gan_value(d_real, d_fake):
    """Single-sample value log D(x) + log(1 - D(G(z))) with clamped probabilities."""
    return math.log(_clamp(d_real)) + math.log1p(-_clamp(d_fake))


def discriminator_loss(d_real, d_fake):
    """Batch mean of the negated GAN value."""
    return T.bce(d_real, 1.0) + T.bce(d_fake, 0.0)


def generator_adversarial_loss(d_fake, objective):
    """Minimax: mean log(1 - D(G(z))). Non-saturating: mean -log D(G(z))."""
    if objective == "minimax":
        return T.bce(d_fake, 0.0) * -1.0
    return T.bce(d_fake, 1.0)


def l2_penalty(store, names):
    total = None
    for n in names:
        p = store[n]
        term = T.sum(p * p)
        total = term if total is None else total + term
    return total


@dataclass
class GeneratorLoss:
    total: T.Tensor
    reconstruction: float
    kl: float
    adversarial: float
    regularization: float


def total_generator_loss(s_recon, targets, mu, log_var, d_fake, store, gen_names, cfg):
    """Batch mean of reconstruction + beta*KL, plus gamma*adversarial and lambda*L2."""
    B = len(targets)
    recon = batch_reconstruction_sum(s_recon, targets)
    kl = T.kl_diag_gaussian(mu, log_var)
    adv = generator_adversarial_loss(d_fake, cfg.gen_objective)
    reg = l2_penalty(store, gen_names)
    total = (recon + kl * cfg.beta) * (1.0 / B) + adv * cfg.gamma + reg * cfg.lam
    return GeneratorLoss(total, float(recon.data) / B, float(kl.data) / B,
                         float(adv.data), float(reg.data))
