"""Alternating discriminator / generator training and fine-tuning."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import replace

import numpy as np

from ..graph import GraphConfig, build_graph
from ..numeric import tensor as T
from ..numeric.optim import AdamState, adam_step
from ..numeric.rng import Rng
from .checkpoint import ModelCheckpoint
from .config import ARCHITECTURE_FIELDS, TrainingConfig
from .losses import batch_reconstruction_sum, discriminator_loss, recon_target, total_generator_loss
from .network import (
    batch_graphs,
    decode,
    discriminate,
    discriminator_names,
    encode_batch,
    encoder_params,
    generator_names,
    init_params,
    lift_arrays,
    lift_graphs,
    reparameterize,
    vae_heads,
)

log = logging.getLogger(__name__)


def _optimizer_snapshot(states):
    return {
        group: {"t": st.t, "m": OrderedDict((n, st.m[n].copy()) for n in st.names),
                "v": OrderedDict((n, st.v[n].copy()) for n in st.names)}
        for group, st in states.items()
    }


def _restore_optimizer(store, snapshot, group, names, lr):
    st = AdamState.fresh(store, names, lr=lr)
    saved = snapshot.get(group)
    if saved:
        st.t = saved["t"]
        for n in names:
            st.m[n] = saved["m"][n].copy()
            st.v[n] = saved["v"][n].copy()
    return st


class _Prepared:
    """Graphs, reconstruction targets and lifted arrays for one corpus."""

    def __init__(self, corpus, graph_cfg, n_max):
        if not corpus:
            raise ValueError("training corpus is empty")
        longest = max(len(d.elements) for d in corpus)
        if longest > n_max:
            raise ValueError(f"N_max={n_max} is smaller than the longest document ({longest} elements)")
        self.graphs = [build_graph(d, graph_cfg) for d in corpus]
        self.targets = [recon_target(g, n_max) for g in self.graphs]
        self.lifted = {id(g): lift_arrays(g, n_max) for g in self.graphs}


def _run_epochs(store, rng, states, data, cfg, epochs, trace):
    gen = generator_names(store)
    disc = discriminator_names(store)
    enc = encoder_params(store, "enc", cfg.n_layers)
    n = len(data.graphs)
    for _ in range(epochs):
        epoch = len(trace) + 1
        perm = rng.permutation(n)
        sums = {"generator": 0.0, "discriminator": 0.0, "reconstruction": 0.0, "kl": 0.0}
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            graphs = [data.graphs[i] for i in idx]
            targets = [data.targets[i] for i in idx]
            B = len(idx)
            z_fake = rng.normal(B * cfg.d_latent).reshape(B, cfg.d_latent)
            eps = rng.normal(B * cfg.d_latent).reshape(B, cfg.d_latent)
            real = lift_graphs(graphs, cfg.n_max, data.lifted)

            # discriminator step; fakes carry no generator tape
            with T.no_grad():
                fake = decode(z_fake, store, cfg.n_max)
            d_loss = discriminator_loss(discriminate(real, store, cfg.n_layers),
                                        discriminate(fake, store, cfg.n_layers))
            _check_finite(d_loss, epoch, n_batches)
            T.backward(d_loss)
            adam_step(store, states["disc"])

            # generator / VAE step
            batch = batch_graphs(graphs)
            _, pooled = encode_batch(batch, enc)
            mu, log_var = vae_heads(pooled, store)
            recon = decode(reparameterize(mu, log_var, eps=eps), store, cfg.n_max)
            d_fake = discriminate(decode(z_fake, store, cfg.n_max), store, cfg.n_layers)
            g_loss = total_generator_loss(recon, targets, mu, log_var, d_fake, store, gen, cfg)
            _check_finite(g_loss.total, epoch, n_batches)
            T.backward(g_loss.total)
            adam_step(store, states["gen"])
            for name in disc:
                store[name].zero_grad()

            sums["generator"] += float(g_loss.total.data)
            sums["discriminator"] += float(d_loss.data)
            sums["reconstruction"] += g_loss.reconstruction
            sums["kl"] += g_loss.kl
            n_batches += 1
        record = {"epoch": epoch}
        record.update({k: v / n_batches for k, v in sums.items()})
        trace.append(record)
        log.info("epoch %d generator %.6f discriminator %.6f", epoch,
                 record["generator"], record["discriminator"])


def _check_finite(loss, epoch, batch):
    if not math.isfinite(float(loss.data)):
        raise T.NumericFailure(f"numeric failure: non-finite loss at epoch {epoch}, batch {batch}")


def _checkpoint(store, rng, states, cfg, graph_cfg, trace):
    return ModelCheckpoint(
        training_config=cfg,
        graph_config=graph_cfg,
        params=OrderedDict((n, t.data.copy()) for n, t in store.items()),
        rng_state=rng.state,
        loss_trace=[dict(r) for r in trace],
        optimizer=_optimizer_snapshot(states),
    )


def _fresh(cfg):
    rng = Rng(cfg.seed)
    store = init_params(cfg, rng)
    states = {
        "gen": AdamState.fresh(store, generator_names(store), lr=cfg.lr),
        "disc": AdamState.fresh(store, discriminator_names(store), lr=cfg.disc_lr),
    }
    return store, rng, states


def initial_checkpoint(cfg=None, graph_cfg=None):
    """Untrained checkpoint: seeded initialisation, no epochs run."""
    cfg = replace(cfg or TrainingConfig(), epochs=0)
    store, rng, states = _fresh(cfg)
    return _checkpoint(store, rng, states, cfg, graph_cfg or GraphConfig(), [])


def train(corpus, graph_cfg=None, cfg=None):
    """Train the VAE+GAN generator on ``corpus``; returns a checkpoint."""
    cfg = cfg or TrainingConfig()
    graph_cfg = graph_cfg or GraphConfig()
    data = _Prepared(corpus, graph_cfg, cfg.n_max)
    store, rng, states = _fresh(cfg)
    trace = []
    _run_epochs(store, rng, states, data, cfg, cfg.epochs, trace)
    return _checkpoint(store, rng, states, cfg, graph_cfg, trace)


def fine_tune(ckpt, corpus, **overrides):
    """Continue training from ``ckpt`` (parameters, optimiser and RNG state).

    ``epochs`` in ``overrides`` is the number of additional epochs; the
    returned checkpoint's config records the cumulative count. Architecture
    fields cannot change.
    """
    base = ckpt.training_config
    for name in ARCHITECTURE_FIELDS + ("seed",):
        if name in overrides and overrides[name] != getattr(base, name):
            raise ValueError(f"cannot change architecture field {name!r} when fine-tuning "
                             f"({getattr(base, name)} -> {overrides[name]})")
    extra = int(overrides.pop("epochs", 0))
    run_cfg = replace(base, **overrides)
    store = ckpt.store()
    rng = Rng(0)
    rng.state = ckpt.rng_state
    states = {
        "gen": _restore_optimizer(store, ckpt.optimizer, "gen", generator_names(store), run_cfg.lr),
        "disc": _restore_optimizer(store, ckpt.optimizer, "disc", discriminator_names(store), run_cfg.disc_lr),
    }
    trace = [dict(r) for r in ckpt.loss_trace]
    if extra > 0:
        data = _Prepared(corpus, ckpt.graph_config, run_cfg.n_max)
        _run_epochs(store, rng, states, data, run_cfg, extra, trace)
    out_cfg = replace(run_cfg, epochs=base.epochs + extra)
    return _checkpoint(store, rng, states, out_cfg, ckpt.graph_config, trace)


def evaluate_reconstruction(ckpt, corpus):
    """Mean reconstruction loss of ``corpus`` decoded from posterior means."""
    cfg = ckpt.training_config
    store = ckpt.store()
    data = _Prepared(corpus, ckpt.graph_config, cfg.n_max)
    with T.no_grad():
        _, pooled = encode_batch(batch_graphs(data.graphs), encoder_params(store, "enc", cfg.n_layers))
        mu, _ = vae_heads(pooled, store)
        s = decode(mu, store, cfg.n_max)
        total = batch_reconstruction_sum(s, data.targets)
    return float(total.data) / len(corpus)


def params_equal(a, b):
    return list(a.params) == list(b.params) and all(
        np.array_equal(a.params[n], b.params[n]) for n in a.params)
