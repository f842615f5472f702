"""Finite-difference check of the full encoder + VAE + GAN objective."""

from __future__ import annotations

import time

from ..graph import GraphConfig, build_graph
from ..layout import ElementType, LayoutDocument, LayoutElement
from ..numeric.optim import finite_diff_check
from ..numeric.rng import Rng
from .config import TrainingConfig
from .losses import discriminator_loss, recon_target, total_generator_loss
from .network import (
    batch_graphs,
    decode,
    discriminate,
    encode_batch,
    encoder_params,
    generator_names,
    init_params,
    lift_graphs,
    reparameterize,
    vae_heads,
)

# compact dimensions keep the per-coordinate sweep well under a minute
GRADCHECK_CONFIG = TrainingConfig(d_hidden=8, d_latent=4, n_layers=2, n_max=6,
                                  beta=1.0, lam=1e-2, gamma=0.5)


def fixture_document():
    """Title over an image with its caption, then a text block."""
    E = ElementType
    return LayoutDocument(
        id="gradcheck-4",
        elements=(
            LayoutElement(E.title, (0.10, 0.05, 0.90, 0.10), 0.03),
            LayoutElement(E.image, (0.20, 0.14, 0.80, 0.40)),
            LayoutElement(E.caption, (0.20, 0.42, 0.80, 0.46), 0.01),
            LayoutElement(E.text_block, (0.10, 0.50, 0.90, 0.80), 0.012),
        ),
    )


def composite_loss_fn(store, cfg, graph, eps, z_fake):
    """Closure: generator objective plus discriminator loss, noise frozen."""
    batch = batch_graphs([graph])
    targets = [recon_target(graph, cfg.n_max)]
    real = lift_graphs([graph], cfg.n_max)
    gen = generator_names(store)
    enc = encoder_params(store, "enc", cfg.n_layers)

    def f():
        _, pooled = encode_batch(batch, enc)
        mu, log_var = vae_heads(pooled, store)
        recon = decode(reparameterize(mu, log_var, eps=eps), store, cfg.n_max)
        d_fake = discriminate(decode(z_fake, store, cfg.n_max), store, cfg.n_layers)
        g = total_generator_loss(recon, targets, mu, log_var, d_fake, store, gen, cfg)
        d = discriminator_loss(discriminate(real, store, cfg.n_layers), d_fake)
        return g.total + d

    return f


def run_grad_check(seed=1, h=1e-5, cfg=GRADCHECK_CONFIG):
    """Returns (max relative error, parameter count, seconds)."""
    start = time.perf_counter()
    rng = Rng(seed)
    store = init_params(cfg, rng)
    # move the zero-initialised log-variance head off its special point
    for name in ("heads.logvar.W", "heads.logvar.b"):
        p = store[name]
        p.data[...] = 0.1 * rng.normal(p.data.size).reshape(p.shape)
    graph = build_graph(fixture_document(), GraphConfig())
    eps = rng.normal(cfg.d_latent).reshape(1, -1)
    z_fake = rng.normal(cfg.d_latent).reshape(1, -1)
    f = composite_loss_fn(store, cfg, graph, eps, z_fake)
    err = finite_diff_check(f, store, h)
    return err, store.size(), time.perf_counter() - start
