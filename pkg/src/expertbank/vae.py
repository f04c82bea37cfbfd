"""Disentangled variational autoencoder over flat inputs in [0, 1].

Fully-connected encoder/decoder with tanh hidden layers and a sigmoid
output. The objective is per-element squared reconstruction error summed
over features plus beta times the closed-form diagonal-Gaussian KL, both
averaged over the batch. Forward and backward passes are written out by
hand so training is framework-free and bit-reproducible under a fixed
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics


class TrainingDivergenceError(RuntimeError):
    """Loss or parameters went non-finite during training."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


@dataclass
class VaeConfig:
    input_dim: int
    latent_dim: int
    hidden: tuple = (256, 128)
    beta: float = 4.0
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 40
    batch_size: int = 64

    def __post_init__(self):
        assert self.input_dim >= 1 and self.latent_dim >= 1
        assert self.beta > 0.0, "beta must be positive"
        assert self.lr > 0.0 and self.batch_size >= 1


@dataclass
class VaeParams:
    """Weights and biases; enc_w[-1] maps to the 2*latent_dim head that
    carries posterior means in the first half and log-variances in the
    second."""

    input_dim: int
    latent_dim: int
    beta: float
    enc_w: list = field(default_factory=list)
    enc_b: list = field(default_factory=list)
    dec_w: list = field(default_factory=list)
    dec_b: list = field(default_factory=list)

    def copy(self):
        return VaeParams(
            self.input_dim,
            self.latent_dim,
            self.beta,
            [w.copy() for w in self.enc_w],
            [b.copy() for b in self.enc_b],
            [w.copy() for w in self.dec_w],
            [b.copy() for b in self.dec_b],
        )

    def arrays(self):
        """Ordered (name, array) view shared by the optimizer, the
        serializer, and the finite-difference tests."""
        out = []
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            out.append((f"enc_w{i}", w))
            out.append((f"enc_b{i}", b))
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            out.append((f"dec_w{i}", w))
            out.append((f"dec_b{i}", b))
        return out

    def allclose(self, other, atol=0.0):
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.allclose(a, b, atol=atol, rtol=0.0)
            for (_, a), (_, b) in zip(mine, theirs)
        )


@dataclass
class VaeGradients:
    enc_w: list
    enc_b: list
    dec_w: list
    dec_b: list

    def arrays(self):
        out = []
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            out.append((f"enc_w{i}", w))
            out.append((f"enc_b{i}", b))
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            out.append((f"dec_w{i}", w))
            out.append((f"dec_b{i}", b))
        return out


@dataclass
class LossParts:
    total: float
    recon: float
    kl: float


def init_params(config, rng):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    enc_dims = [config.input_dim, *config.hidden, 2 * config.latent_dim]
    dec_dims = [config.latent_dim, *reversed(config.hidden), config.input_dim]

    def build(dims):
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return ws, bs

    enc_w, enc_b = build(enc_dims)
    dec_w, dec_b = build(dec_dims)
    return VaeParams(config.input_dim, config.latent_dim, config.beta,
                     enc_w, enc_b, dec_w, dec_b)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _chain_forward(ws, bs, x):
    """tanh hidden layers, linear final layer; returns all layer inputs
    plus the final pre-activation, so acts[i] is the input to layer i."""
    acts = [x]
    h = x
    last = len(ws) - 1
    for i, (w, b) in enumerate(zip(ws, bs)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def _chain_backward(ws, acts, d_out):
    """Backprop through _chain_forward given the gradient at the final
    pre-activation. Returns (w_grads, b_grads, d_input)."""
    wg = [None] * len(ws)
    bg = [None] * len(ws)
    delta = d_out
    for i in range(len(ws) - 1, -1, -1):
        wg[i] = acts[i].T @ delta
        bg[i] = delta.sum(axis=0)
        d_in = delta @ ws[i].T
        # acts[i] is a tanh output for i > 0, so convert to that layer's
        # pre-activation gradient before stepping down
        delta = d_in * (1.0 - acts[i] ** 2) if i > 0 else d_in
    return wg, bg, delta


def _check_batch(params, xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != params.input_dim:
        raise ValueError(
            f"expected batch of shape (n, {params.input_dim}), got {xs.shape}")
    return xs


def encode_batch(params, xs):
    xs = _check_batch(params, xs)
    out = _chain_forward(params.enc_w, params.enc_b, xs)[-1]
    d = params.latent_dim
    return out[:, :d], out[:, d:]


def encode(params, x):
    """Single input vector -> (posterior mean, posterior log-variance)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"encode expects a vector, got shape {x.shape}")
    mean, logvar = encode_batch(params, x[None, :])
    return mean[0], logvar[0]


def decode_batch(params, zs):
    zs = np.asarray(zs, dtype=np.float64)
    if zs.ndim != 2 or zs.shape[1] != params.latent_dim:
        raise ValueError(
            f"expected latents of shape (n, {params.latent_dim}), got {zs.shape}")
    out = _chain_forward(params.dec_w, params.dec_b, zs)[-1]
    return _sigmoid(out)


def decode(params, z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"decode expects a vector, got shape {z.shape}")
    return decode_batch(params, z[None, :])[0]


def _forward(params, xs, eps):
    enc_acts = _chain_forward(params.enc_w, params.enc_b, xs)
    d = params.latent_dim
    mean = enc_acts[-1][:, :d]
    logvar = enc_acts[-1][:, d:]
    sigma = np.exp(0.5 * logvar)
    z = mean + sigma * eps
    dec_acts = _chain_forward(params.dec_w, params.dec_b, z)
    xhat = _sigmoid(dec_acts[-1])
    return enc_acts, mean, logvar, sigma, z, dec_acts, xhat


def _kl_terms(mean, logvar):
    # closed form for KL(N(mean, exp(logvar)) || N(0, I)), per sample
    return -0.5 * np.sum(1.0 + logvar - mean ** 2 - np.exp(logvar), axis=1)


def loss_with_noise(params, xs, eps):
    """Loss for a fixed noise draw; the finite-difference oracle needs
    the objective to be a deterministic function of the parameters."""
    xs = _check_batch(params, xs)
    _, mean, logvar, _, _, _, xhat = _forward(params, xs, eps)
    n = xs.shape[0]
    recon = float(np.sum((xhat - xs) ** 2) / n)
    kl = float(np.sum(_kl_terms(mean, logvar)) / n)
    return LossParts(recon + params.beta * kl, recon, kl)


def beta_vae_loss(params, batch, rng):
    """One-draw Monte Carlo estimate of the beta-weighted ELBO terms."""
    batch = _check_batch(params, batch)
    eps = rng.standard_normal((batch.shape[0], params.latent_dim))
    return loss_with_noise(params, batch, eps)


def grads_with_noise(params, xs, eps):
    xs = _check_batch(params, xs)
    enc_acts, mean, logvar, sigma, z, dec_acts, xhat = _forward(params, xs, eps)
    n = xs.shape[0]

    recon = float(np.sum((xhat - xs) ** 2) / n)
    kl = float(np.sum(_kl_terms(mean, logvar)) / n)
    parts = LossParts(recon + params.beta * kl, recon, kl)

    # reconstruction path: d(recon)/d(decoder final pre-activation)
    d_dec_out = (2.0 / n) * (xhat - xs) * xhat * (1.0 - xhat)
    dec_wg, dec_bg, dz = _chain_backward(params.dec_w, dec_acts, d_dec_out)

    # reparameterized z = mean + sigma * eps, plus the KL terms
    d_mean = dz + (params.beta / n) * mean
    d_logvar = dz * eps * 0.5 * sigma + (params.beta / n) * 0.5 * (np.exp(logvar) - 1.0)
    d_enc_out = np.concatenate([d_mean, d_logvar], axis=1)
    enc_wg, enc_bg, _ = _chain_backward(params.enc_w, enc_acts, d_enc_out)

    return VaeGradients(enc_wg, enc_bg, dec_wg, dec_bg), parts


def backward(params, batch, rng):
    """Gradients of beta_vae_loss for a fresh noise draw; shapes mirror
    params.arrays()."""
    batch = _check_batch(params, batch)
    eps = rng.standard_normal((batch.shape[0], params.latent_dim))
    return grads_with_noise(params, batch, eps)


def train(params, data, epochs, batch_size, lr, rng, momentum=0.9):
    """SGD with momentum on shuffled minibatches.

    Returns (trained copy, per-epoch mean loss trace); the input params
    are left untouched, so epochs=0 hands back an identical copy.
    """
    data = _check_batch(params, data)
    if data.shape[0] == 0:
        raise ValueError("training data is empty")
    p = params.copy()
    velocity = [np.zeros_like(a) for _, a in p.arrays()]
    n = data.shape[0]
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        weighted = 0.0
        for start in range(0, n, batch_size):
            batch = data[order[start:start + batch_size]]
            eps = rng.standard_normal((batch.shape[0], p.latent_dim))
            # divergence is detected by letting inf/nan propagate to the
            # loss check below, so numpy's overflow chatter is just noise
            with np.errstate(over="ignore", invalid="ignore"):
                grads, parts = grads_with_noise(p, batch, eps)
            if not np.isfinite(parts.total):
                raise TrainingDivergenceError(epoch)
            for vel, (_, arr), (_, g) in zip(velocity, p.arrays(), grads.arrays()):
                vel *= momentum
                vel -= lr * g
                arr += vel
            weighted += parts.total * batch.shape[0]
        epoch_loss = weighted / n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergenceError(epoch)
        trace.append(epoch_loss)
    for _, arr in p.arrays():
        if not np.all(np.isfinite(arr)):
            raise TrainingDivergenceError(max(epochs - 1, 0), "parameters went non-finite")
    return p, trace
