"""Residual policy distillation.

After fine-tuning, the elite episodes are distilled into a conditional VAE
that reconstructs residuals given the scene context (scene features plus the
prior's output), so a fresh scene gets a residual without further practice.
Two ablation heads ship alongside: a deterministic MLP regressor (which
mode-averages multi-modal elites) and a VAE that predicts absolute grasp
parameters instead of residuals.

All gradients are hand-derived and finite-difference checked; no autograd.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .affordance import PARAM_DIM, GraspParams
from .errors import ConfigError, DimensionMismatchError, EmptyDatasetError
from .mlp import MLP, Adam, cosine_lr, monotone_step

WEIGHTS_SCHEMA_VERSION = 1
_STD_FLOOR = 1e-6


@dataclass(frozen=True)
class PolicyConfig:
    latent_dim: int = 4
    hidden: int = 64
    beta: float = 0.1
    lr: float = 1e-3
    epochs: int = 2000
    seed: int = 0
    head_type: str = "cvae"  # cvae | mlp | direct-vae

    def __post_init__(self):
        if self.latent_dim < 1 or self.hidden < 1 or self.epochs < 1:
            raise ConfigError("latent_dim, hidden, and epochs must be >= 1")
        if self.lr <= 0.0 or self.beta < 0.0:
            raise ConfigError("lr must be positive and beta non-negative")
        if self.head_type not in ("cvae", "mlp", "direct-vae"):
            raise ConfigError(f"unknown head type {self.head_type!r}")

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "hidden": self.hidden,
            "beta": self.beta,
            "lr": self.lr,
            "epochs": self.epochs,
            "seed": self.seed,
            "head_type": self.head_type,
        }

    @staticmethod
    def from_dict(doc: dict) -> "PolicyConfig":
        return PolicyConfig(**doc)


@dataclass(frozen=True)
class Normalization:
    """Z-score statistics captured from the training set."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(rows: np.ndarray) -> "Normalization":
        return Normalization(
            mean=rows.mean(axis=0), std=np.maximum(rows.std(axis=0), _STD_FLOOR)
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def undo(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(doc: dict) -> "Normalization":
        return Normalization(np.array(doc["mean"]), np.array(doc["std"]))


@dataclass
class CVAEParams:
    """Encoder/decoder weights plus the normalization the nets were trained in."""

    encoder: MLP  # [target_n, context_n] -> [mu_z, logvar_z]
    decoder: MLP  # [z, context_n] -> target_n
    target_norm: Normalization
    context_norm: Normalization
    config: PolicyConfig
    loss_curve: tuple[float, ...] = ()

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def params(self) -> list[np.ndarray]:
        return self.encoder.params + self.decoder.params


def kl_standard_normal(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, diag e^logvar) || N(0, I)), closed form, always >= 0.

    expm1 keeps the e^lv - 1 - lv term non-negative for tiny logvars.
    """
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return float(0.5 * np.sum(mu * mu + np.expm1(logvar) - logvar))


def elbo_loss(
    params: CVAEParams,
    delta: np.ndarray,
    context: np.ndarray,
    noise: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray], np.ndarray, np.ndarray]:
    """Reconstruction + beta * KL for one sample (or a batch, summed).

    ``noise`` is the standard-normal draw used by the reparameterization;
    ``None`` evaluates at the posterior mean (z = mu), which makes the loss a
    deterministic function of the weights. Returns the loss, the gradient
    list matching ``params.params`` (encoder then decoder arrays), and the
    gradients w.r.t. ``delta`` and ``context`` in raw (unnormalized) units.
    """
    latent = params.config.latent_dim
    dn = np.atleast_2d(params.target_norm.apply(np.asarray(delta, dtype=np.float64)))
    cn = np.atleast_2d(params.context_norm.apply(np.asarray(context, dtype=np.float64)))
    n = dn.shape[0]
    eps = np.zeros((n, latent)) if noise is None else np.atleast_2d(noise)

    enc_out, enc_cache = params.encoder.forward(np.concatenate([dn, cn], axis=1))
    mu_z, logvar = enc_out[:, :latent], enc_out[:, latent:]
    sigma = np.exp(0.5 * logvar)
    z = mu_z + sigma * eps
    dec_out, dec_cache = params.decoder.forward(np.concatenate([z, cn], axis=1))

    resid = dn - dec_out
    recon = float(np.sum(resid * resid))
    kl = float(0.5 * np.sum(mu_z * mu_z + np.expm1(logvar) - logvar))
    loss = recon + params.config.beta * kl

    # Decoder path.
    d_dec_out = -2.0 * resid
    d_dec_in, dec_grads = params.decoder.backward(dec_cache, d_dec_out)
    dz, dcn_dec = d_dec_in[:, :latent], d_dec_in[:, latent:]

    # Reparameterization and KL into the encoder outputs.
    beta = params.config.beta
    d_mu = dz + beta * mu_z
    d_logvar = dz * eps * 0.5 * sigma + beta * 0.5 * (np.exp(logvar) - 1.0)
    d_enc_in, enc_grads = params.encoder.backward(
        enc_cache, np.concatenate([d_mu, d_logvar], axis=1)
    )
    t_n = dn.shape[1]
    ddn = d_enc_in[:, :t_n] + 2.0 * resid
    dcn = d_enc_in[:, t_n:] + dcn_dec

    d_delta = np.squeeze(ddn / params.target_norm.std)
    d_context = np.squeeze(dcn / params.context_norm.std)
    return loss, enc_grads + dec_grads, d_delta, d_context


def _stack_elites(elites, target_dim: int) -> tuple[np.ndarray, np.ndarray]:
    if len(elites) == 0:
        raise EmptyDatasetError("no elite pairs to train on")
    targets = np.array([np.asarray(t, dtype=np.float64).reshape(target_dim) for t, _ in elites])
    contexts = [np.asarray(c, dtype=np.float64).reshape(-1) for _, c in elites]
    if len({c.shape[0] for c in contexts}) != 1:
        raise DimensionMismatchError("inconsistent context dimensions")
    return targets, np.array(contexts)


def _train_vae(targets: np.ndarray, contexts: np.ndarray, cfg: PolicyConfig) -> CVAEParams:
    n, t_n = targets.shape
    c_n = contexts.shape[1]
    rng = np.random.default_rng([cfg.seed, 0])
    params = CVAEParams(
        encoder=MLP.init(t_n + c_n, cfg.hidden, 2 * cfg.latent_dim, rng),
        decoder=MLP.init(cfg.latent_dim + c_n, cfg.hidden, t_n, rng),
        target_norm=Normalization.fit(targets),
        context_norm=Normalization.fit(contexts),
        config=cfg,
    )
    # One reparameterization draw per sample, fixed for the whole fit: the
    # objective is then deterministic, which keeps the recorded loss curve
    # non-increasing (within optimizer noise) as contracted.
    eps = np.random.default_rng([cfg.seed, 1]).standard_normal((n, cfg.latent_dim))
    opt = Adam(params.params, lr=cfg.lr)
    curve = []

    def batch_loss() -> float:
        return elbo_loss(params, targets, contexts, noise=eps)[0] / n

    for epoch in range(cfg.epochs):
        loss, grads, _, _ = elbo_loss(params, targets, contexts, noise=eps)
        curve.append(loss / n)
        monotone_step(
            opt, params.params, [g / n for g in grads], batch_loss,
            loss / n, cosine_lr(epoch, cfg.epochs),
        )
    params.loss_curve = tuple(curve)
    return params


def train_policy(elites, cfg: PolicyConfig | None = None) -> CVAEParams:
    """Fit the residual conditional VAE on (residual, context) elite pairs."""
    cfg = cfg or PolicyConfig()
    if cfg.head_type != "cvae":
        raise ConfigError("train_policy fits the cvae head; see the ablation trainers")
    targets, contexts = _stack_elites(elites, PARAM_DIM)
    return _train_vae(targets, contexts, cfg)


def _decode(params: CVAEParams, z: np.ndarray, context: np.ndarray) -> np.ndarray:
    cn = params.context_norm.apply(np.asarray(context, dtype=np.float64).reshape(-1))
    out = params.decoder(np.concatenate([z, cn]))[0]
    return params.target_norm.undo(out)


def act(
    params: CVAEParams,
    features: np.ndarray,
    xi: GraspParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample a residual for a fresh scene: z ~ N(0, I), decode against context."""
    if params.config.head_type != "cvae":
        raise ConfigError("act() expects a cvae head")
    context = np.concatenate([np.asarray(features, dtype=np.float64).reshape(-1), xi.as_vector()])
    _check_context(params, context)
    z = rng.standard_normal(params.latent_dim)
    return _decode(params, z, context)


def decode_mean(params: CVAEParams, features: np.ndarray, xi: GraspParams) -> np.ndarray:
    """Deterministic decode at z = 0."""
    context = np.concatenate([np.asarray(features, dtype=np.float64).reshape(-1), xi.as_vector()])
    _check_context(params, context)
    return _decode(params, np.zeros(params.latent_dim), context)


def _check_context(params: CVAEParams, context: np.ndarray) -> None:
    expected = params.context_norm.mean.shape[0]
    if context.shape[0] != expected:
        raise DimensionMismatchError(
            f"context has dim {context.shape[0]}, policy was trained with {expected}"
        )


# --------------------------------------------------------------------------
# Ablation heads
# --------------------------------------------------------------------------


@dataclass
class MLPHead:
    """Deterministic least-squares regressor from context to residual."""

    net: MLP
    target_norm: Normalization
    context_norm: Normalization
    config: PolicyConfig
    loss_curve: tuple[float, ...] = ()


def train_mlp_head(elites, cfg: PolicyConfig | None = None) -> MLPHead:
    """Fit residual = MLP(context) by mean squared error.

    On multi-modal elites this averages the modes, which is exactly the
    failure the deterministic-head ablation is meant to exhibit.
    """
    cfg = cfg or PolicyConfig(head_type="mlp")
    targets, contexts = _stack_elites(elites, PARAM_DIM)
    n = targets.shape[0]
    head = MLPHead(
        net=MLP.init(contexts.shape[1], cfg.hidden, targets.shape[1],
                     np.random.default_rng([cfg.seed, 0])),
        target_norm=Normalization.fit(targets),
        context_norm=Normalization.fit(contexts),
        config=cfg,
    )
    tn = head.target_norm.apply(targets)
    cn = head.context_norm.apply(contexts)
    opt = Adam(head.net.params, lr=cfg.lr)
    curve = []

    def batch_loss() -> float:
        out = head.net(cn)
        return float(np.sum((out - tn) ** 2)) / n

    for epoch in range(cfg.epochs):
        out, cache = head.net.forward(cn)
        resid = out - tn
        loss = float(np.sum(resid * resid)) / n
        curve.append(loss)
        _, grads = head.net.backward(cache, 2.0 * resid / n)
        monotone_step(opt, head.net.params, grads, batch_loss, loss,
                      cosine_lr(epoch, cfg.epochs))
    head.loss_curve = tuple(curve)
    return head


def act_mlp(head: MLPHead, features: np.ndarray, xi: GraspParams) -> np.ndarray:
    context = np.concatenate([np.asarray(features, dtype=np.float64).reshape(-1), xi.as_vector()])
    expected = head.context_norm.mean.shape[0]
    if context.shape[0] != expected:
        raise DimensionMismatchError(
            f"context has dim {context.shape[0]}, head was trained with {expected}"
        )
    out = head.net(head.context_norm.apply(context))[0]
    return head.target_norm.undo(out)


def train_direct_vae(elites, cfg: PolicyConfig | None = None) -> CVAEParams:
    """Same VAE machinery, but the targets are absolute grasp parameters.

    ``elites`` pairs are (executed absolute 22-vector, context).
    """
    cfg = cfg or PolicyConfig(head_type="direct-vae")
    if cfg.head_type != "direct-vae":
        raise ConfigError("train_direct_vae expects head_type 'direct-vae'")
    targets, contexts = _stack_elites(elites, PARAM_DIM)
    return _train_vae(targets, contexts, cfg)


def act_direct(
    params: CVAEParams,
    features: np.ndarray,
    xi: GraspParams,
    rng: np.random.Generator,
) -> GraspParams:
    """Sample absolute grasp parameters (not a residual)."""
    if params.config.head_type != "direct-vae":
        raise ConfigError("act_direct() expects a direct-vae head")
    context = np.concatenate([np.asarray(features, dtype=np.float64).reshape(-1), xi.as_vector()])
    _check_context(params, context)
    z = rng.standard_normal(params.latent_dim)
    return GraspParams.from_vector(_decode(params, z, context))


# --------------------------------------------------------------------------
# Weight files
# --------------------------------------------------------------------------


def save_policy(head: CVAEParams | MLPHead, path: str | Path) -> None:
    if isinstance(head, CVAEParams):
        doc = {
            "schema_version": WEIGHTS_SCHEMA_VERSION,
            "head_type": head.config.head_type,
            "config": head.config.to_dict(),
            "target_norm": head.target_norm.to_dict(),
            "context_norm": head.context_norm.to_dict(),
            "encoder": head.encoder.to_dict(),
            "decoder": head.decoder.to_dict(),
        }
    else:
        doc = {
            "schema_version": WEIGHTS_SCHEMA_VERSION,
            "head_type": "mlp",
            "config": head.config.to_dict(),
            "target_norm": head.target_norm.to_dict(),
            "context_norm": head.context_norm.to_dict(),
            "net": head.net.to_dict(),
        }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_policy(path: str | Path) -> CVAEParams | MLPHead:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != WEIGHTS_SCHEMA_VERSION:
        raise ConfigError(f"unsupported policy weights schema in {path}")
    cfg = PolicyConfig.from_dict(doc["config"])
    if doc["head_type"] == "mlp":
        return MLPHead(
            net=MLP.from_dict(doc["net"]),
            target_norm=Normalization.from_dict(doc["target_norm"]),
            context_norm=Normalization.from_dict(doc["context_norm"]),
            config=cfg,
        )
    return CVAEParams(
        encoder=MLP.from_dict(doc["encoder"]),
        decoder=MLP.from_dict(doc["decoder"]),
        target_norm=Normalization.from_dict(doc["target_norm"]),
        context_norm=Normalization.from_dict(doc["context_norm"]),
        config=cfg,
    )
