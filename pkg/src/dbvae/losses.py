"""Training losses: latent KL, image reconstruction, detection cross-entropy.

The combined objective gates the VAE terms by the face indicator: the
classification term runs over every example, while KL and reconstruction are
averaged over face examples only, so non-face examples never touch the
decoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .models import LatentStats
from .tape import ShapeError, Tensor


def reparameterize(mu: Tensor, logvar: Tensor, eps) -> Tensor:
    """z = mu + exp(logvar / 2) * eps, differentiable in mu and logvar."""
    eps_t = eps if isinstance(eps, Tensor) else tape.tensor(eps)
    if mu.shape != logvar.shape or mu.shape != eps_t.shape:
        raise ShapeError(
            f"reparameterize: shapes differ: mu {mu.shape}, logvar {logvar.shape}, "
            f"eps {eps_t.shape}")
    sigma = tape.exp(tape.scale(logvar, 0.5))
    return tape.add(mu, tape.mul(sigma, eps_t))


def kl_loss(mu: Tensor, logvar: Tensor) -> Tensor:
    """Mean over the batch of 0.5 * sum_i(exp(lv_i) + mu_i^2 - 1 - lv_i).

    KL divergence of a diagonal Gaussian from the standard normal; zero iff
    mu == 0 and logvar == 0.
    """
    if mu.shape != logvar.shape:
        raise ShapeError(f"kl_loss: mu {mu.shape} vs logvar {logvar.shape}")
    if mu.data.ndim != 2 or mu.shape[0] == 0:
        raise ShapeError(f"kl_loss: need non-empty (N, k) inputs, got {mu.shape}")
    n, k = mu.shape
    s = tape.add(tape.sum_all(tape.exp(logvar)), tape.sum_all(tape.square(mu)))
    s = tape.sub(s, tape.sum_all(logvar))
    return tape.scale(tape.add_const(s, -float(n * k)), 0.5 / n)


def recon_loss(x: Tensor, xhat: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if x.shape != xhat.shape:
        raise ShapeError(f"recon_loss: shapes {x.shape} and {xhat.shape} differ")
    return tape.mean_all(tape.square(tape.sub(x, xhat)))


def class_loss(labels, logits: Tensor) -> Tensor:
    """Mean binary cross-entropy of {0,1} labels against raw logits."""
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("class_loss: labels must be 0 or 1")
    return tape.bce_with_logits_mean(logits, labels.astype(np.float64))


@dataclass
class LossBreakdown:
    total: Tensor          # scalar node; backpropagate through this
    classification: float
    kl: float
    reconstruction: float
    w_kl: float
    w_recon: float

    @property
    def total_value(self) -> float:
        return self.total.item()


def total_loss(labels, stats: LatentStats, images: Tensor,
               xhat_faces: Tensor | None, w_kl: float, w_recon: float) -> LossBreakdown:
    """Gated objective: classification + w_kl * KL + w_recon * reconstruction.

    ``labels`` is the per-example face indicator (1 = face).  ``xhat_faces``
    holds decoder outputs for the face rows of the batch, in face-index
    order, or None when the VAE path was not run; KL and reconstruction then
    contribute exactly zero and no gradient reaches the decoder.
    """
    labels = np.asarray(labels)
    total = class_loss(labels, stats.logit)
    classification = total.item()
    kl_value = 0.0
    recon_value = 0.0

    face_idx = np.flatnonzero(labels == 1)
    if face_idx.size:
        if w_kl != 0.0:
            kl = kl_loss(tape.take_rows(stats.mu, face_idx),
                         tape.take_rows(stats.logvar, face_idx))
            kl_value = kl.item()
            total = tape.add(total, tape.scale(kl, w_kl))
        if w_recon != 0.0 and xhat_faces is not None:
            if xhat_faces.shape[0] != face_idx.size:
                raise ShapeError(
                    f"total_loss: {xhat_faces.shape[0]} reconstructions for "
                    f"{face_idx.size} face examples")
            recon = recon_loss(tape.take_rows(images, face_idx), xhat_faces)
            recon_value = recon.item()
            total = tape.add(total, tape.scale(recon, w_recon))

    return LossBreakdown(total=total, classification=classification, kl=kl_value,
                         reconstruction=recon_value, w_kl=w_kl, w_recon=w_recon)
