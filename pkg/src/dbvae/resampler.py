"""Latent-rarity resampling: histogram estimation over encoder means,
inverse-frequency sampling weights, and categorical index draws.

Per latent dimension, a uniform-width histogram over the face examples'
encoder means estimates how common each latent value is.  An example's
unnormalized weight is the product over dimensions of 1 / (Q_d + alpha),
where Q_d is the probability mass of the bin its mean falls in; rare latent
traits therefore get sampled more often, and alpha > 0 bounds the boost.
Dimensions whose means are all identical carry no information and are
replaced by a uniform histogram, contributing an equal factor to every
example.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .models import EncoderParams, latent_means
from .rng import RngStream


@dataclass
class HistogramSet:
    """Per-dimension binned probability estimates of the latent means."""
    edges: np.ndarray       # (k, B+1), strictly increasing per row
    probs: np.ndarray       # (k, B), rows sum to 1
    degenerate: np.ndarray  # (k,) bool; True where all means coincided

    @property
    def latent_dim(self) -> int:
        return self.edges.shape[0]

    @property
    def bins(self) -> int:
        return self.probs.shape[1]


@dataclass
class SampleWeights:
    """Normalized training-selection probabilities over the face subset."""
    probs: np.ndarray  # (M,), sums to 1, all > 0
    alpha: float
    epoch: int = 0


def build_histograms(mus: np.ndarray, bins: int) -> HistogramSet:
    """Histogram each latent dimension of an (M, k) mean matrix."""
    mus = np.asarray(mus, dtype=np.float64)
    if mus.ndim != 2 or mus.shape[0] < 2:
        raise ValueError(f"build_histograms: need >= 2 examples of shape (M, k), got {mus.shape}")
    if bins < 2:
        raise ValueError(f"build_histograms: need >= 2 bins, got {bins}")
    m, k = mus.shape
    edges = np.empty((k, bins + 1))
    probs = np.empty((k, bins))
    degenerate = np.zeros(k, dtype=bool)
    for d in range(k):
        lo, hi = mus[:, d].min(), mus[:, d].max()
        if lo == hi:
            # no spread: weight-neutral uniform substitute around the point
            degenerate[d] = True
            edges[d] = np.linspace(lo - 0.5, lo + 0.5, bins + 1)
            probs[d] = 1.0 / bins
            continue
        edges[d] = np.linspace(lo, hi, bins + 1)
        counts, _ = np.histogram(mus[:, d], bins=edges[d])
        probs[d] = counts / m
    return HistogramSet(edges=edges, probs=probs, degenerate=degenerate)


def estimate_histograms(encoder: EncoderParams, faces, bins: int) -> HistogramSet:
    """Run the encoder over face examples and histogram the latent means.

    ``faces`` may be a Dataset, a list of examples, or an (M, C, 64, 64)
    image stack.  The mean vector is used as the latent point estimate; no
    sampling noise enters the density.
    """
    images = _face_images(faces)
    if len(images) == 0:
        raise ValueError("estimate_histograms: empty face set")
    return build_histograms(latent_means(encoder, images), bins)


def _face_images(faces) -> np.ndarray:
    if isinstance(faces, np.ndarray):
        return faces
    examples = getattr(faces, "examples", faces)
    return np.stack([ex.image for ex in examples]) if len(examples) else np.zeros((0,))


def bin_indices(hist: HistogramSet, mus: np.ndarray) -> np.ndarray:
    """Bin index of each example's mean, per dimension; (M, k) ints.

    Matches numpy histogram semantics: bins are half-open except the last,
    which includes its right edge; values outside the observed range clip to
    the boundary bins.
    """
    mus = np.asarray(mus, dtype=np.float64)
    m, k = mus.shape
    idx = np.empty((m, k), dtype=np.int64)
    last = hist.bins - 1
    for d in range(k):
        raw = np.searchsorted(hist.edges[d], mus[:, d], side="right") - 1
        idx[:, d] = np.clip(raw, 0, last)
    return idx


def compute_weights(hist: HistogramSet, mus: np.ndarray, alpha: float,
                    epoch: int = 0) -> SampleWeights:
    """Inverse-frequency weights: normalize prod_d 1 / (Q_d(bin) + alpha).

    Computed in log space so deep latent spaces cannot overflow the product.
    """
    if alpha <= 0:
        raise ValueError(f"compute_weights: alpha must be > 0, got {alpha}")
    mus = np.asarray(mus, dtype=np.float64)
    if mus.ndim != 2 or mus.shape[1] != hist.latent_dim:
        raise ValueError(
            f"compute_weights: means shape {mus.shape} does not match "
            f"{hist.latent_dim} histogram dimensions")
    idx = bin_indices(hist, mus)
    q = np.take_along_axis(hist.probs, idx.T, axis=1).T  # (M, k)
    logw = -np.sum(np.log(q + alpha), axis=1)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return SampleWeights(probs=w, alpha=float(alpha), epoch=epoch)


def resample_indices(weights: SampleWeights, n: int, rng: RngStream) -> np.ndarray:
    """``n`` i.i.d. categorical draws (with replacement) from the weights."""
    if n < 1:
        raise ValueError(f"resample_indices: need n >= 1, got {n}")
    cum = np.cumsum(weights.probs)
    cum[-1] = 1.0  # guard the top edge against rounding
    u = rng.uniform((n,))
    return np.searchsorted(cum, u, side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class WeightExtreme:
    index: int
    weight: float
    group: str


@dataclass
class InspectReport:
    histograms: HistogramSet
    top: list[WeightExtreme]     # heaviest examples, descending weight
    bottom: list[WeightExtreme]  # lightest examples, ascending weight


def inspect(hist: HistogramSet, weights: SampleWeights, faces) -> InspectReport:
    """Extreme-weight report: who the resampler boosts and who it damps."""
    examples = getattr(faces, "examples", faces)
    order = np.argsort(weights.probs, kind="stable")
    count = min(10, len(weights.probs))

    def row(i: int) -> WeightExtreme:
        group = getattr(examples[i], "group", None) if i < len(examples) else None
        return WeightExtreme(index=int(i), weight=float(weights.probs[i]),
                             group=group.label if group is not None else "")

    top = [row(i) for i in order[::-1][:count]]
    bottom = [row(i) for i in order[:count]]
    return InspectReport(histograms=hist, top=top, bottom=bottom)


def histograms_to_csv(hist: HistogramSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dimension", "bin", "low", "high", "probability", "degenerate"])
    for d in range(hist.latent_dim):
        for b in range(hist.bins):
            writer.writerow([d, b, repr(float(hist.edges[d, b])),
                             repr(float(hist.edges[d, b + 1])),
                             repr(float(hist.probs[d, b])), int(hist.degenerate[d])])
    return buf.getvalue()


def histograms_from_csv(text: str) -> HistogramSet:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")][1:]
    k = max(int(r[0]) for r in rows) + 1
    bins = max(int(r[1]) for r in rows) + 1
    edges = np.empty((k, bins + 1))
    probs = np.empty((k, bins))
    degenerate = np.zeros(k, dtype=bool)
    for d, b, lo, hi, p, deg in rows:
        d, b = int(d), int(b)
        edges[d, b], edges[d, b + 1] = float(lo), float(hi)
        probs[d, b] = float(p)
        degenerate[d] = bool(int(deg))
    return HistogramSet(edges=edges, probs=probs, degenerate=degenerate)


def extremes_to_csv(report: InspectReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "end", "example_index", "weight", "group"])
    for rank, row in enumerate(report.top):
        writer.writerow([rank, "top", row.index, repr(row.weight), row.group])
    for rank, row in enumerate(report.bottom):
        writer.writerow([rank, "bottom", row.index, repr(row.weight), row.group])
    return buf.getvalue()


def extremes_from_csv(text: str) -> tuple[list[WeightExtreme], list[WeightExtreme]]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")][1:]
    top = [WeightExtreme(int(r[2]), float(r[3]), r[4]) for r in rows if r[1] == "top"]
    bottom = [WeightExtreme(int(r[2]), float(r[3]), r[4]) for r in rows if r[1] == "bottom"]
    return top, bottom
