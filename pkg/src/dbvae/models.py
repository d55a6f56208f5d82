"""Encoder/decoder architectures for 64x64 face detection.

Two encoder trunks are supported:

    ARCH1: 5 conv layers, kernels {4,4,4,3,3}; FC 512 -> 256 -> head
    ARCH2: 4 conv layers, kernels {4,4,3,3};   FC 1000 -> head

4x4 layers downsample (stride 2, padding 1), 3x3 layers keep the spatial
size (stride 1, padding 1), so the stacks map 64 -> 8 and 64 -> 16.  Channel
widths follow a configurable multiplier (default 16, giving 16/32/48/64/96
for ARCH1 and 16/32/48/64 for ARCH2).  Hidden activations are leaky ReLU
(slope 0.1).

The head is a single affine layer of width 1 + 2k: one detection logit,
then k latent means, then k latent log-variances.  The plain classifier is
the identical trunk read out at the logit column only.

The decoder mirrors a trunk: a dense projection from the k-dim latent code
to the trunk's final conv volume, then transposed convolutions reversing
each conv layer, ending in a sigmoid so outputs live in (0, 1) like pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tape
from .rng import RngStream
from .tape import ShapeError, Tensor

HIDDEN_SLOPE = 0.1
INPUT_SIZE = 64
LOGVAR_BIAS_INIT = -4.0


class ArchId(Enum):
    ARCH1 = "arch1"
    ARCH2 = "arch2"


# (kernel, stride, padding, channel multiple) per conv layer
_CONV_PLAN = {
    ArchId.ARCH1: ((4, 2, 1, 1), (4, 2, 1, 2), (4, 2, 1, 3), (3, 1, 1, 4), (3, 1, 1, 6)),
    ArchId.ARCH2: ((4, 2, 1, 1), (4, 2, 1, 2), (3, 1, 1, 3), (3, 1, 1, 4)),
}
_FC_PLAN = {
    ArchId.ARCH1: (512, 256),
    ArchId.ARCH2: (1000,),
}


@dataclass
class ConvLayer:
    weight: Tensor  # (out_ch, in_ch, k, k)
    bias: Tensor    # (out_ch,)
    stride: int
    padding: int

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]


@dataclass
class TConvLayer:
    weight: Tensor  # (in_ch, out_ch, k, k), adjoint layout of the mirrored conv
    bias: Tensor    # (out_ch,)
    stride: int
    padding: int

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]


@dataclass
class DenseLayer:
    weight: Tensor  # (in, out)
    bias: Tensor    # (out,)


@dataclass
class LatentStats:
    """Per-example encoder outputs: detection logit and latent Gaussian."""
    logit: Tensor   # (N,)
    mu: Tensor      # (N, k)
    logvar: Tensor  # (N, k)


@dataclass
class EncoderParams:
    arch: ArchId
    latent_dim: int
    channels: int
    channel_multiplier: int
    conv_layers: list[ConvLayer]
    fc_layers: list[DenseLayer]
    head: DenseLayer

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.conv_layers):
            out += [(f"conv{i}.weight", layer.weight), (f"conv{i}.bias", layer.bias)]
        for i, layer in enumerate(self.fc_layers):
            out += [(f"fc{i}.weight", layer.weight), (f"fc{i}.bias", layer.bias)]
        out += [("head.weight", self.head.weight), ("head.bias", self.head.bias)]
        return out

    def config(self) -> dict:
        return {"arch": self.arch.value, "latent_dim": self.latent_dim,
                "channels": self.channels, "channel_multiplier": self.channel_multiplier}


@dataclass
class DecoderParams:
    arch: ArchId
    latent_dim: int
    channels: int
    channel_multiplier: int
    seed_shape: tuple[int, int, int]  # (C, H, W) volume the latent projects to
    fc: DenseLayer
    tconv_layers: list[TConvLayer]

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("fc.weight", self.fc.weight), ("fc.bias", self.fc.bias)]
        for i, layer in enumerate(self.tconv_layers):
            out += [(f"tconv{i}.weight", layer.weight), (f"tconv{i}.bias", layer.bias)]
        return out

    def config(self) -> dict:
        return {"arch": self.arch.value, "latent_dim": self.latent_dim,
                "channels": self.channels, "channel_multiplier": self.channel_multiplier}


def _he_uniform(rng: RngStream, shape: tuple[int, ...], fan_in: int, name: str) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return tape.tensor(rng.uniform(shape, -bound, bound), name=name)


def _zeros(shape, name: str) -> Tensor:
    return tape.tensor(np.zeros(shape), name=name)


def _check_build_args(latent_dim: int, channels: int) -> None:
    if latent_dim < 1:
        raise ValueError(f"latent_dim must be >= 1, got {latent_dim}")
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")


def conv_stack_shape(arch: ArchId, channels: int, multiplier: int):
    """Per-layer (in_ch, out_ch, k, stride, pad) plus the final (C, H, W) volume."""
    layers = []
    in_ch, size = channels, INPUT_SIZE
    for k, stride, pad, mult in _CONV_PLAN[arch]:
        out_ch = mult * multiplier
        layers.append((in_ch, out_ch, k, stride, pad))
        size = (size + 2 * pad - k) // stride + 1
        in_ch = out_ch
    return layers, (in_ch, size, size)


def build_encoder(arch: ArchId, latent_dim: int, channels: int, rng: RngStream,
                  channel_multiplier: int = 16) -> EncoderParams:
    """Fresh encoder parameters, deterministic for a given stream."""
    _check_build_args(latent_dim, channels)
    plan, (last_ch, size, _) = conv_stack_shape(arch, channels, channel_multiplier)
    conv_layers = []
    for i, (in_ch, out_ch, k, stride, pad) in enumerate(plan):
        w = _he_uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k, f"enc.conv{i}.weight")
        conv_layers.append(ConvLayer(w, _zeros(out_ch, f"enc.conv{i}.bias"), stride, pad))
    fc_layers = []
    width = last_ch * size * size
    for i, out_w in enumerate(_FC_PLAN[arch]):
        w = _he_uniform(rng, (width, out_w), width, f"enc.fc{i}.weight")
        fc_layers.append(DenseLayer(w, _zeros(out_w, f"enc.fc{i}.bias")))
        width = out_w
    head_w = 1 + 2 * latent_dim
    head_bias = np.zeros(head_w)
    # start log-variances near sigma ~ 0.14 so reconstruction signal flows
    # through mu immediately instead of drowning in unit sampling noise
    head_bias[1 + latent_dim:] = LOGVAR_BIAS_INIT
    head = DenseLayer(_he_uniform(rng, (width, head_w), width, "enc.head.weight"),
                      tape.tensor(head_bias, name="enc.head.bias"))
    return EncoderParams(arch, latent_dim, channels, channel_multiplier,
                         conv_layers, fc_layers, head)


def build_decoder(arch: ArchId, latent_dim: int, channels: int, rng: RngStream,
                  channel_multiplier: int = 16) -> DecoderParams:
    """Decoder mirroring the arch's conv stack, deterministic for a given stream."""
    _check_build_args(latent_dim, channels)
    plan, seed_shape = conv_stack_shape(arch, channels, channel_multiplier)
    seed_ch, seed_h, seed_w = seed_shape
    volume = seed_ch * seed_h * seed_w
    fc = DenseLayer(_he_uniform(rng, (latent_dim, volume), latent_dim, "dec.fc.weight"),
                    _zeros(volume, "dec.fc.bias"))
    tconv_layers = []
    for i, (in_ch, out_ch, k, stride, pad) in enumerate(reversed(plan)):
        # reverses out_ch -> in_ch; adjoint kernel layout is (out_ch, in_ch, k, k)
        w = _he_uniform(rng, (out_ch, in_ch, k, k), out_ch * k * k, f"dec.tconv{i}.weight")
        tconv_layers.append(TConvLayer(w, _zeros(in_ch, f"dec.tconv{i}.bias"), stride, pad))
    return DecoderParams(arch, latent_dim, channels, channel_multiplier,
                         seed_shape, fc, tconv_layers)


def _check_batch(p: EncoderParams, batch: Tensor) -> None:
    if batch.data.ndim != 4:
        raise ShapeError(f"encoder input must be (N, C, H, W), got {batch.shape}")
    if batch.shape[1] != p.channels:
        raise ShapeError(f"encoder expects {p.channels} channels, got {batch.shape[1]}")
    if batch.shape[2] != INPUT_SIZE or batch.shape[3] != INPUT_SIZE:
        raise ShapeError(
            f"encoder expects {INPUT_SIZE}x{INPUT_SIZE} inputs, got "
            f"{batch.shape[2]}x{batch.shape[3]}")


def _trunk_forward(p: EncoderParams, batch: Tensor) -> Tensor:
    h = batch
    for layer in p.conv_layers:
        h = tape.leaky_relu(tape.conv2d(h, layer.weight, layer.bias,
                                        layer.stride, layer.padding), HIDDEN_SLOPE)
    h = tape.reshape(h, (h.shape[0], h.size // max(h.shape[0], 1)))
    for layer in p.fc_layers:
        h = tape.leaky_relu(tape.dense(h, layer.weight, layer.bias), HIDDEN_SLOPE)
    return tape.dense(h, p.head.weight, p.head.bias)


def encoder_forward(p: EncoderParams, batch: Tensor) -> LatentStats:
    """Full head readout: logit (N,), mu (N,k), logvar (N,k)."""
    _check_batch(p, batch)
    head = _trunk_forward(p, batch)
    k = p.latent_dim
    n = head.shape[0]
    logit = tape.reshape(tape.slice_cols(head, 0, 1), (n,))
    mu = tape.slice_cols(head, 1, 1 + k)
    logvar = tape.slice_cols(head, 1 + k, 1 + 2 * k)
    return LatentStats(logit=logit, mu=mu, logvar=logvar)


def classifier_forward(p: EncoderParams, batch: Tensor) -> Tensor:
    """Detection logits only; identical trunk and head as encoder_forward."""
    return encoder_forward(p, batch).logit


def decoder_forward(p: DecoderParams, z: Tensor) -> Tensor:
    """Map latent codes (N, k) to images (N, C, 64, 64) in (0, 1)."""
    if z.data.ndim != 2 or z.shape[1] != p.latent_dim:
        raise ShapeError(f"decoder expects (N, {p.latent_dim}) codes, got {z.shape}")
    n = z.shape[0]
    h = tape.leaky_relu(tape.dense(z, p.fc.weight, p.fc.bias), HIDDEN_SLOPE)
    h = tape.reshape(h, (n,) + p.seed_shape)
    for i, layer in enumerate(p.tconv_layers):
        h = tape.transposed_conv2d(h, layer.weight, layer.bias, layer.stride, layer.padding)
        if i < len(p.tconv_layers) - 1:
            h = tape.leaky_relu(h, HIDDEN_SLOPE)
    return tape.sigmoid(h)


def latent_means(p: EncoderParams, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Encoder mu over an image stack, chunked; returns (N, k) plain array."""
    chunks = []
    for start in range(0, len(images), batch_size):
        stats = encoder_forward(p, tape.tensor(images[start:start + batch_size]))
        chunks.append(stats.mu.data)
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, p.latent_dim))


def detection_logits(p: EncoderParams, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Classifier logits over an image stack, chunked; returns (N,) plain array."""
    chunks = []
    for start in range(0, len(images), batch_size):
        chunks.append(classifier_forward(p, tape.tensor(images[start:start + batch_size])).data)
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0,))


# ---------------------------------------------------------------------------
# Checkpoint adapters
# ---------------------------------------------------------------------------

def encoder_state(p: EncoderParams) -> dict[str, np.ndarray]:
    return {name: t.data for name, t in p.named_parameters()}


def decoder_state(p: DecoderParams) -> dict[str, np.ndarray]:
    return {name: t.data for name, t in p.named_parameters()}


def load_encoder(config: dict, state: dict[str, np.ndarray]) -> EncoderParams:
    """Rebuild an encoder from checkpointed config + arrays."""
    p = build_encoder(ArchId(config["arch"]), int(config["latent_dim"]),
                      int(config["channels"]), RngStream(0),
                      int(config["channel_multiplier"]))
    _load_state(p.named_parameters(), state, "encoder")
    return p


def load_decoder(config: dict, state: dict[str, np.ndarray]) -> DecoderParams:
    p = build_decoder(ArchId(config["arch"]), int(config["latent_dim"]),
                      int(config["channels"]), RngStream(0),
                      int(config["channel_multiplier"]))
    _load_state(p.named_parameters(), state, "decoder")
    return p


def _load_state(named: list[tuple[str, Tensor]], state: dict[str, np.ndarray],
                what: str) -> None:
    for name, t in named:
        if name not in state:
            raise KeyError(f"{what} state missing tensor {name!r}")
        arr = state[name]
        if arr.shape != t.data.shape:
            raise ValueError(
                f"{what} tensor {name!r} has shape {arr.shape}, expected {t.data.shape}")
        t.data = np.ascontiguousarray(arr, dtype=np.float64)
