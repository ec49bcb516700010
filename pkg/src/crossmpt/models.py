"""Transformer decoders over (magnitude, syndrome) inputs.

Four variants share one layer stack implementation:

* crossmpt — two masked cross-attention blocks per layer (magnitude queries
  syndrome under the PCM transpose, then syndrome queries the updated
  magnitude under the PCM); both blocks of a layer reuse the same
  projection, norm, and feed-forward parameters. Code-specific positional
  embeddings and a two-stage output head.
* fcrossmpt — same stack, but shared scalar embeddings for all magnitude and
  all syndrome positions and a length-invariant head (syndrome embedding
  resized through the PCM transpose and added to the magnitude embedding);
  no parameter shape depends on the code.
* ecct — masked self-attention over the concatenated sequence with depth-2
  connectivity masking.
* ecct_fully_masked — ecct with all magnitude-magnitude and
  syndrome-syndrome attention removed except the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .channel import ChannelSample, BatchSample, hard_decision, stream_rng
from .codes import Code
from .gf2 import BinaryMatrix
from .masks import (
    MaskMatrix,
    build_crossmpt_masks,
    build_ecct_mask,
    build_fully_masked_ecct_mask,
)

__all__ = [
    "Variant",
    "ModelConfig",
    "ActivationState",
    "param_shapes",
    "init_params",
    "param_count",
    "embed",
    "crossmpt_layer",
    "forward",
    "ecct_forward",
    "decide",
    "DecoderModel",
    "freeze",
]


class Variant(Enum):
    CROSSMPT = "crossmpt"
    FCROSSMPT = "fcrossmpt"
    ECCT = "ecct"
    ECCT_FULLY_MASKED = "ecct_fully_masked"


FOUNDATION_VARIANTS = (Variant.FCROSSMPT,)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; the variant decides which embedding and
    output parameterization is legal."""

    variant: Variant = Variant.CROSSMPT
    n_layers: int = 6
    embed_dim: int = 128
    heads: int = 1
    ffn_expansion: int = 4
    norm_order: str = "pre"  # "pre" or "post"

    def __post_init__(self):
        if self.n_layers < 1 or self.embed_dim < 1:
            raise ValueError("n_layers and embed_dim must be >= 1")
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if self.norm_order not in ("pre", "post"):
            raise ValueError(f"unknown norm_order {self.norm_order!r}")

    @property
    def code_agnostic(self) -> bool:
        return self.variant in FOUNDATION_VARIANTS


@dataclass
class ActivationState:
    """Embedding streams after a forward pass plus captured attention maps.

    For self-attention variants the concatenated stream is stored in
    `magnitude` and `syndrome` is None. attention[layer] maps block name to a
    (heads, rows, cols) array (an extra leading batch axis in batched runs).
    """

    magnitude: np.ndarray
    syndrome: np.ndarray | None
    attention: list[dict[str, np.ndarray]] = field(default_factory=list)


def _layer_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d = cfg.embed_dim
    e = cfg.ffn_expansion
    shapes: dict[str, tuple[int, ...]] = {}
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        shapes[p + "w_q"] = (d, d)
        shapes[p + "w_k"] = (d, d)
        shapes[p + "w_v"] = (d, d)
        shapes[p + "attn_norm.gain"] = (d,)
        shapes[p + "attn_norm.bias"] = (d,)
        shapes[p + "ffn_norm.gain"] = (d,)
        shapes[p + "ffn_norm.bias"] = (d,)
        shapes[p + "ffn.w1"] = (d, e * d)
        shapes[p + "ffn.b1"] = (e * d,)
        shapes[p + "ffn.w2"] = (e * d, d)
        shapes[p + "ffn.b2"] = (d,)
    return shapes


def param_shapes(cfg: ModelConfig, code: Code | None) -> dict[str, tuple[int, ...]]:
    """Exact shape of every trainable array for this variant."""
    d = cfg.embed_dim
    shapes = _layer_shapes(cfg)
    shapes["head.norm.gain"] = (d,)
    shapes["head.norm.bias"] = (d,)
    if cfg.code_agnostic:
        shapes["embed.mag"] = (1, d)
        shapes["embed.syn"] = (1, d)
        shapes["head.fc.w"] = (d, 1)
        shapes["head.fc.b"] = (1,)
    else:
        if code is None:
            raise ValueError(f"variant {cfg.variant.value} needs a code to fix its shapes")
        n, k = code.n, code.k
        shapes["embed.pos"] = (2 * n - k, d)
        shapes["head.fc1.w"] = (d, 1)
        shapes["head.fc1.b"] = (1,)
        shapes["head.fc2.w"] = (2 * n - k, n)
        shapes["head.fc2.b"] = (n,)
    return shapes


def param_count(cfg: ModelConfig, code: Code | None) -> int:
    """Number of trainable scalars."""
    total = 0
    for shape in param_shapes(cfg, code).values():
        size = 1
        for s in shape:
            size *= s
        total += size
    return total


def init_params(
    cfg: ModelConfig,
    code: Code | None,
    seed: int = 0,
    dtype=np.float64,
) -> dict[str, Tensor]:
    """Seeded initialization: weights and embeddings ~ N(0, 1/d), norm gains 1,
    all biases 0. Draw order is fixed (sorted names) for replayability."""
    rng = stream_rng(seed, 0xC0DE)
    std = 1.0 / np.sqrt(cfg.embed_dim)
    params: dict[str, Tensor] = {}
    for name, shape in sorted(param_shapes(cfg, code).items()):
        if name.endswith("norm.gain"):
            data = np.ones(shape)
        elif name.endswith((".b", ".b1", ".b2", "norm.bias")):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, std, size=shape)
        params[name] = ad.parameter(data, dtype=dtype)
    return params


def freeze(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """Inference-only view: constants build no computation record."""
    return {k: ad.constant(p.data) for k, p in params.items()}


def masks_for(cfg: ModelConfig, pcm: BinaryMatrix):
    if cfg.variant in (Variant.CROSSMPT, Variant.FCROSSMPT):
        return build_crossmpt_masks(pcm)
    if cfg.variant is Variant.ECCT:
        return (build_ecct_mask(pcm),)
    return (build_fully_masked_ecct_mask(pcm),)


def _attention(
    q_in: Tensor,
    kv_in: Tensor,
    lp: dict[str, Tensor],
    mask: MaskMatrix,
    cfg: ModelConfig,
    capture: list | None,
) -> Tensor:
    q = ad.matmul(q_in, lp["w_q"])
    k = ad.matmul(kv_in, lp["w_k"])
    v = ad.matmul(kv_in, lp["w_v"])
    dh = cfg.embed_dim // cfg.heads
    outs = []
    maps = []
    for h in range(cfg.heads):
        qh = ad.narrow(q, h * dh, (h + 1) * dh, axis=-1)
        kh = ad.narrow(k, h * dh, (h + 1) * dh, axis=-1)
        vh = ad.narrow(v, h * dh, (h + 1) * dh, axis=-1)
        logits = ad.scale(ad.matmul(qh, ad.transpose(kh)), 1.0 / np.sqrt(dh))
        weights = ad.masked_softmax(logits, mask)
        if capture is not None:
            maps.append(weights.data)
        outs.append(ad.matmul(weights, vh))
    if capture is not None:
        capture.append(np.stack(maps, axis=-3))
    return outs[0] if cfg.heads == 1 else ad.concat(outs, axis=-1)


def _block(
    x_q: Tensor,
    x_kv: Tensor,
    lp: dict[str, Tensor],
    mask: MaskMatrix,
    cfg: ModelConfig,
    capture: list | None,
) -> Tensor:
    """One attention + feed-forward block with residuals; cross-attention when
    x_kv is not x_q, self-attention otherwise."""
    if cfg.norm_order == "pre":
        q_in = ad.layer_norm(x_q, lp["attn_norm.gain"], lp["attn_norm.bias"])
        kv_in = q_in if x_kv is x_q else ad.layer_norm(x_kv, lp["attn_norm.gain"], lp["attn_norm.bias"])
        x = ad.add(x_q, _attention(q_in, kv_in, lp, mask, cfg, capture))
        h = ad.ffn(
            ad.layer_norm(x, lp["ffn_norm.gain"], lp["ffn_norm.bias"]),
            lp["ffn.w1"], lp["ffn.b1"], lp["ffn.w2"], lp["ffn.b2"],
        )
        return ad.add(x, h)
    attn = _attention(x_q, x_kv, lp, mask, cfg, capture)
    x = ad.layer_norm(ad.add(x_q, attn), lp["attn_norm.gain"], lp["attn_norm.bias"])
    h = ad.ffn(x, lp["ffn.w1"], lp["ffn.b1"], lp["ffn.w2"], lp["ffn.b2"])
    return ad.layer_norm(ad.add(x, h), lp["ffn_norm.gain"], lp["ffn_norm.bias"])


def _layer_params(params: dict[str, Tensor], i: int) -> dict[str, Tensor]:
    prefix = f"layer{i}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def _embed_tensors(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    n: int,
    mag: np.ndarray,
    syn: np.ndarray,
) -> tuple[Tensor, Tensor]:
    if cfg.code_agnostic:
        w_mag, w_syn = params["embed.mag"], params["embed.syn"]
    else:
        w_mag = ad.narrow(params["embed.pos"], 0, n, axis=0)
        w_syn = ad.narrow(params["embed.pos"], n, params["embed.pos"].shape[0], axis=0)
    dtype = w_mag.dtype
    mag_col = ad.constant(np.asarray(mag, dtype=dtype)[..., None])
    syn_col = ad.constant(np.asarray(syn, dtype=dtype)[..., None])
    return ad.mul(mag_col, w_mag), ad.mul(syn_col, w_syn)


def embed(sample: ChannelSample, params: dict[str, Tensor], cfg: ModelConfig) -> ActivationState:
    """Initial magnitude/syndrome embeddings for one sample."""
    n = sample.mag.shape[-1]
    m_t, s_t = _embed_tensors(params, cfg, n, sample.mag, sample.syndromes[0])
    return ActivationState(magnitude=m_t.data, syndrome=s_t.data)


def crossmpt_layer(
    m_t: Tensor,
    s_t: Tensor,
    lp: dict[str, Tensor],
    masks: tuple[MaskMatrix, MaskMatrix],
    cfg: ModelConfig,
    capture: list | None = None,
) -> tuple[Tensor, Tensor]:
    """One decoding layer: update magnitude from syndrome, then syndrome from
    the updated magnitude. Both blocks share lp."""
    mask_ht, mask_h = masks
    cap1 = [] if capture is not None else None
    cap2 = [] if capture is not None else None
    m_new = _block(m_t, s_t, lp, mask_ht, cfg, cap1)
    s_new = _block(s_t, m_new, lp, mask_h, cfg, cap2)
    if capture is not None:
        capture.append({"mag_to_syn": cap1[0], "syn_to_mag": cap2[0]})
    return m_new, s_new


def _head_code_specific(params: dict[str, Tensor], x: Tensor) -> Tensor:
    """(…, 2n-k, d) -> (…, n) through norm, shared d->1 FC, then dense FC."""
    x = ad.layer_norm(x, params["head.norm.gain"], params["head.norm.bias"])
    per_pos = ad.add(ad.matmul(x, params["head.fc1.w"]), params["head.fc1.b"])
    row = ad.transpose(per_pos)  # (…, 1, 2n-k)
    out = ad.add(ad.matmul(row, params["head.fc2.w"]), params["head.fc2.b"])
    return _drop_penultimate(out)


def _drop_penultimate(t: Tensor) -> Tensor:
    """(…, 1, n) -> (…, n)."""
    return ad.reshape(t, t.shape[:-2] + (t.shape[-1],))


def _foundation_tower(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    masks: tuple[MaskMatrix, MaskMatrix],
    m_t: Tensor,
    s_t: Tensor,
    capture: list | None,
) -> Tensor:
    """Run the layer stack, then produce this tower's n x d head contribution:
    norm both streams, resize the syndrome through the PCM transpose, add."""
    for i in range(cfg.n_layers):
        m_t, s_t = crossmpt_layer(m_t, s_t, _layer_params(params, i), masks, cfg, capture)
    m_n = ad.layer_norm(m_t, params["head.norm.gain"], params["head.norm.bias"])
    s_n = ad.layer_norm(s_t, params["head.norm.gain"], params["head.norm.bias"])
    ht = ad.constant(masks[1].support.T.astype(m_n.dtype))  # H^T as fixed reals
    return ad.add(m_n, ad.matmul(ht, s_n))


def foundation_logits(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    branch_masks: list[tuple[MaskMatrix, MaskMatrix]],
    mag: np.ndarray,
    syndromes: list[np.ndarray],
    capture: list | None = None,
) -> Tensor:
    """Shared-weight foundation forward over one or more PCM branches, fused
    by addition before the final shared FC.

    Branch contributions are summed in a canonical order (sorted by mask
    support bytes), which makes the result exactly invariant to the order the
    branches were listed in.
    """
    n = mag.shape[-1]
    order = sorted(
        range(len(branch_masks)),
        key=lambda j: branch_masks[j][1].support.tobytes(),
    )
    fused: Tensor | None = None
    for j in order:
        m_t, s_t = _embed_tensors(params, cfg, n, mag, syndromes[j])
        contrib = _foundation_tower(params, cfg, branch_masks[j], m_t, s_t, capture)
        fused = contrib if fused is None else ad.add(fused, contrib)
    out = ad.add(ad.matmul(fused, params["head.fc.w"]), params["head.fc.b"])
    return _drop_penultimate(ad.transpose(out))


def forward_arrays(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    pcm: BinaryMatrix,
    mag: np.ndarray,
    syn: np.ndarray,
    masks=None,
    capture: list | None = None,
) -> Tensor:
    """Logit tensor for magnitude/syndrome arrays of shape (n,)/(n-k,) or
    batched (B, n)/(B, n-k)."""
    masks = masks_for(cfg, pcm) if masks is None else masks
    if cfg.variant is Variant.FCROSSMPT:
        return foundation_logits(params, cfg, [masks], mag, [syn], capture)
    if cfg.variant is Variant.CROSSMPT:
        n = mag.shape[-1]
        m_t, s_t = _embed_tensors(params, cfg, n, mag, syn)
        for i in range(cfg.n_layers):
            m_t, s_t = crossmpt_layer(m_t, s_t, _layer_params(params, i), masks, cfg, capture)
        return _head_code_specific(params, ad.concat([m_t, s_t], axis=-2))
    # self-attention variants
    n = mag.shape[-1]
    m_t, s_t = _embed_tensors(params, cfg, n, mag, syn)
    x = ad.concat([m_t, s_t], axis=-2)
    for i in range(cfg.n_layers):
        cap = [] if capture is not None else None
        x = _block(x, x, _layer_params(params, i), masks[0], cfg, cap)
        if capture is not None:
            capture.append({"self": cap[0]})
    return _head_code_specific(params, x)


def forward(
    sample: ChannelSample,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    code: Code,
    capture: list | None = None,
) -> np.ndarray:
    """Length-n logit vector estimating the binarized multiplicative noise."""
    t = forward_arrays(params, cfg, code.pcm, sample.mag, sample.syndromes[0], capture=capture)
    return t.data


def ecct_forward(
    sample: ChannelSample,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    code: Code,
    capture: list | None = None,
) -> np.ndarray:
    if cfg.variant not in (Variant.ECCT, Variant.ECCT_FULLY_MASKED):
        raise ValueError("ecct_forward requires a self-attention variant")
    return forward(sample, params, cfg, code, capture=capture)


def decide(y: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Final hard decision, bin(sign(y * noise_estimate)).

    The logit is the multiplicative-noise estimate: the training loss drives
    it positive where no sign flip happened (target 0) and negative where one
    did, so the hard decision flips exactly where the logit is negative.
    """
    y = np.asarray(y)
    logits = np.asarray(logits)
    if y.shape != logits.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {logits.shape}")
    return (hard_decision(y) ^ (logits < 0)).astype(np.uint8)


class DecoderModel:
    """A config + code + parameter set bundled with its masks.

    infer_only freezes the parameters into constants so forward passes build
    no computation record (fast path for Monte-Carlo evaluation).
    """

    def __init__(
        self,
        cfg: ModelConfig,
        code: Code,
        params: dict[str, Tensor] | None = None,
        seed: int = 0,
        dtype=np.float64,
        infer_only: bool = False,
    ):
        self.cfg = cfg
        self.code = code
        self.params = params if params is not None else init_params(cfg, code, seed, dtype)
        if infer_only:
            self.params = freeze(self.params)
        self.masks = masks_for(cfg, code.pcm)

    def logits_batch(self, mag: np.ndarray, syn: np.ndarray, capture: list | None = None) -> Tensor:
        return forward_arrays(
            self.params, self.cfg, self.code.pcm, mag, syn, masks=self.masks, capture=capture
        )

    def decode(self, sample: ChannelSample) -> np.ndarray:
        logits = self.logits_batch(sample.mag[None, :], sample.syndromes[0][None, :])
        return decide(sample.y, logits.data[0])

    def decode_batch(self, batch: BatchSample) -> np.ndarray:
        logits = self.logits_batch(batch.mag, batch.syndromes[0])
        return decide(batch.y, logits.data)

    def param_count(self) -> int:
        return param_count(self.cfg, self.code)
