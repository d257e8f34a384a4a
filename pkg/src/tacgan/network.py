"""Generator and discriminator computation graphs.

The generator projects the caption embedding to a compact latent, joins it
with noise, maps the pair onto an 8x8 feature grid through a fully connected
layer, and upsamples with stride-2 transposed convolutions until it reaches
the configured resolution (tanh output in (-1, 1)). The discriminator
downsamples the image with stride-2 convolutions, fuses in its own text
latent by spatial replication and channel concatenation, mixes with a 1x1
convolution and ends in two sigmoid heads: one source probability and one
independent per-class probability vector (plus an optional auxiliary head).

Forward passes come in an eval flavor (running batch-norm statistics,
per-image deterministic) used for sampling, and a train flavor that returns
the cache consumed by the matching hand-derived backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .config import GEN_START_SPATIAL, ModelConfig
from .errors import ShapeError
from .text import TextEmbedding

KERNEL = 5


@dataclass
class NetworkParams:
    """Learnable weights partitioned by owner, plus batch-norm statistics.

    ``g`` holds the generator stack together with its text projection and
    input projection; ``d`` holds the discriminator stack, its own text
    projection, the fusion convolution and the output heads. The partitions
    never share arrays, which is what lets the two optimizers update them
    independently.
    """

    g: dict[str, np.ndarray]
    d: dict[str, np.ndarray]
    g_stats: dict[str, np.ndarray]
    d_stats: dict[str, np.ndarray]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            g={k: v.copy() for k, v in self.g.items()},
            d={k: v.copy() for k, v in self.d.items()},
            g_stats={k: v.copy() for k, v in self.g_stats.items()},
            d_stats={k: v.copy() for k, v in self.d_stats.items()},
        )

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(v))
            for part in (self.g, self.d, self.g_stats, self.d_stats)
            for v in part.values()
        )


@dataclass(frozen=True)
class DiscriminatorOutput:
    """Sigmoid head outputs: all entries lie in [0, 1]; the class vector is
    per-class independent and deliberately not normalized to sum to 1."""

    source_prob: np.ndarray  # (B,)
    class_probs: np.ndarray  # (B, n_classes)
    aux_probs: np.ndarray | None = None  # (B, aux_dim) when the head exists


WEIGHT_STD = 0.02


def init_params(
    cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32
) -> NetworkParams:
    """Initialize all weights (zero-mean Gaussian, std 0.02) and zero biases;
    batch-norm scale/shift start at identity, running stats at (0, 1)."""

    def w(*shape):
        return rng.normal(0.0, WEIGHT_STD, size=shape).astype(dtype)

    def zeros(*shape):
        return np.zeros(shape, dtype=dtype)

    def ones(*shape):
        return np.ones(shape, dtype=dtype)

    g: dict[str, np.ndarray] = {}
    g_stats: dict[str, np.ndarray] = {}
    g["text_proj/W"] = w(cfg.text_dim, cfg.text_latent_dim)
    g["text_proj/b"] = zeros(cfg.text_latent_dim)
    fc_out = GEN_START_SPATIAL * GEN_START_SPATIAL * cfg.gen_start_maps
    g["fc/W"] = w(cfg.text_latent_dim + cfg.noise_dim, fc_out)
    g["fc/b"] = zeros(fc_out)
    g["fc_bn/gamma"] = ones(cfg.gen_start_maps)
    g["fc_bn/beta"] = zeros(cfg.gen_start_maps)
    g_stats["fc_bn/mean"] = zeros(cfg.gen_start_maps)
    g_stats["fc_bn/var"] = ones(cfg.gen_start_maps)
    in_maps = cfg.gen_start_maps
    for i, out_maps in enumerate(cfg.gen_layer_maps()):
        g[f"up{i}/W"] = w(KERNEL, KERNEL, out_maps, in_maps)
        g[f"up{i}/b"] = zeros(out_maps)
        if i < cfg.gen_doublings - 1:
            g[f"up{i}_bn/gamma"] = ones(out_maps)
            g[f"up{i}_bn/beta"] = zeros(out_maps)
            g_stats[f"up{i}_bn/mean"] = zeros(out_maps)
            g_stats[f"up{i}_bn/var"] = ones(out_maps)
        in_maps = out_maps

    d: dict[str, np.ndarray] = {}
    d_stats: dict[str, np.ndarray] = {}
    in_maps = 3
    for i, out_maps in enumerate(cfg.disc_layer_maps()):
        d[f"conv{i}/W"] = w(KERNEL, KERNEL, in_maps, out_maps)
        d[f"conv{i}/b"] = zeros(out_maps)
        if i > 0:
            d[f"conv{i}_bn/gamma"] = ones(out_maps)
            d[f"conv{i}_bn/beta"] = zeros(out_maps)
            d_stats[f"conv{i}_bn/mean"] = zeros(out_maps)
            d_stats[f"conv{i}_bn/var"] = ones(out_maps)
        in_maps = out_maps
    d["text_proj/W"] = w(cfg.text_dim, cfg.text_latent_dim)
    d["text_proj/b"] = zeros(cfg.text_latent_dim)
    d["joint/W"] = w(1, 1, cfg.fused_maps + cfg.text_latent_dim, cfg.fused_conv_maps)
    d["joint/b"] = zeros(cfg.fused_conv_maps)
    d["joint_bn/gamma"] = ones(cfg.fused_conv_maps)
    d["joint_bn/beta"] = zeros(cfg.fused_conv_maps)
    d_stats["joint_bn/mean"] = zeros(cfg.fused_conv_maps)
    d_stats["joint_bn/var"] = ones(cfg.fused_conv_maps)
    flat = cfg.fused_spatial * cfg.fused_spatial * cfg.fused_conv_maps
    d["src/W"] = w(flat, 1)
    d["src/b"] = zeros(1)
    d["cls/W"] = w(flat, cfg.n_classes)
    d["cls/b"] = zeros(cfg.n_classes)
    if cfg.aux_dim > 0:
        d["aux/W"] = w(flat, cfg.aux_dim)
        d["aux/b"] = zeros(cfg.aux_dim)

    return NetworkParams(g=g, d=d, g_stats=g_stats, d_stats=d_stats)


def _as_batch(arr, width: int, name: str, dtype) -> tuple[np.ndarray, bool]:
    if isinstance(arr, TextEmbedding):
        arr = arr.vector
    arr = np.asarray(arr, dtype=dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{name}: expected width {width}, got shape {arr.shape}")
    return arr, single


def project_text_g(net: NetworkParams, embedding) -> np.ndarray:
    """Generator-side text projection: leaky-rectified affine map to the
    compact latent."""
    dtype = net.g["text_proj/W"].dtype
    emb, single = _as_batch(embedding, net.g["text_proj/W"].shape[0], "embedding", dtype)
    pre = L.dense_forward(emb, net.g["text_proj/W"], net.g["text_proj/b"])
    out = L.leaky_relu(pre)
    return out[0] if single else out


def build_zc(net: NetworkParams, cfg: ModelConfig, latent, z):
    """Join the text latent with noise and project onto the start grid.

    Returns ``(z_c, grid)``: the concatenated conditioning vector and the
    fully connected projection reshaped to 8 x 8 x (8 * gen_base_maps).
    """
    dtype = net.g["fc/W"].dtype
    lat, single = _as_batch(latent, cfg.text_latent_dim, "latent", dtype)
    zb, zsingle = _as_batch(z, cfg.noise_dim, "noise", dtype)
    if single != zsingle or lat.shape[0] != zb.shape[0]:
        raise ShapeError("latent and noise batches must match")
    if zb.size and (zb.min() < -1.0 or zb.max() > 1.0):
        raise ShapeError("noise entries must lie in [-1, 1]")
    zc = np.concatenate([lat, zb], axis=1)
    flat = L.dense_forward(zc, net.g["fc/W"], net.g["fc/b"])
    grid = flat.reshape(-1, GEN_START_SPATIAL, GEN_START_SPATIAL, cfg.gen_start_maps)
    if single:
        return zc[0], grid[0]
    return zc, grid


def _gen_apply(params, stats, cfg: ModelConfig, emb, z, train: bool):
    dtype = params["fc/W"].dtype
    cache = {"bn": [], "train": train}

    tp_pre = L.dense_forward(emb, params["text_proj/W"], params["text_proj/b"])
    lat = L.leaky_relu(tp_pre)
    zc = np.concatenate([lat, z], axis=1)
    fc_pre = L.dense_forward(zc, params["fc/W"], params["fc/b"])
    grid = fc_pre.reshape(-1, GEN_START_SPATIAL, GEN_START_SPATIAL, cfg.gen_start_maps)
    bn_out, bn_cache = L.batchnorm_forward(
        grid,
        params["fc_bn/gamma"],
        params["fc_bn/beta"],
        stats["fc_bn/mean"],
        stats["fc_bn/var"],
        train,
    )
    h = L.relu(bn_out)
    cache.update(
        emb=emb, z=z, tp_pre=tp_pre, zc=zc, fc_bn=bn_cache, fc_bn_pre=bn_out
    )
    if train:
        cache["bn"].append(("fc_bn", bn_cache))

    layer_caches = []
    for i, out_maps in enumerate(cfg.gen_layer_maps()):
        w, b = params[f"up{i}/W"], params[f"up{i}/b"]
        pre = L.deconv_forward(h, w, b, stride=2)
        entry = {"x": h, "w": w, "pre": pre}
        if i < cfg.gen_doublings - 1:
            bn_out, bn_cache = L.batchnorm_forward(
                pre,
                params[f"up{i}_bn/gamma"],
                params[f"up{i}_bn/beta"],
                stats[f"up{i}_bn/mean"],
                stats[f"up{i}_bn/var"],
                train,
            )
            h = L.relu(bn_out)
            entry["bn"] = bn_cache
            entry["bn_out"] = bn_out
            if train:
                cache["bn"].append((f"up{i}_bn", bn_cache))
        else:
            h = L.tanh(pre)
            entry["out"] = h
        layer_caches.append(entry)
    cache["layers"] = layer_caches

    if h.shape[1] != cfg.resolution:
        raise ShapeError(
            f"generator output: expected {cfg.resolution}, got {h.shape[1]}"
        )
    return h.astype(dtype, copy=False), cache


def _gen_backward(params, cfg: ModelConfig, cache, dimg):
    grads = {}
    h_grad = dimg
    for i in reversed(range(cfg.gen_doublings)):
        entry = cache["layers"][i]
        if "out" in entry:
            dpre = L.tanh_backward(h_grad, entry["out"])
        else:
            dbn_out = L.relu_backward(h_grad, entry["bn_out"])
            dpre, dgamma, dbeta = L.batchnorm_backward(dbn_out, entry["bn"])
            grads[f"up{i}_bn/gamma"] = dgamma
            grads[f"up{i}_bn/beta"] = dbeta
        dx, dw, db = L.deconv_backward(dpre, entry["x"], entry["w"], stride=2)
        grads[f"up{i}/W"] = dw
        grads[f"up{i}/b"] = db
        h_grad = dx

    dbn_out = L.relu_backward(h_grad, cache["fc_bn_pre"])
    dgrid, dgamma, dbeta = L.batchnorm_backward(dbn_out, cache["fc_bn"])
    grads["fc_bn/gamma"] = dgamma
    grads["fc_bn/beta"] = dbeta
    dflat = dgrid.reshape(dgrid.shape[0], -1)
    dzc, dw, db = L.dense_backward(dflat, cache["zc"], params["fc/W"])
    grads["fc/W"] = dw
    grads["fc/b"] = db
    dlat = dzc[:, : cfg.text_latent_dim]
    dtp_pre = L.leaky_relu_backward(dlat, cache["tp_pre"])
    _, dw, db = L.dense_backward(dtp_pre, cache["emb"], params["text_proj/W"])
    grads["text_proj/W"] = dw
    grads["text_proj/b"] = db
    return grads


def _disc_apply(params, stats, cfg: ModelConfig, img, emb, train: bool):
    if img.shape[1:] != (cfg.resolution, cfg.resolution, 3):
        raise ShapeError(
            f"discriminator image input: expected "
            f"(B, {cfg.resolution}, {cfg.resolution}, 3), got {img.shape}"
        )
    cache = {"bn": [], "train": train}
    h = img
    conv_caches = []
    for i in range(cfg.disc_layers):
        w, b = params[f"conv{i}/W"], params[f"conv{i}/b"]
        pre = L.conv2d_forward(h, w, b, stride=2)
        entry = {"x": h, "w": w}
        if i > 0:
            bn_out, bn_cache = L.batchnorm_forward(
                pre,
                params[f"conv{i}_bn/gamma"],
                params[f"conv{i}_bn/beta"],
                stats[f"conv{i}_bn/mean"],
                stats[f"conv{i}_bn/var"],
                train,
            )
            entry["bn"] = bn_cache
            entry["act_in"] = bn_out
            if train:
                cache["bn"].append((f"conv{i}_bn", bn_cache))
        else:
            entry["act_in"] = pre
        h = L.leaky_relu(entry["act_in"])
        conv_caches.append(entry)
    cache["convs"] = conv_caches

    m = cfg.fused_spatial
    if h.shape[1:] != (m, m, cfg.fused_maps):
        raise ShapeError(
            f"discriminator conv stack: expected (B, {m}, {m}, "
            f"{cfg.fused_maps}), got {h.shape}"
        )

    tp_pre = L.dense_forward(emb, params["text_proj/W"], params["text_proj/b"])
    lat = L.leaky_relu(tp_pre)
    tiled = L.replicate_spatial(lat, m)
    fused = np.concatenate([h, tiled], axis=3)
    cache.update(tp_pre=tp_pre, emb=emb, feat=h, fused=fused)

    jpre = L.conv2d_forward(fused, params["joint/W"], params["joint/b"], stride=1)
    jbn, jbn_cache = L.batchnorm_forward(
        jpre,
        params["joint_bn/gamma"],
        params["joint_bn/beta"],
        stats["joint_bn/mean"],
        stats["joint_bn/var"],
        train,
    )
    jact = L.leaky_relu(jbn)
    cache.update(joint_bn=jbn_cache, joint_bn_out=jbn)
    if train:
        cache["bn"].append(("joint_bn", jbn_cache))

    flat = jact.reshape(jact.shape[0], -1)
    src_logit = L.dense_forward(flat, params["src/W"], params["src/b"])
    cls_logit = L.dense_forward(flat, params["cls/W"], params["cls/b"])
    source = L.sigmoid(src_logit)[:, 0]
    classes = L.sigmoid(cls_logit)
    aux = None
    if "aux/W" in params:
        aux_logit = L.dense_forward(flat, params["aux/W"], params["aux/b"])
        aux = L.sigmoid(aux_logit)
    cache.update(flat=flat, source=source, classes=classes, aux=aux)
    out = DiscriminatorOutput(source_prob=source, class_probs=classes, aux_probs=aux)
    return out, cache


def _disc_backward(params, cfg: ModelConfig, cache, dsource, dclass, daux=None):
    grads = {}
    dsrc_logit = L.sigmoid_backward(dsource[:, None], cache["source"][:, None])
    dcls_logit = L.sigmoid_backward(dclass, cache["classes"])
    flat = cache["flat"]
    dflat, dw, db = L.dense_backward(dsrc_logit, flat, params["src/W"])
    grads["src/W"] = dw
    grads["src/b"] = db
    d2, dw, db = L.dense_backward(dcls_logit, flat, params["cls/W"])
    grads["cls/W"] = dw
    grads["cls/b"] = db
    dflat = dflat + d2
    if daux is not None:
        daux_logit = L.sigmoid_backward(daux, cache["aux"])
        d3, dw, db = L.dense_backward(daux_logit, flat, params["aux/W"])
        grads["aux/W"] = dw
        grads["aux/b"] = db
        dflat = dflat + d3

    m = cfg.fused_spatial
    djact = dflat.reshape(-1, m, m, cfg.fused_conv_maps)
    djbn = L.leaky_relu_backward(djact, cache["joint_bn_out"])
    djpre, dgamma, dbeta = L.batchnorm_backward(djbn, cache["joint_bn"])
    grads["joint_bn/gamma"] = dgamma
    grads["joint_bn/beta"] = dbeta
    dfused = L.conv2d_backward_input(djpre, params["joint/W"], cache["fused"].shape, 1)
    dw, db = L.conv2d_backward_params(djpre, cache["fused"], 1, 1)
    grads["joint/W"] = dw
    grads["joint/b"] = db

    dfeat = dfused[..., : cfg.fused_maps]
    dtiled = dfused[..., cfg.fused_maps :]
    dlat = L.replicate_spatial_backward(dtiled)
    dtp_pre = L.leaky_relu_backward(dlat, cache["tp_pre"])
    _, dw, db = L.dense_backward(dtp_pre, cache["emb"], params["text_proj/W"])
    grads["text_proj/W"] = dw
    grads["text_proj/b"] = db

    h_grad = dfeat
    for i in reversed(range(cfg.disc_layers)):
        entry = cache["convs"][i]
        dact_in = L.leaky_relu_backward(h_grad, entry["act_in"])
        if "bn" in entry:
            dpre, dgamma, dbeta = L.batchnorm_backward(dact_in, entry["bn"])
            grads[f"conv{i}_bn/gamma"] = dgamma
            grads[f"conv{i}_bn/beta"] = dbeta
        else:
            dpre = dact_in
        dw, db = L.conv2d_backward_params(dpre, entry["x"], KERNEL, 2)
        grads[f"conv{i}/W"] = dw
        grads[f"conv{i}/b"] = db
        h_grad = L.conv2d_backward_input(dpre, entry["w"], entry["x"].shape, 2)
    return grads, h_grad


def bn_stat_updates(cache) -> dict[str, np.ndarray]:
    """Extract the batch statistics a train-mode forward reported, keyed the
    way the owning stats dict stores them."""
    out = {}
    for name, bn_cache in cache["bn"]:
        _, _, _, _, mean, var, _ = bn_cache
        out[f"{name}/mean"] = mean
        out[f"{name}/var"] = var
    return out


def apply_stat_updates(stats: dict, updates: dict, momentum: float = L.BN_MOMENTUM):
    new_stats = dict(stats)
    for key, batch_value in updates.items():
        new_stats[key] = L.merge_running_stat(stats[key], batch_value, momentum)
    return new_stats


def generator_forward(net: NetworkParams, cfg: ModelConfig, embedding, z) -> np.ndarray:
    """Eval-mode image synthesis; deterministic per (params, embedding, z)."""
    dtype = net.g["fc/W"].dtype
    emb, single = _as_batch(embedding, cfg.text_dim, "embedding", dtype)
    zb, zsingle = _as_batch(z, cfg.noise_dim, "noise", dtype)
    if emb.shape[0] != zb.shape[0] or single != zsingle:
        raise ShapeError("embedding and noise batches must match")
    img, _ = _gen_apply(net.g, net.g_stats, cfg, emb, zb, train=False)
    return img[0] if single else img


def discriminator_forward(
    net: NetworkParams, cfg: ModelConfig, image, embedding
) -> DiscriminatorOutput:
    """Eval-mode discriminator pass over one image or a batch."""
    dtype = net.d["src/W"].dtype
    img = np.asarray(image, dtype=dtype)
    single = img.ndim == 3
    if single:
        img = img[None]
    emb, _ = _as_batch(embedding, cfg.text_dim, "embedding", dtype)
    if emb.shape[0] == 1 and img.shape[0] > 1:
        emb = np.repeat(emb, img.shape[0], axis=0)
    if emb.shape[0] != img.shape[0]:
        raise ShapeError("image and embedding batches must match")
    out, _ = _disc_apply(net.d, net.d_stats, cfg, img, emb, train=False)
    if single:
        return DiscriminatorOutput(
            source_prob=out.source_prob[0],
            class_probs=out.class_probs[0],
            aux_probs=None if out.aux_probs is None else out.aux_probs[0],
        )
    return out
