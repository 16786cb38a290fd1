"""Small feature-modulated U-Net predicting the added noise from concatenated latents.

Topology: 3x3 stem over the 8 input channels, two stride-2 down levels of
residual blocks, a bottleneck residual block, a mirrored up path with skip
concatenation, and a linear head back to 4 channels. Every residual block is
modulated by a scale-and-shift vector derived from the timestep embedding
concatenated with the prompt features. The backward pass is hand-derived and
mirrors the forward exactly, so gradients are exact up to float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (conv2d, conv2d_backward, group_norm, group_norm_backward,
                     linear, linear_backward, silu, silu_backward,
                     upsample2x, upsample2x_backward)


@dataclass(frozen=True)
class ArchConfig:
    in_channels: int = 8
    out_channels: int = 4
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2)
    groups: int = 8
    emb_dim: int = 64
    time_dim: int = 32
    cond_width: int = 16
    # optional fidelity knob: one cross-attention block at the bottleneck over
    # the two prompt tokens (RSI half, MACD half)
    bottleneck_attention: bool = False
    attn_dim: int = 0  # 0 -> base_channels

    def __post_init__(self):
        if self.base_channels % self.groups:
            raise ValueError(
                f"groups ({self.groups}) must divide base_channels ({self.base_channels})"
            )
        if self.time_dim % 2 or self.cond_width % 4:
            raise ValueError("time_dim must be even and cond_width a multiple of 4")
        if not self.channel_mults:
            raise ValueError("need at least one channel multiplier")

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.channel_mults)

    @property
    def levels(self) -> int:
        return len(self.channel_mults)

    @property
    def attention_dim(self) -> int:
        return self.attn_dim or self.base_channels

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels, "out_channels": self.out_channels,
            "base_channels": self.base_channels, "channel_mults": list(self.channel_mults),
            "groups": self.groups, "emb_dim": self.emb_dim,
            "time_dim": self.time_dim, "cond_width": self.cond_width,
            "bottleneck_attention": self.bottleneck_attention, "attn_dim": self.attn_dim,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        return ArchConfig(**d)


def time_features(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps; (B,) -> (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class UNet:
    def __init__(self, cfg: ArchConfig):
        self.cfg = cfg
        widths = cfg.widths
        base = cfg.base_channels
        # (cin, cout) of the residual block at each down level
        self.down_io = [(base if l == 0 else widths[l - 1], widths[l])
                        for l in range(cfg.levels)]
        # channels entering each up level (before concat) and leaving it
        self.up_out = [widths[l - 1] if l > 0 else base for l in range(cfg.levels)]
        self.up_in = [widths[l] if l == cfg.levels - 1 else self.up_out[l + 1]
                      for l in range(cfg.levels)]

    # ---- parameters ----------------------------------------------------

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.cfg
        shapes: dict[str, tuple[int, ...]] = {"cond_null": (cfg.cond_width,)}
        shapes["emb.fc1.w"] = (cfg.emb_dim, cfg.time_dim + cfg.cond_width)
        shapes["emb.fc1.b"] = (cfg.emb_dim,)
        shapes["emb.fc2.w"] = (cfg.emb_dim, cfg.emb_dim)
        shapes["emb.fc2.b"] = (cfg.emb_dim,)
        shapes["stem.w"] = (cfg.base_channels, cfg.in_channels, 3, 3)
        shapes["stem.b"] = (cfg.base_channels,)

        def res(prefix, cin, cout):
            shapes[f"{prefix}.gn1.g"] = (cin,)
            shapes[f"{prefix}.gn1.b"] = (cin,)
            shapes[f"{prefix}.conv1.w"] = (cout, cin, 3, 3)
            shapes[f"{prefix}.conv1.b"] = (cout,)
            shapes[f"{prefix}.film.w"] = (2 * cout, cfg.emb_dim)
            shapes[f"{prefix}.film.b"] = (2 * cout,)
            shapes[f"{prefix}.gn2.g"] = (cout,)
            shapes[f"{prefix}.gn2.b"] = (cout,)
            shapes[f"{prefix}.conv2.w"] = (cout, cout, 3, 3)
            shapes[f"{prefix}.conv2.b"] = (cout,)
            if cin != cout:
                shapes[f"{prefix}.skip.w"] = (cout, cin, 1, 1)
                shapes[f"{prefix}.skip.b"] = (cout,)

        widths = cfg.widths
        for l, (cin, cout) in enumerate(self.down_io):
            res(f"down{l}.res", cin, cout)
            shapes[f"down{l}.pool.w"] = (cout, cout, 3, 3)
            shapes[f"down{l}.pool.b"] = (cout,)
        res("mid.res", widths[-1], widths[-1])
        if cfg.bottleneck_attention:
            d = cfg.attention_dim
            shapes["attn.q.w"] = (d, widths[-1], 1, 1)
            shapes["attn.q.b"] = (d,)
            shapes["attn.k.w"] = (d, cfg.cond_width // 2)
            shapes["attn.k.b"] = (d,)
            shapes["attn.v.w"] = (d, cfg.cond_width // 2)
            shapes["attn.v.b"] = (d,)
            shapes["attn.out.w"] = (widths[-1], d, 1, 1)
            shapes["attn.out.b"] = (widths[-1],)
        for l in range(cfg.levels):
            shapes[f"up{l}.conv.w"] = (self.up_in[l], self.up_in[l], 3, 3)
            shapes[f"up{l}.conv.b"] = (self.up_in[l],)
            res(f"up{l}.res", self.up_in[l] + widths[l], self.up_out[l])
        shapes["head.gn.g"] = (cfg.base_channels,)
        shapes["head.gn.b"] = (cfg.base_channels,)
        shapes["head.conv.w"] = (cfg.out_channels, cfg.base_channels, 3, 3)
        shapes["head.conv.b"] = (cfg.out_channels,)
        return shapes

    def init_params(self, seed: int, dtype=np.float32, zero_init: bool = True) -> dict:
        """He-initialized weights; with zero_init the residual out-convs, the
        modulation projections, and the head start at zero so the initial
        network output is exactly zero."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in self.param_shapes().items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape, dtype=dtype)
            elif name.endswith("gn.g") or ".gn1.g" in name or ".gn2.g" in name:
                params[name] = np.ones(shape, dtype=dtype)
            elif name == "cond_null":
                params[name] = (0.1 * rng.standard_normal(shape)).astype(dtype)
            elif name.endswith(".w") and len(shape) == 4:
                fan_in = shape[1] * shape[2] * shape[3]
                scale = np.sqrt(2.0 / fan_in)
                params[name] = (scale * rng.standard_normal(shape)).astype(dtype)
            elif name.endswith(".w"):
                fan_in = shape[1]
                scale = np.sqrt(1.0 / fan_in)
                params[name] = (scale * rng.standard_normal(shape)).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype=dtype)
        if zero_init:
            for name in list(params):
                if ".conv2." in name or ".film." in name or name.startswith("head.conv.") \
                        or name.startswith("attn.out."):
                    params[name] = np.zeros_like(params[name])
        else:
            # gradient-check mode: perturb the norm affine params too so every
            # parameter receives a generic gradient
            for name in list(params):
                if ".gn" in name or "head.gn" in name:
                    params[name] = params[name] + \
                        (0.1 * rng.standard_normal(params[name].shape)).astype(dtype)
        return params

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    # ---- bottleneck cross-attention --------------------------------------

    def _attn_fwd(self, p, h, cvec):
        """Cross-attend the bottleneck features over the two prompt tokens."""
        b, _, hh, ww = h.shape
        d = self.cfg.attention_dim
        q, cq = conv2d(h, p["attn.q.w"], p["attn.q.b"], 1, 0)
        tokens = cvec.reshape(b, 2, -1)
        k = tokens @ p["attn.k.w"].T + p["attn.k.b"]
        v = tokens @ p["attn.v.w"].T + p["attn.v.b"]
        qf = q.reshape(b, d, hh * ww).transpose(0, 2, 1)
        scale = 1.0 / np.sqrt(d)
        logits = (qf @ k.transpose(0, 2, 1)) * scale
        shifted = logits - logits.max(axis=-1, keepdims=True)
        expv = np.exp(shifted)
        attn = expv / expv.sum(axis=-1, keepdims=True)
        o = attn @ v
        of = np.ascontiguousarray(o.transpose(0, 2, 1)).reshape(b, d, hh, ww)
        oc, cout = conv2d(of, p["attn.out.w"], p["attn.out.b"], 1, 0)
        cache = (cq, cout, tokens, k, v, qf, attn, scale, (b, d, hh, ww))
        return h + oc, cache

    def _attn_bwd(self, p, cache, dout, grads):
        cq, cout, tokens, k, v, qf, attn, scale, (b, d, hh, ww) = cache
        dof, dw, db = conv2d_backward(dout, cout)
        grads["attn.out.w"] = dw
        grads["attn.out.b"] = db
        do = dof.reshape(b, d, hh * ww).transpose(0, 2, 1)
        dattn = do @ v.transpose(0, 2, 1)
        dv = attn.transpose(0, 2, 1) @ do
        dlogits = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dqf = (dlogits @ k) * scale
        dk = (dlogits.transpose(0, 2, 1) @ qf) * scale
        dq = np.ascontiguousarray(dqf.transpose(0, 2, 1)).reshape(b, d, hh, ww)
        dh_q, dw, db = conv2d_backward(dq, cq)
        grads["attn.q.w"] = dw
        grads["attn.q.b"] = db
        grads["attn.k.w"] = np.einsum("btd,btc->dc", dk, tokens)
        grads["attn.k.b"] = dk.sum(axis=(0, 1))
        grads["attn.v.w"] = np.einsum("btd,btc->dc", dv, tokens)
        grads["attn.v.b"] = dv.sum(axis=(0, 1))
        dtok = dk @ p["attn.k.w"] + dv @ p["attn.v.w"]
        return dout + dh_q, dtok.reshape(b, -1)

    # ---- residual block ------------------------------------------------

    def _res_fwd(self, p, prefix, x, es, cin, cout, tape):
        g1, cg1 = group_norm(x, p[f"{prefix}.gn1.g"], p[f"{prefix}.gn1.b"], self.cfg.groups)
        a1, cs1 = silu(g1)
        h, cc1 = conv2d(a1, p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"], 1, 1)
        f, cf = linear(es, p[f"{prefix}.film.w"], p[f"{prefix}.film.b"])
        scale, shift = f[:, :cout], f[:, cout:]
        g2, cg2 = group_norm(h, p[f"{prefix}.gn2.g"], p[f"{prefix}.gn2.b"], self.cfg.groups)
        mult = 1.0 + scale[:, :, None, None]
        m = g2 * mult + shift[:, :, None, None]
        a2, cs2 = silu(m)
        o, cc2 = conv2d(a2, p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"], 1, 1)
        if cin != cout:
            sk, csk = conv2d(x, p[f"{prefix}.skip.w"], p[f"{prefix}.skip.b"], 1, 0)
        else:
            sk, csk = x, None
        if tape is not None:
            tape[prefix] = (cg1, cs1, cc1, cf, cg2, g2, mult, cs2, cc2, csk, cout)
        return o + sk

    def _res_bwd(self, prefix, tape, dout, grads):
        cg1, cs1, cc1, cf, cg2, g2, mult, cs2, cc2, csk, cout = tape[prefix]
        if csk is not None:
            dx_skip, dw, db = conv2d_backward(dout, csk)
            grads[f"{prefix}.skip.w"] = dw
            grads[f"{prefix}.skip.b"] = db
        else:
            dx_skip = dout
        da2, dw, db = conv2d_backward(dout, cc2)
        grads[f"{prefix}.conv2.w"] = dw
        grads[f"{prefix}.conv2.b"] = db
        dm = silu_backward(da2, cs2)
        dg2 = dm * mult
        dscale = (dm * g2).sum(axis=(2, 3))
        dshift = dm.sum(axis=(2, 3))
        df = np.concatenate([dscale, dshift], axis=1)
        des, dw, db = linear_backward(df, cf)
        grads[f"{prefix}.film.w"] = dw
        grads[f"{prefix}.film.b"] = db
        dh, dg, db = group_norm_backward(dg2, cg2)
        grads[f"{prefix}.gn2.g"] = dg
        grads[f"{prefix}.gn2.b"] = db
        da1, dw, db = conv2d_backward(dh, cc1)
        grads[f"{prefix}.conv1.w"] = dw
        grads[f"{prefix}.conv1.b"] = db
        dg1 = silu_backward(da1, cs1)
        dx, dg, db = group_norm_backward(dg1, cg1)
        grads[f"{prefix}.gn1.g"] = dg
        grads[f"{prefix}.gn1.b"] = db
        return dx + dx_skip, des

    # ---- full network ---------------------------------------------------

    def forward(self, params, x, t, cond=None, null_text_mask=None, want_tape=False):
        """Predict eps from (B, in_channels, H, W); returns (out, tape|None).

        `cond` is a (B, cond_width) feature array; rows flagged in
        `null_text_mask` read the learned null embedding instead.
        """
        cfg = self.cfg
        dtype = params["stem.w"].dtype
        x = np.asarray(x, dtype=dtype)
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected (B, {cfg.in_channels}, H, W) input, got {x.shape}")
        if x.shape[2] % (2 ** cfg.levels) or x.shape[3] % (2 ** cfg.levels):
            raise ValueError(
                f"spatial dims {x.shape[2:]} must be divisible by {2 ** cfg.levels}"
            )
        b = x.shape[0]
        if null_text_mask is None:
            null_text_mask = np.zeros(b, dtype=bool)
        null_text_mask = np.asarray(null_text_mask, dtype=bool)
        cvec = np.zeros((b, cfg.cond_width), dtype=dtype)
        if cond is not None:
            cvec[:] = np.asarray(cond, dtype=dtype)
        cvec[null_text_mask] = params["cond_null"]

        tape = {} if want_tape else None
        temb = time_features(t, cfg.time_dim).astype(dtype)
        if temb.shape[0] == 1 and b > 1:
            temb = np.repeat(temb, b, axis=0)
        v = np.concatenate([temb, cvec], axis=1)
        e1, c_fc1 = linear(v, params["emb.fc1.w"], params["emb.fc1.b"])
        a1, c_s1 = silu(e1)
        emb, c_fc2 = linear(a1, params["emb.fc2.w"], params["emb.fc2.b"])
        es, c_es = silu(emb)

        h, c_stem = conv2d(x, params["stem.w"], params["stem.b"], 1, 1)
        skips = []
        pool_caches = []
        for l, (cin, cout) in enumerate(self.down_io):
            h = self._res_fwd(params, f"down{l}.res", h, es, cin, cout, tape)
            skips.append(h)
            h, c_pool = conv2d(h, params[f"down{l}.pool.w"], params[f"down{l}.pool.b"],
                               stride=2, pad=1)
            pool_caches.append(c_pool)

        widths = cfg.widths
        h = self._res_fwd(params, "mid.res", h, es, widths[-1], widths[-1], tape)
        if cfg.bottleneck_attention:
            h, attn_cache = self._attn_fwd(params, h, cvec)
            if want_tape:
                tape["attn"] = attn_cache

        up_caches = []
        for l in reversed(range(cfg.levels)):
            h = upsample2x(h)
            h, c_up = conv2d(h, params[f"up{l}.conv.w"], params[f"up{l}.conv.b"], 1, 1)
            skip = skips.pop()
            h = np.concatenate([h, skip], axis=1)
            h = self._res_fwd(params, f"up{l}.res", h, es,
                              self.up_in[l] + widths[l], self.up_out[l], tape)
            up_caches.append((l, c_up, self.up_in[l]))

        hg, c_hgn = group_norm(h, params["head.gn.g"], params["head.gn.b"], cfg.groups)
        ha, c_hs = silu(hg)
        out, c_hconv = conv2d(ha, params["head.conv.w"], params["head.conv.b"], 1, 1)

        if want_tape:
            tape["emb"] = (c_fc1, c_s1, c_fc2, c_es, null_text_mask, cfg.time_dim)
            tape["stem"] = c_stem
            tape["pools"] = pool_caches
            tape["ups"] = up_caches
            tape["head"] = (c_hgn, c_hs, c_hconv)
        return out, tape

    def backward(self, params, tape, dout):
        """Gradients of a scalar loss w.r.t. every parameter, given dL/d(out)."""
        cfg = self.cfg
        grads: dict[str, np.ndarray] = {}
        c_hgn, c_hs, c_hconv = tape["head"]
        dha, dw, db = conv2d_backward(dout, c_hconv)
        grads["head.conv.w"] = dw
        grads["head.conv.b"] = db
        dhg = silu_backward(dha, c_hs)
        dh, dg, db = group_norm_backward(dhg, c_hgn)
        grads["head.gn.g"] = dg
        grads["head.gn.b"] = db

        des_total = None

        def add_es(des):
            nonlocal des_total
            des_total = des if des_total is None else des_total + des

        dskips = {}
        for l, c_up, split in reversed(tape["ups"]):  # chronological reverse
            dcat, des = self._res_bwd(f"up{l}.res", tape, dh, grads)
            add_es(des)
            dup_out, dskip = dcat[:, :split], dcat[:, split:]
            dskips[l] = dskip
            dup_in, dw, db = conv2d_backward(dup_out, c_up)
            grads[f"up{l}.conv.w"] = dw
            grads[f"up{l}.conv.b"] = db
            dh = upsample2x_backward(dup_in)

        dcvec_attn = None
        if cfg.bottleneck_attention:
            dh, dcvec_attn = self._attn_bwd(params, tape["attn"], dh, grads)

        dh, des = self._res_bwd("mid.res", tape, dh, grads)
        add_es(des)

        for l in reversed(range(cfg.levels)):
            dres_out, dw, db = conv2d_backward(dh, tape["pools"][l])
            grads[f"down{l}.pool.w"] = dw
            grads[f"down{l}.pool.b"] = db
            dres_out = dres_out + dskips[l]
            dh, des = self._res_bwd(f"down{l}.res", tape, dres_out, grads)
            add_es(des)

        dx, dw, db = conv2d_backward(dh, tape["stem"])
        grads["stem.w"] = dw
        grads["stem.b"] = db

        c_fc1, c_s1, c_fc2, c_es, null_text_mask, time_dim = tape["emb"]
        demb = silu_backward(des_total, c_es)
        da1, dw, db = linear_backward(demb, c_fc2)
        grads["emb.fc2.w"] = dw
        grads["emb.fc2.b"] = db
        de1 = silu_backward(da1, c_s1)
        dv, dw, db = linear_backward(de1, c_fc1)
        grads["emb.fc1.w"] = dw
        grads["emb.fc1.b"] = db
        dcvec = dv[:, time_dim:]
        if dcvec_attn is not None:
            dcvec = dcvec + dcvec_attn
        grads["cond_null"] = dcvec[null_text_mask].sum(axis=0) \
            if null_text_mask.any() else np.zeros_like(params["cond_null"])
        return grads, dx
