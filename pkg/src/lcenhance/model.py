"""The luminance-chrominance enhancement network.

Twin mapping stems produce a guidance feature tensor and a "boosted" feature
image for the luminance and chrominance components; twin encoders of guided
token-attention blocks downsample both paths; a cross-attention block fuses
the two bottlenecks; a joint decoder with summed skip connections produces an
intermediate reconstruction, and a guided refinement block turns it into the
final output.  Attention operates over the H*W spatial tokens, which is
quadratic in the pixel count and intended for small training crops.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .color import decompose

__all__ = [
    "ModelConfig",
    "EnhancementModel",
    "ConfigError",
    "CheckpointError",
    "expected_parameter_count",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"TFF1"


class ConfigError(ValueError):
    """Raised for invalid model hyperparameters."""


class CheckpointError(ValueError):
    """Raised for unreadable or mismatched checkpoint files."""


@dataclass
class ModelConfig:
    base_width: int = 40
    stages: int = 3
    heads_per_stage: tuple[int, ...] = (1, 2, 4)
    bottleneck_heads: int = 8
    lcgab_per_stage: int = 1
    refine_width: int = 20

    @property
    def input_multiple(self) -> int:
        return 2 ** self.stages

    @property
    def bottleneck_width(self) -> int:
        return self.base_width * 2 ** self.stages

    def stage_width(self, stage: int) -> int:
        return self.base_width * 2 ** stage

    def validate(self) -> None:
        if self.base_width < 1 or self.stages < 1 or self.lcgab_per_stage < 1:
            raise ConfigError("base_width, stages and lcgab_per_stage must be >= 1")
        if len(self.heads_per_stage) != self.stages:
            raise ConfigError(
                f"heads_per_stage has {len(self.heads_per_stage)} entries "
                f"for {self.stages} stages")
        for s, h in enumerate(self.heads_per_stage):
            if self.stage_width(s) % h != 0:
                raise ConfigError(
                    f"stage {s} width {self.stage_width(s)} not divisible by {h} heads")
        if self.bottleneck_width % self.bottleneck_heads != 0:
            raise ConfigError(
                f"bottleneck width {self.bottleneck_width} not divisible by "
                f"{self.bottleneck_heads} heads")

    def to_text(self) -> str:
        heads = ",".join(str(h) for h in self.heads_per_stage)
        return (f"base_width = {self.base_width}\n"
                f"stages = {self.stages}\n"
                f"heads_per_stage = {heads}\n"
                f"bottleneck_heads = {self.bottleneck_heads}\n"
                f"lcgab_per_stage = {self.lcgab_per_stage}\n"
                f"refine_width = {self.refine_width}\n")

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            return cls(
                base_width=int(fields["base_width"]),
                stages=int(fields["stages"]),
                heads_per_stage=tuple(int(h) for h in fields["heads_per_stage"].split(",")),
                bottleneck_heads=int(fields["bottleneck_heads"]),
                lcgab_per_stage=int(fields["lcgab_per_stage"]),
                refine_width=int(fields["refine_width"]),
            )
        except KeyError as exc:
            raise CheckpointError(f"config block missing field {exc}") from exc


class _Registry:
    """Owns every named parameter and buffer of one model instance."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: dict[str, Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def _add(self, p: Parameter) -> Parameter:
        if p.name in self.params:
            raise ConfigError(f"duplicate parameter name {p.name}")
        self.params[p.name] = p
        return p

    def normal(self, name: str, shape: tuple, fan_in: int) -> Parameter:
        std = math.sqrt(2.0 / fan_in)
        return self._add(Parameter(self.rng.normal(0.0, std, shape), name))

    def zeros(self, name: str, shape: tuple) -> Parameter:
        return self._add(Parameter(np.zeros(shape), name))

    def const(self, name: str, value: float) -> Parameter:
        return self._add(Parameter(np.float64(value), name))

    def buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.buffers or name in self.params:
            raise ConfigError(f"duplicate buffer name {name}")
        self.buffers[name] = value
        return value


class _ConvBnGelu:
    """3x3 convolution, batch normalization, GELU."""

    def __init__(self, reg: _Registry, prefix: str, cin: int, cout: int):
        self.w = reg.normal(f"{prefix}.conv.w", (cout, cin, 3, 3), cin * 9)
        self.b = reg.zeros(f"{prefix}.conv.b", (cout,))
        self.gamma = self._ones(reg, f"{prefix}.bn.scale", cout)
        self.beta = reg.zeros(f"{prefix}.bn.shift", (cout,))
        self.running_mean = reg.buffer(f"{prefix}.bn.running_mean", np.zeros(cout))
        self.running_var = reg.buffer(f"{prefix}.bn.running_var", np.ones(cout))

    @staticmethod
    def _ones(reg: _Registry, name: str, n: int) -> Parameter:
        p = Parameter(np.ones(n), name)
        return reg._add(p)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = ad.conv2d(x, self.w, self.b, stride=1, padding=1)
        y = ad.batch_norm(y, self.gamma, self.beta,
                          self.running_mean, self.running_var, training)
        return ad.gelu(y)


class _MappingStem:
    """Three conv-BN-GELU layers plus a parallel boost tap off layer two."""

    def __init__(self, reg: _Registry, prefix: str, comp_channels: int, width: int):
        self.l1 = _ConvBnGelu(reg, f"{prefix}.layer1", 3 + comp_channels, width)
        self.l2 = _ConvBnGelu(reg, f"{prefix}.layer2", width, width)
        self.l3 = _ConvBnGelu(reg, f"{prefix}.layer3", width, width)
        self.boost_w = reg.normal(f"{prefix}.boost.w", (width, width, 3, 3), width * 9)
        self.boost_b = reg.zeros(f"{prefix}.boost.b", (width,))

    def __call__(self, img: Tensor, component: Tensor, training: bool):
        if img.shape[1:] != component.shape[1:]:
            raise ad.DimensionError(
                f"component {component.shape} does not match image {img.shape}")
        x = ad.concat([img, component], axis=0)
        x = self.l1(x, training)
        mid = self.l2(x, training)
        feat = self.l3(mid, training)
        boosted = ad.conv2d(mid, self.boost_w, self.boost_b, stride=1, padding=1)
        return feat, boosted


class _GuidedAttention:
    """Token attention with learnable per-head temperature, gated by guidance.

    Tokens are the H*W spatial positions.  The attended output is projected,
    multiplied elementwise by the guidance tensor, residual-added to the
    input, then passed through a 1x1-conv feed-forward with a second residual.
    """

    def __init__(self, reg: _Registry, prefix: str, channels: int, heads: int):
        if channels % heads != 0:
            raise ConfigError(f"{prefix}: {channels} channels not divisible by {heads} heads")
        self.channels = channels
        self.heads = heads
        self.dk = channels // heads
        dk = self.dk
        self.wq = [reg.normal(f"{prefix}.head{i}.wq", (dk, dk), dk) for i in range(heads)]
        self.wk = [reg.normal(f"{prefix}.head{i}.wk", (dk, dk), dk) for i in range(heads)]
        self.wv = [reg.normal(f"{prefix}.head{i}.wv", (dk, dk), dk) for i in range(heads)]
        self.alpha = [reg.const(f"{prefix}.head{i}.alpha", math.sqrt(dk))
                      for i in range(heads)]
        self.wo = reg.normal(f"{prefix}.proj.w", (channels, channels), channels)
        self.ffn1_w = reg.normal(f"{prefix}.ffn1.w", (channels, channels, 1, 1), channels)
        self.ffn1_b = reg.zeros(f"{prefix}.ffn1.b", (channels,))
        self.ffn2_w = reg.normal(f"{prefix}.ffn2.w", (channels, channels, 1, 1), channels)
        self.ffn2_b = reg.zeros(f"{prefix}.ffn2.b", (channels,))

    def __call__(self, x: Tensor, guide: Tensor, training: bool) -> Tensor:
        if x.shape != guide.shape:
            raise ad.DimensionError(
                f"guidance shape {guide.shape} does not match input {x.shape}")
        c, h, w = x.shape
        tokens = ad.reshape(x, (c, h * w)).T
        dk = self.dk
        parts = []
        for i in range(self.heads):
            xi = tokens[:, i * dk:(i + 1) * dk]
            q = xi @ self.wq[i]
            k = xi @ self.wk[i]
            v = xi @ self.wv[i]
            scores = (q @ k.T) / self.alpha[i]
            parts.append(ad.softmax(scores, axis=1) @ v)
        attended = ad.concat(parts, axis=1) @ self.wo
        spatial = ad.reshape(attended.T, (c, h, w))
        y = spatial * guide + x
        z = ad.conv2d(y, self.ffn1_w, self.ffn1_b)
        z = ad.gelu(z)
        z = ad.conv2d(z, self.ffn2_w, self.ffn2_b)
        return z + y


class _MultiHeadAttention:
    """Plain token attention with fixed 1/sqrt(d_k) scaling (no gating)."""

    def __init__(self, reg: _Registry, prefix: str, channels: int, heads: int):
        if channels % heads != 0:
            raise ConfigError(f"{prefix}: {channels} channels not divisible by {heads} heads")
        self.heads = heads
        self.dk = channels // heads
        dk = self.dk
        self.wq = [reg.normal(f"{prefix}.head{i}.wq", (dk, dk), dk) for i in range(heads)]
        self.wk = [reg.normal(f"{prefix}.head{i}.wk", (dk, dk), dk) for i in range(heads)]
        self.wv = [reg.normal(f"{prefix}.head{i}.wv", (dk, dk), dk) for i in range(heads)]
        self.wo = reg.normal(f"{prefix}.proj.w", (channels, channels), channels)

    def __call__(self, q_src: Tensor, kv_src: Tensor) -> Tensor:
        c, h, w = q_src.shape
        qt = ad.reshape(q_src, (c, h * w)).T
        kt = ad.reshape(kv_src, (c, kv_src.shape[1] * kv_src.shape[2])).T
        dk = self.dk
        scale = 1.0 / math.sqrt(dk)
        parts = []
        for i in range(self.heads):
            qi = qt[:, i * dk:(i + 1) * dk] @ self.wq[i]
            ki = kt[:, i * dk:(i + 1) * dk] @ self.wk[i]
            vi = kt[:, i * dk:(i + 1) * dk] @ self.wv[i]
            scores = (qi @ ki.T) * scale
            parts.append(ad.softmax(scores, axis=1) @ vi)
        out = ad.concat(parts, axis=1) @ self.wo
        return ad.reshape(out.T, (c, h, w))


class _Encoder:
    """Stages of guided attention followed by stride-2 channel-doubling convs
    on both the feature and the guidance path."""

    def __init__(self, reg: _Registry, prefix: str, config: ModelConfig):
        self.config = config
        self.stages = []
        for s in range(config.stages):
            c = config.stage_width(s)
            gabs = [_GuidedAttention(reg, f"{prefix}.stage{s}.attn{i}",
                                     c, config.heads_per_stage[s])
                    for i in range(config.lcgab_per_stage)]
            dw = reg.normal(f"{prefix}.stage{s}.down_feat.w", (2 * c, c, 3, 3), c * 9)
            db = reg.zeros(f"{prefix}.stage{s}.down_feat.b", (2 * c,))
            gw = reg.normal(f"{prefix}.stage{s}.down_guide.w", (2 * c, c, 3, 3), c * 9)
            gb = reg.zeros(f"{prefix}.stage{s}.down_guide.b", (2 * c,))
            self.stages.append((gabs, dw, db, gw, gb))

    def __call__(self, x: Tensor, guide: Tensor, training: bool):
        m = self.config.input_multiple
        if x.shape[1] % m or x.shape[2] % m:
            raise ad.DimensionError(
                f"encoder input {x.shape} not divisible by {m}")
        skips = []
        for gabs, dw, db, gw, gb in self.stages:
            for gab in gabs:
                x = gab(x, guide, training)
            skips.append(x)
            x = ad.conv2d(x, dw, db, stride=2, padding=1)
            guide = ad.conv2d(guide, gw, gb, stride=2, padding=1)
        return x, skips


class _FusionBlock:
    """Self-attention on each bottleneck, then cross-attention with queries
    from the luminance side and keys/values from the chrominance side."""

    def __init__(self, reg: _Registry, prefix: str, config: ModelConfig):
        c, h = config.bottleneck_width, config.bottleneck_heads
        self.self_l = _MultiHeadAttention(reg, f"{prefix}.self_l", c, h)
        self.self_c = _MultiHeadAttention(reg, f"{prefix}.self_c", c, h)
        self.cross = _MultiHeadAttention(reg, f"{prefix}.cross", c, h)

    def __call__(self, e_l: Tensor, e_c: Tensor) -> Tensor:
        if e_l.shape != e_c.shape:
            raise ad.DimensionError(
                f"bottleneck shapes differ: {e_l.shape} vs {e_c.shape}")
        a_l = self.self_l(e_l, e_l)
        a_c = self.self_c(e_c, e_c)
        return a_l + self.cross(a_l, a_c)


class _Decoder:
    """Transposed-conv upsampling with summed luminance/chrominance skips;
    the summed skip also serves as attention guidance at each scale."""

    def __init__(self, reg: _Registry, prefix: str, config: ModelConfig):
        self.config = config
        self.stages = []
        for d in range(config.stages):
            s = config.stages - 1 - d
            cin = config.base_width * 2 ** (s + 1)
            cout = config.stage_width(s)
            uw = reg.normal(f"{prefix}.stage{d}.up.w", (cin, cout, 2, 2), cin * 4)
            ub = reg.zeros(f"{prefix}.stage{d}.up.b", (cout,))
            gabs = [_GuidedAttention(reg, f"{prefix}.stage{d}.attn{i}",
                                     cout, config.heads_per_stage[s])
                    for i in range(config.lcgab_per_stage)]
            self.stages.append((uw, ub, gabs))
        w0 = config.base_width
        self.out_w = reg.normal(f"{prefix}.out.w", (3, w0, 3, 3), w0 * 9)
        self.out_b = reg.zeros(f"{prefix}.out.b", (3,))

    def __call__(self, x: Tensor, skips_l: list, skips_c: list, training: bool) -> Tensor:
        for d, (uw, ub, gabs) in enumerate(self.stages):
            x = ad.conv_transpose2d(x, uw, ub, stride=2)
            skip = skips_l[-1 - d] + skips_c[-1 - d]
            if skip.shape != x.shape:
                raise ad.DimensionError(
                    f"decoder stage {d}: skip {skip.shape} does not match {x.shape}")
            x = x + skip
            for gab in gabs:
                x = gab(x, skip, training)
        return ad.conv2d(x, self.out_w, self.out_b, stride=1, padding=1)


class _RefineBlock:
    """Re-decomposes the intermediate output and refines it residually.

    The final convolution is zero-initialized so refinement starts as the
    identity.
    """

    def __init__(self, reg: _Registry, prefix: str, config: ModelConfig):
        rw = config.refine_width
        self.lum_w = reg.normal(f"{prefix}.lum.w", (rw, 1, 3, 3), 9)
        self.lum_b = reg.zeros(f"{prefix}.lum.b", (rw,))
        self.chr_w = reg.normal(f"{prefix}.chr.w", (rw, 3, 3, 3), 27)
        self.chr_b = reg.zeros(f"{prefix}.chr.b", (rw,))
        self.gab = _GuidedAttention(reg, f"{prefix}.attn", 2 * rw, 1)
        self.out_w = reg.zeros(f"{prefix}.out.w", (3, 2 * rw, 3, 3))
        self.out_b = reg.zeros(f"{prefix}.out.b", (3,))

    def __call__(self, i_rec: Tensor, training: bool) -> Tensor:
        lc = decompose(i_rec)
        fl = ad.conv2d(lc.luminance, self.lum_w, self.lum_b, stride=1, padding=1)
        fc = ad.conv2d(lc.chrominance, self.chr_w, self.chr_b, stride=1, padding=1)
        r = ad.concat([fl, fc], axis=0)
        y = self.gab(r, r, training)
        delta = ad.conv2d(y, self.out_w, self.out_b, stride=1, padding=1)
        return i_rec + delta


class EnhancementModel:
    """Full network mapping a low-light image to (intermediate, refined)."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.config.validate()
        reg = _Registry(ad.make_rng(seed))
        w = self.config.base_width
        self.map_l = _MappingStem(reg, "map_l", 1, w)
        self.map_c = _MappingStem(reg, "map_c", 3, w)
        self.enc_l = _Encoder(reg, "enc_l", self.config)
        self.enc_c = _Encoder(reg, "enc_c", self.config)
        self.fusion = _FusionBlock(reg, "fusion", self.config)
        self.decoder = _Decoder(reg, "decoder", self.config)
        self.refine = _RefineBlock(reg, "refine", self.config)
        self._params = reg.params
        self._buffers = reg.buffers

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def named_parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def buffers(self) -> dict[str, np.ndarray]:
        return dict(self._buffers)

    def parameter_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def forward(self, img: Tensor, training: bool = False):
        """Run the full pipeline; returns (intermediate, refined) at input size.

        Eval mode additionally clamps both outputs to [0, 1].
        """
        if img.data.ndim != 3 or img.shape[0] != 3:
            raise ad.DimensionError(f"expected a 3 x H x W image, got {img.shape}")
        _, h, w = img.shape
        if h < 1 or w < 1:
            raise ad.DimensionError(f"image extents must be >= 1, got {h}x{w}")
        m = self.config.input_multiple
        pad_h = (-h) % m
        pad_w = (-w) % m
        x = ad.reflect_pad2d(img, pad_h, pad_w) if (pad_h or pad_w) else img

        lc = decompose(x)
        f_l, ib_l = self.map_l(x, lc.luminance, training)
        f_c, ib_c = self.map_c(x, lc.chrominance, training)
        e_l, skips_l = self.enc_l(ib_l, f_l, training)
        e_c, skips_c = self.enc_c(ib_c, f_c, training)
        fused = self.fusion(e_l, e_c)
        i_rec = self.decoder(fused, skips_l, skips_c, training)
        i_ref = self.refine(i_rec, training)

        if pad_h or pad_w:
            i_rec = i_rec[:, :h, :w]
            i_ref = i_ref[:, :h, :w]
        if not training:
            i_rec = Tensor(np.clip(i_rec.data, 0.0, 1.0))
            i_ref = Tensor(np.clip(i_ref.data, 0.0, 1.0))
        return i_rec, i_ref

    __call__ = forward


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count for a given configuration."""

    def conv(cin, cout, k):
        return cin * cout * k * k + cout

    def bn(c):
        return 2 * c

    def gab(c, heads):
        dk = c // heads
        return heads * (3 * dk * dk + 1) + c * c + 2 * conv(c, c, 1)

    def mha(c, heads):
        dk = c // heads
        return heads * 3 * dk * dk + c * c

    w = config.base_width
    stem = lambda comp: (conv(3 + comp, w, 3) + bn(w) + conv(w, w, 3) + bn(w)
                         + conv(w, w, 3) + bn(w) + conv(w, w, 3))
    total = stem(1) + stem(3)

    encoder = 0
    for s in range(config.stages):
        c = config.stage_width(s)
        encoder += config.lcgab_per_stage * gab(c, config.heads_per_stage[s])
        encoder += 2 * conv(c, 2 * c, 3)
    total += 2 * encoder

    cb = config.bottleneck_width
    total += 3 * mha(cb, config.bottleneck_heads)

    for d in range(config.stages):
        s = config.stages - 1 - d
        cin = w * 2 ** (s + 1)
        cout = config.stage_width(s)
        total += cin * cout * 4 + cout
        total += config.lcgab_per_stage * gab(cout, config.heads_per_stage[s])
    total += conv(w, 3, 3)

    rw = config.refine_width
    total += conv(1, rw, 3) + conv(3, rw, 3) + gab(2 * rw, 1) + conv(2 * rw, 3, 3)
    return total


def encoder_parameter_count(config: ModelConfig) -> int:
    """Closed-form count for one encoder (attention blocks plus both
    stride-2 downsampling paths)."""

    def gab(c, heads):
        dk = c // heads
        return heads * (3 * dk * dk + 1) + c * c + 2 * (c * c + c)

    total = 0
    for s in range(config.stages):
        c = config.stage_width(s)
        total += config.lcgab_per_stage * gab(c, config.heads_per_stage[s])
        total += 2 * (c * 2 * c * 9 + 2 * c)
    return total


# -- checkpoint io ----------------------------------------------------------

def _write_record(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    chunk = fh.read(n)
    if len(chunk) != n:
        raise CheckpointError("truncated checkpoint file")
    return chunk


def _read_record(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
    shape = tuple(struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(fh, count * 8), dtype="<f8").reshape(shape)
    return name, data.astype(np.float64)


def save_checkpoint(model: EnhancementModel, path) -> None:
    """Binary container: magic, length-prefixed config text, named records."""
    records = list(model._params.items()) + list(model._buffers.items())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        config_text = model.config.to_text().encode("utf-8")
        fh.write(struct.pack("<Q", len(config_text)))
        fh.write(config_text)
        fh.write(struct.pack("<Q", len(records)))
        for name, value in records:
            arr = value.data if isinstance(value, Tensor) else value
            _write_record(fh, name, arr)


def load_checkpoint(path, expect_config: ModelConfig | None = None) -> EnhancementModel:
    """Rebuild a model from a checkpoint; bit-exact parameter round trip.

    When ``expect_config`` is given, a checkpoint written under a different
    configuration is refused with the differing fields named.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic bytes, not a checkpoint")
        (config_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        config = ModelConfig.from_text(_read_exact(fh, config_len).decode("utf-8"))
        if expect_config is not None and config != expect_config:
            diffs = [f"{name}: checkpoint {getattr(config, name)!r} != "
                     f"expected {getattr(expect_config, name)!r}"
                     for name in ("base_width", "stages", "heads_per_stage",
                                  "bottleneck_heads", "lcgab_per_stage", "refine_width")
                     if getattr(config, name) != getattr(expect_config, name)]
            raise CheckpointError("config mismatch: " + "; ".join(diffs))
        (count,) = struct.unpack("<Q", _read_exact(fh, 8))
        records = dict(_read_record(fh) for _ in range(count))

    model = EnhancementModel(config)
    expected = set(model._params) | set(model._buffers)
    missing = expected - set(records)
    extra = set(records) - expected
    if missing or extra:
        raise CheckpointError(
            f"checkpoint record mismatch: missing {sorted(missing)[:3]}, "
            f"unexpected {sorted(extra)[:3]}")
    for name, value in records.items():
        if name in model._params:
            target = model._params[name]
            if target.data.shape != value.shape:
                raise CheckpointError(
                    f"{name}: shape {value.shape} != expected {target.data.shape}")
            target.data = value.copy()
            target.grad = np.zeros_like(target.data)
        else:
            model._buffers[name][...] = value
    return model
