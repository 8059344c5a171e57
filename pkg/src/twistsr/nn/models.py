"""BN-free RRDB generator over wavelet subbands and a minimal Wasserstein critic."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import functional as F
from .params import ParameterStore
from .tensor import Tensor

DENSE_BLOCKS_PER_RRDB = 3


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 4
    out_channels: int = 4
    base_features: int = 16
    rrdb_blocks: int = 2
    dense_layers_per_block: int = 5
    growth_channels: int = 8
    residual_scale: float = 0.2
    negative_slope: float = 0.2

    def validate(self) -> list[str]:
        problems = []
        if self.in_channels != 4 or self.out_channels != 4:
            problems.append("in_channels and out_channels must both be 4 (one per subband)")
        if self.rrdb_blocks < 1:
            problems.append("rrdb_blocks >= 1")
        if self.dense_layers_per_block < 1:
            problems.append("dense_layers_per_block >= 1")
        if self.base_features < 1 or self.growth_channels < 1:
            problems.append("base_features and growth_channels must be positive")
        return problems

    def check(self) -> None:
        problems = self.validate()
        if problems:
            raise ValueError("invalid generator config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def full_scale(cls) -> "GeneratorConfig":
        return cls(base_features=64, rrdb_blocks=25, growth_channels=32)


def _kaiming(rng: np.random.Generator, shape, gain: float, dtype) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    std = np.sqrt(2.0 / fan_in) * gain
    return (rng.standard_normal(shape) * std).astype(dtype)


def _conv_param(store: ParameterStore, rng, name: str, out_c: int, in_c: int, gain: float,
                dtype, k: int = 3) -> None:
    store.add(f"{name}.weight", _kaiming(rng, (out_c, in_c, k, k), gain, dtype))
    store.add(f"{name}.bias", np.zeros(out_c, dtype=dtype))


def init_generator(config: GeneratorConfig, seed: int = 0, dtype=np.float32,
                   residual_gain: float = 0.1, ll_passthrough: bool = True) -> ParameterStore:
    """Kaiming fan-in init; residual-branch convs scaled by `residual_gain`.

    With `ll_passthrough`, head feature 0 and tail output 0 start as centred
    deltas on channel 0, so the fresh network roughly doubles the LL slot.
    That puts the LR plane on the orthonormal LL scale from the first step.
    """
    config.check()
    rng = np.random.default_rng(seed)
    nf, gc = config.base_features, config.growth_channels
    store = ParameterStore()
    _conv_param(store, rng, "head", nf, config.in_channels, 1.0, dtype)
    for b in range(config.rrdb_blocks):
        for d in range(DENSE_BLOCKS_PER_RRDB):
            for layer in range(config.dense_layers_per_block):
                last = layer == config.dense_layers_per_block - 1
                _conv_param(store, rng, f"rrdb.{b}.dense.{d}.conv.{layer}",
                            nf if last else gc, nf + layer * gc, residual_gain, dtype)
    _conv_param(store, rng, "trunk", nf, nf, residual_gain, dtype)
    _conv_param(store, rng, "tail", config.out_channels, nf, residual_gain, dtype)
    if ll_passthrough:
        c = 3 // 2
        head, tail = store["head.weight"].data, store["tail.weight"].data
        head[0] = 0
        head[0, 0, c, c] = 1
        tail[0] = 0
        tail[0, 0, c, c] = 1
    return store


def zero_generator(config: GeneratorConfig, dtype=np.float32) -> ParameterStore:
    return init_generator(config, dtype=dtype).zero_()


def _conv(x: Tensor, params: ParameterStore, name: str, **kw) -> Tensor:
    return F.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], **kw)


def dense_block_forward(x: Tensor, params: ParameterStore, prefix: str,
                        config: GeneratorConfig) -> Tensor:
    feats = [x]
    n = config.dense_layers_per_block
    for layer in range(n):
        inp = feats[0] if len(feats) == 1 else F.concat(feats, axis=1)
        out = _conv(inp, params, f"{prefix}.conv.{layer}")
        if layer < n - 1:
            feats.append(F.leaky_relu(out, config.negative_slope))
    return F.scaled_add(x, out, config.residual_scale)


def rrdb_forward(x: Tensor, params: ParameterStore, index: int, config: GeneratorConfig) -> Tensor:
    """Three chained dense blocks wrapped in a scaled residual connection.

    The outer branch is the net change made by the chain, x + beta*(h - x), so
    zero parameters (or beta = 0) leave the block an exact identity.
    """
    if x.shape[1] != config.base_features:
        raise ValueError(f"RRDB expects {config.base_features} channels, got {x.shape[1]}")
    h = x
    for d in range(DENSE_BLOCKS_PER_RRDB):
        h = dense_block_forward(h, params, f"rrdb.{index}.dense.{d}", config)
    return F.scaled_add(x, F.add(h, F.scale(x, -1.0)), config.residual_scale)


def generator_forward(x: Tensor, config: GeneratorConfig, params: ParameterStore) -> Tensor:
    """Predict HR subbands from (B, 4, h, w) network input; same spatial size out.

    The network output is added to the input, so all-zero parameters give the
    identity map.
    """
    if x.data.ndim != 4 or x.shape[1] != config.in_channels:
        raise ValueError(f"generator expects (B, {config.in_channels}, H, W), got {x.shape}")
    fea = _conv(x, params, "head")
    trunk = fea
    for b in range(config.rrdb_blocks):
        trunk = rrdb_forward(trunk, params, b, config)
    trunk = _conv(trunk, params, "trunk")
    fea = F.add(fea, trunk)
    return F.add(x, _conv(fea, params, "tail"))


# ---------------------------------------------------------------------------
# critic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticConfig:
    in_channels: int = 1
    features: int = 8
    layers: int = 4
    negative_slope: float = 0.2

    def to_dict(self) -> dict:
        return asdict(self)


def init_critic(config: CriticConfig, seed: int = 0, dtype=np.float32) -> ParameterStore:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    in_c = config.in_channels
    for i in range(config.layers):
        out_c = config.features * 2 ** i
        _conv_param(store, rng, f"conv.{i}", out_c, in_c, 1.0, dtype)
        in_c = out_c
    store.add("fc.weight", _kaiming(rng, (1, in_c), 1.0, dtype))
    store.add("fc.bias", np.zeros(1, dtype=dtype))
    return store


def critic_forward(x: Tensor, config: CriticConfig, params: ParameterStore) -> Tensor:
    """Unbounded score per batch item: strided convs, global average, linear map."""
    if x.data.ndim != 4 or x.shape[1] != config.in_channels:
        raise ValueError(f"critic expects (B, {config.in_channels}, H, W), got {x.shape}")
    h = x
    for i in range(config.layers):
        h = F.leaky_relu(_conv(h, params, f"conv.{i}", stride=2, padding=1), config.negative_slope)
    out = F.linear(F.global_avg_pool(h), params["fc.weight"], params["fc.bias"])
    return F.reshape(out, (x.shape[0],))
