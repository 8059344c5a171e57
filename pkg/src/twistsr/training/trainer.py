"""Training loop, fine-tuning and the optional Wasserstein critic mode."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from ..imagecore import atomic_write
from ..nn import (
    CriticConfig,
    GeneratorConfig,
    ParameterStore,
    Tensor,
    adam_step,
    critic_forward,
    generator_forward,
    init_critic,
    init_generator,
    weight_decay_gradient,
)
from ..nn import functional as F
from ..nn.optim import clip_
from .checkpoint import Checkpoint
from .data import TrainingSample, dataset_tag, stack_batch
from .loss import wavelet_l2

log = logging.getLogger(__name__)


class TrainingDivergence(ArithmeticError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"loss became non-finite ({value}) at iteration {iteration}")
        self.iteration = iteration


class ArchitectureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class WGANConfig:
    enabled: bool = False
    clip_c: float = 0.01
    n_critic: int = 5
    critic_weight: float = 1e-3
    critic_domain: str = "image"      # "image" (IDWT output) or "subband"
    critic_features: int = 8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    iterations: int = 2000
    batch_size: int = 4
    weight_decay: float = 1e-4
    scale: int = 2
    patch_size: int = 64
    patches_per_image: int = 2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_ll_passthrough: bool = True
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    wgan: WGANConfig = field(default_factory=WGANConfig)

    def validate(self) -> list[str]:
        """Every violated constraint, as readable strings."""
        problems = []
        if not self.learning_rate > 0:
            problems.append("learning_rate > 0")
        if self.iterations < 1:
            problems.append("iterations ≥ 1")
        if self.batch_size < 1:
            problems.append("batch_size ≥ 1")
        if self.weight_decay < 0:
            problems.append("weight_decay ≥ 0")
        if self.scale not in (2, 3, 4):
            problems.append("scale ∈ {2, 3, 4}")
        elif self.patch_size % (2 * self.scale):
            problems.append(f"patch_size divisible by {2 * self.scale}")
        if self.patches_per_image < 1:
            problems.append("patches_per_image ≥ 1")
        problems += self.generator.validate()
        if self.wgan.enabled:
            if self.wgan.n_critic < 1:
                problems.append("wgan.n_critic ≥ 1")
            if not self.wgan.clip_c > 0:
                problems.append("wgan.clip_c > 0")
            if self.wgan.critic_domain not in ("image", "subband"):
                problems.append("wgan.critic_domain ∈ {image, subband}")
        return problems

    def to_dict(self) -> dict:
        return asdict(self)

    def flat(self) -> dict[str, object]:
        out = {}
        for k, v in self.to_dict().items():
            if isinstance(v, dict):
                out.update({f"{k}.{kk}": vv for kk, vv in v.items()})
            else:
                out[k] = v
        return out


def _coerce(text: str, like):
    if isinstance(like, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text.strip()


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse flat `key = value` lines; `#` starts a comment.

    Nested fields use dotted keys (`generator.base_features`, `wgan.enabled`).
    """
    base = base or TrainConfig()
    top = {f.name: getattr(base, f.name) for f in fields(base)}
    nested = {"generator": asdict(base.generator), "wgan": asdict(base.wgan)}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            if "." in key:
                group, sub = key.split(".", 1)
                if group not in nested or sub not in nested[group]:
                    raise KeyError(key)
                nested[group][sub] = _coerce(value, nested[group][sub])
            else:
                if key not in top or key in nested:
                    raise KeyError(key)
                top[key] = _coerce(value, top[key])
        except KeyError:
            errors.append(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key}: {exc}")
    if errors:
        raise ValueError("; ".join(errors))
    top["generator"] = GeneratorConfig(**nested["generator"])
    top["wgan"] = WGANConfig(**nested["wgan"])
    return TrainConfig(**top)


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n"
                   for k, v in config.flat().items())


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

class BatchSampler:
    """Epoch-wise shuffled indices; batches may straddle epoch boundaries."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._queue: list[int] = []

    def next(self) -> list[int]:
        while len(self._queue) < self.batch_size:
            self._queue.extend(int(i) for i in self.rng.permutation(self.n))
        batch, self._queue = self._queue[:self.batch_size], self._queue[self.batch_size:]
        return batch


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: list[float]
    critic_gaps: list[float] = field(default_factory=list)

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.critic_gaps:
            w.writerow(["iteration", "loss", "critic_gap"])
            for i, (l, g) in enumerate(zip(self.losses, self.critic_gaps), 1):
                w.writerow([i, repr(l), repr(g)])
        else:
            w.writerow(["iteration", "loss"])
            for i, l in enumerate(self.losses, 1):
                w.writerow([i, repr(l)])
        return buf.getvalue()

    def write_curve(self, path: str | os.PathLike) -> None:
        atomic_write(path, self.curve_csv().encode())


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------

def generator_step(params: ParameterStore, x: np.ndarray, y: np.ndarray, config: TrainConfig,
                   critic: ParameterStore | None = None, critic_cfg: CriticConfig | None = None) -> float:
    """Forward, wavelet L2 loss (+ optional adversarial term), backward, weight decay, Adam."""
    params.zero_grad()
    out = generator_forward(Tensor(x), config.generator, params)
    loss = wavelet_l2(out, y)
    total = loss
    if critic is not None and config.wgan.critic_weight != 0:
        fake = F.idwt2d(out) if config.wgan.critic_domain == "image" else out
        adv = F.scale(F.mean(critic_forward(fake, critic_cfg, critic)), -config.wgan.critic_weight)
        total = F.add(loss, adv)
    value = float(loss.data)
    if not math.isfinite(value):
        return value
    total.backward()
    weight_decay_gradient(params, config.weight_decay)
    adam_step(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    return value


def _critic_input(bands: np.ndarray, hr: np.ndarray, domain: str) -> tuple[np.ndarray, np.ndarray]:
    from .. import wavelet

    if domain == "image":
        fake = wavelet.idwt2d_stacked(bands)[:, None]
        real = hr[:, None]
    else:
        fake = bands
        real = wavelet.dwt2d_stacked(hr)
    return fake.astype(bands.dtype), real.astype(bands.dtype)


def wgan_train_step(gen: ParameterStore, critic: ParameterStore, x: np.ndarray, y: np.ndarray,
                    hr: np.ndarray, config: TrainConfig, critic_cfg: CriticConfig) -> dict:
    """n_critic clipped critic updates, then one generator update."""
    if not config.wgan.enabled:
        raise RuntimeError("wgan_train_step requires wgan.enabled")
    from ..nn import no_grad

    with no_grad():
        bands = generator_forward(Tensor(x), config.generator, gen).data
    fake, real = _critic_input(bands, hr, config.wgan.critic_domain)
    gap = float("nan")
    for _ in range(config.wgan.n_critic):
        critic.zero_grad()
        score_real = F.mean(critic_forward(Tensor(real), critic_cfg, critic))
        score_fake = F.mean(critic_forward(Tensor(fake), critic_cfg, critic))
        # maximize E[C(real)] - E[C(fake)]
        loss_c = F.add(score_fake, F.scale(score_real, -1.0))
        loss_c.backward()
        adam_step(critic, config.learning_rate, config.beta1, config.beta2, config.eps)
        clip_(critic, config.wgan.clip_c)
        gap = float(score_real.data - score_fake.data)
    loss = generator_step(gen, x, y, config, critic, critic_cfg)
    critic.zero_grad()
    return {"loss": loss, "critic_gap": gap}


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------

def _critic_config(config: TrainConfig) -> CriticConfig:
    return CriticConfig(in_channels=1 if config.wgan.critic_domain == "image" else 4,
                        features=config.wgan.critic_features)


def _run(samples: Sequence[TrainingSample], config: TrainConfig, params: ParameterStore,
         iterations: int) -> tuple[list[float], list[float]]:
    x_all, y_all = stack_batch(samples, np.float32)
    hr_all = np.stack([s.hr for s in samples]).astype(np.float32)
    sampler = BatchSampler(len(samples), config.batch_size, config.seed)
    critic = critic_cfg = None
    if config.wgan.enabled:
        critic_cfg = _critic_config(config)
        critic = init_critic(critic_cfg, seed=config.seed + 1)
    losses, gaps = [], []
    for it in range(1, iterations + 1):
        idx = sampler.next()
        if critic is not None:
            stats = wgan_train_step(params, critic, x_all[idx], y_all[idx], hr_all[idx], config, critic_cfg)
            value = stats["loss"]
            gaps.append(stats["critic_gap"])
        else:
            # overflow is caught below as TrainingDivergence
            with np.errstate(over="ignore", invalid="ignore"):
                value = generator_step(params, x_all[idx], y_all[idx], config)
        if not math.isfinite(value):
            raise TrainingDivergence(it, value)
        losses.append(value)
        if it % 100 == 0:
            log.info("iteration %d loss %.6g", it, value)
    return losses, gaps


def _provenance(samples, config: TrainConfig, iterations: int, stage: str,
                parent: Checkpoint | None) -> dict:
    tag = dataset_tag(samples)
    parent_hash = parent.hash() if parent is not None else None
    lineage = list(parent.lineage) if parent is not None else []
    lineage.append({"stage": stage, "dataset": tag, "iterations": iterations, "parent": parent_hash})
    return {
        "scale": config.scale,
        "dataset": tag,
        "iterations": iterations,
        "seed": config.seed,
        "parent": parent_hash,
        "lineage": lineage,
    }


def train(samples: Sequence[TrainingSample], config: TrainConfig,
          init: ParameterStore | None = None) -> TrainResult:
    """Train a generator from `init` (or a seeded fresh init) on `samples`."""
    if not samples:
        raise ValueError("training dataset is empty")
    params = init.copy() if init is not None else init_generator(
        config.generator, seed=config.seed, ll_passthrough=config.init_ll_passthrough)
    losses, gaps = _run(samples, config, params, config.iterations)
    ckpt = Checkpoint(config.generator, params,
                      _provenance(samples, config, config.iterations, "pretrain", None))
    return TrainResult(ckpt, losses, gaps)


def finetune(parent: Checkpoint, samples: Sequence[TrainingSample], config: TrainConfig) -> TrainResult:
    """Continue training the parent's weights on a target-domain dataset.

    Optimizer state starts fresh; provenance appends to the parent's lineage.
    """
    if parent.config != config.generator:
        raise ArchitectureMismatch(
            f"parent architecture {parent.config.to_dict()} does not match config {config.generator.to_dict()}"
        )
    if not samples:
        raise ValueError("fine-tuning dataset is empty")
    params = parent.params.astype(np.float32)
    losses, gaps = _run(samples, config, params, config.iterations)
    ckpt = Checkpoint(config.generator, params,
                      _provenance(samples, config, config.iterations, "finetune", parent))
    return TrainResult(ckpt, losses, gaps)


def dataset_loss(params: ParameterStore, config: GeneratorConfig,
                 samples: Sequence[TrainingSample], batch_size: int = 8) -> float:
    """Wavelet L2 loss (batch mean) over a whole dataset, evaluated in float64."""
    from ..pipeline import predict_planes

    total = 0.0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        x = np.stack([s.network_input for s in chunk])
        y = np.stack([s.target for s in chunk])
        pred = predict_planes(x, config, params)
        d = pred - y
        total += float(np.sum(d * d))
    return total / len(samples)
