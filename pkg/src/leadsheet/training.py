"""WGAN-gp training for the lead-sheet and arrangement generators.

One seeded ``numpy.random.Generator`` drives batch selection, noise and the
penalty interpolation weights, and its state is stored in every checkpoint,
so training ``i`` steps, saving, and resuming for ``j`` steps reproduces an
uninterrupted ``i + j`` step run.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from statistics import NormalDist
from typing import Callable

import numpy as np

from .features import FEATURE_KINDS, chroma_beats, chroma_roll, network_features
from .metrics import MetricsReport, evaluate
from .nets.arrangement import ArrangementGenerator, ConditionedDiscriminator, check_variant, sample_arrangement_noise
from .nets.leadsheet import LeadSheetGenerator, NoiseBundle, PhraseDiscriminator
from .pianoroll import ARRANGEMENT_TRACKS, LEADSHEET_TRACKS, N_PITCHES, N_STEPS, DataError, binarize
from .tensor import Adam, Module, Tensor, grad, mean, no_grad, reduce_sum, sqrt
from .tensor.checkpoint import CheckpointError, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A loss or gradient became non-finite."""

    def __init__(self, message: str, checkpoint: str | None = None):
        super().__init__(message if checkpoint is None else f"{message} (diagnostic checkpoint: {checkpoint})")
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``lr_schedule`` is ``"constant"`` or ``"linear"`` (decay to zero at the
    final iteration). ``eval_interval`` of 0 disables periodic evaluation.
    """

    batch_size: int = 16
    n_critic: int = 5
    gp_weight: float = 10.0
    iterations: int = 2000
    eval_interval: int = 500
    checkpoint_interval: int = 0
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    lr_schedule: str = "constant"
    n_eval_samples: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch normalization)")
        if self.n_critic < 1:
            raise ValueError("n_critic must be at least 1")
        if self.gp_weight < 0:
            raise ValueError("gp_weight must be non-negative")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.eval_interval < 0 or self.checkpoint_interval < 0:
            raise ValueError("intervals must be non-negative")
        if not self.lr > 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("invalid optimizer settings")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.n_eval_samples < 1:
            raise ValueError("n_eval_samples must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def learning_rate(self, iteration: int) -> float:
        if self.lr_schedule == "linear" and self.iterations > 0:
            return self.lr * max(0.0, 1.0 - iteration / self.iterations)
        return self.lr


def gradient_penalty(
    critic: Callable[[Tensor], Tensor],
    real: np.ndarray,
    fake: np.ndarray,
    epsilon: np.ndarray,
    weight: float = 10.0,
) -> Tensor:
    """``weight * mean((||grad_x critic(x_hat)|| - 1)^2)`` at per-sample interpolates.

    ``epsilon`` has one entry per sample; anything the critic closes over
    (such as a condition) is held fixed rather than interpolated.
    """
    real, fake = np.asarray(real), np.asarray(fake)
    if real.shape != fake.shape:
        raise ValueError(f"real and fake batches differ in shape: {real.shape} vs {fake.shape}")
    eps = np.asarray(epsilon, dtype=real.dtype).reshape((-1,) + (1,) * (real.ndim - 1))
    x_hat = Tensor(eps * real + (1 - eps) * fake, requires_grad=True)
    scores = critic(x_hat)
    (g,) = grad(reduce_sum(scores), [x_hat], create_graph=True)
    axes = tuple(range(1, real.ndim))
    norms = sqrt(reduce_sum(g * g, axis=axes) + 1e-12)
    return mean((norms - 1.0) ** 2) * weight


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


class WGANTrainer:
    """Shared WGAN-gp loop; subclasses supply data, noise and network calls."""

    kind = "wgan"

    def __init__(self, config: TrainConfig, generator: Module, critic: Module, checkpoint_dir=None):
        self.config = config
        self.generator = generator
        self.critic = critic
        self.rng = np.random.default_rng(config.seed)
        self.g_params = generator.named_parameters()
        self.d_params = critic.named_parameters()
        self.g_opt = Adam(self.g_params, config.lr, config.beta1, config.beta2)
        self.d_opt = Adam(self.d_params, config.lr, config.beta1, config.beta2)
        self.iteration = 0
        self.losses: list[dict] = []
        self.history: list[dict] = []
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    # hooks -------------------------------------------------------------
    def real_batch(self, n: int) -> tuple[np.ndarray, np.ndarray | None]:
        raise NotImplementedError

    def sample_noise(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def generate(self, noise, condition) -> Tensor:
        raise NotImplementedError

    def score(self, x: Tensor, condition) -> Tensor:
        raise NotImplementedError

    def evaluate(self, n_samples: int | None = None) -> MetricsReport:
        raise NotImplementedError

    def model_metadata(self) -> dict:
        return {}

    # loop --------------------------------------------------------------
    def critic_step(self) -> dict:
        b = self.config.batch_size
        real, cond = self.real_batch(b)
        with no_grad():
            fake = self.generate(self.sample_noise(b, self.rng), cond).data
        eps = self.rng.random(b)
        both_cond = None if cond is None else np.concatenate([cond, cond])
        scores = self.score(Tensor(np.concatenate([real, fake])), both_cond)
        d_real, d_fake = mean(scores[:b]), mean(scores[b:])
        loss = d_fake - d_real
        gp = 0.0
        if self.config.gp_weight > 0:
            penalty = gradient_penalty(lambda x: self.score(x, cond), real, fake, eps, self.config.gp_weight)
            loss = loss + penalty
            gp = penalty.item()
        grads = grad(loss, list(self.d_params.values()))
        self._check(loss.item(), grads, "critic")
        self.d_opt.step(dict(zip(self.d_params, (g.data for g in grads))))
        return {"d_loss": loss.item(), "gp": gp, "wasserstein": d_real.item() - d_fake.item()}

    def generator_step(self) -> dict:
        b = self.config.batch_size
        cond = self.condition_batch(b)
        fake = self.generate(self.sample_noise(b, self.rng), cond)
        loss = -mean(self.score(fake, cond))
        grads = grad(loss, list(self.g_params.values()))
        self._check(loss.item(), grads, "generator")
        self.g_opt.step(dict(zip(self.g_params, (g.data for g in grads))))
        return {"g_loss": loss.item()}

    def condition_batch(self, n: int):
        return None

    def _check(self, loss: float, grads, where: str) -> None:
        if _finite(loss) and all(np.isfinite(g.data).all() for g in grads):
            return
        path = None
        if self.checkpoint_dir is not None:
            path = str(self.checkpoint_dir / f"diagnostic-{self.iteration:06d}.ckpt")
            self.save(path)
        raise NumericalError(f"non-finite {where} loss or gradient at iteration {self.iteration + 1}", path)

    def train_step(self) -> dict:
        lr = self.config.learning_rate(self.iteration)
        self.g_opt.state.lr = self.d_opt.state.lr = lr
        critic_logs = [self.critic_step() for _ in range(self.config.n_critic)]
        record = {"iteration": self.iteration + 1}
        for key in critic_logs[0]:
            record[key] = float(np.mean([c[key] for c in critic_logs]))
        record.update(self.generator_step())
        self.iteration += 1
        self.losses.append(record)
        return record

    def train(self, iterations: int | None = None, callback=None) -> list[dict]:
        """Run ``iterations`` more steps (default: up to ``config.iterations``)."""
        target = self.iteration + iterations if iterations is not None else self.config.iterations
        records = []
        while self.iteration < target:
            record = self.train_step()
            records.append(record)
            it = self.iteration
            if self.config.eval_interval and (it == 1 or it % self.config.eval_interval == 0):
                self.evaluate_checkpoint()
            if self.checkpoint_dir is not None and self.config.checkpoint_interval and it % self.config.checkpoint_interval == 0:
                self.save(self.checkpoint_dir / f"{self.kind}-{it:06d}.ckpt")
            if callback is not None:
                callback(self, record)
        return records

    def evaluate_checkpoint(self, n_samples: int | None = None) -> MetricsReport:
        report = self.evaluate(n_samples)
        report.iteration = self.iteration
        self.history.append(report.to_dict())
        logger.info("iteration %d metrics %s", self.iteration, json.dumps(report.to_dict(), sort_keys=True))
        return report

    def eval_rng(self) -> np.random.Generator:
        """Evaluation noise is fixed per seed and never touches the training stream."""
        return np.random.default_rng([self.config.seed, 1])

    # persistence -------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"G/{k}": v for k, v in self.generator.state_dict().items()}
        arrays.update({f"D/{k}": v for k, v in self.critic.state_dict().items()})
        arrays.update(self.g_opt.state_arrays("optG/"))
        arrays.update(self.d_opt.state_arrays("optD/"))
        return arrays

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "iteration": self.iteration,
            "config": self.config.to_dict(),
            "rng_state": _rng_state(self.rng),
            "g_step": self.g_opt.state.step,
            "d_step": self.d_opt.state.step,
            "losses": self.losses,
            "history": self.history,
            **self.model_metadata(),
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.kind, self.state_arrays(), self.metadata())

    def load(self, path) -> dict:
        model_id, arrays, meta = load_checkpoint(path)
        self.restore(model_id, arrays, meta)
        return meta

    def restore(self, model_id: str, arrays: dict, meta: dict) -> None:
        if model_id != self.kind:
            raise CheckpointError(f"checkpoint holds a {model_id!r} model, expected {self.kind!r}")
        self.generator.load_state_dict(_strip(arrays, "G/"))
        self.critic.load_state_dict(_strip(arrays, "D/"))
        self.g_opt.load_state_arrays(arrays, "optG/", meta["g_step"])
        self.d_opt.load_state_arrays(arrays, "optD/", meta["d_step"])
        _set_rng_state(self.rng, meta["rng_state"])
        self.iteration = meta["iteration"]
        self.losses = list(meta.get("losses", []))
        self.history = list(meta.get("history", []))


def _strip(arrays: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}


def init_output_prior(stacks, data: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """Start each track's final batch-norm shift at the probit of that track's density in ``data``.

    The generators end in BN + tanh, so the share of positive outputs is set by
    that shift. Starting it at the data's note density (about 1% of cells for a
    melody) keeps the critic from spending the whole run on overall sparsity.
    """
    density = np.count_nonzero(data.reshape(-1, data.shape[-1]), axis=0) / (data.size // data.shape[-1])
    shifts = np.array([NormalDist().inv_cdf(float(np.clip(d, floor, 0.5))) for d in density])
    for stack, shift in zip(stacks, shifts):
        stack.norms[-1].beta.data[...] = shift
    return shifts


def to_signed(x: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Binary {0, 1} data to the generator's tanh range {-1, +1}."""
    return np.asarray(x, dtype=dtype) * 2 - 1


class LeadSheetTrainer(WGANTrainer):
    """Trains the eight-bar melody-and-chord generator against the phrase critic."""

    kind = "leadsheet-gan"

    def __init__(self, config: TrainConfig, phrases=None, checkpoint_dir=None):
        init_rng = np.random.default_rng([config.seed, 0])
        super().__init__(config, LeadSheetGenerator(init_rng), PhraseDiscriminator(init_rng), checkpoint_dir)
        self.data = None if phrases is None else _check_leadsheets(phrases)
        if self.data is not None:
            init_output_prior(self.generator.bar_generators, self.data)

    def real_batch(self, n):
        if self.data is None:
            raise DataError("no training data attached")
        idx = self.rng.integers(0, len(self.data), size=n)
        return to_signed(self.data[idx]), None

    def sample_noise(self, n, rng):
        return NoiseBundle.sample(rng, n)

    def generate(self, noise, condition=None) -> Tensor:
        return self.generator(noise)

    def score(self, x, condition=None) -> Tensor:
        return self.critic(x)

    def sample(self, n: int, rng: np.random.Generator | None = None, batch: int = 64) -> np.ndarray:
        """Binarized phrases (n, 8, 48, 84, 2) from the generator in inference mode."""
        rng = rng if rng is not None else self.eval_rng()
        return sample_leadsheets(self.generator, n, rng, batch)

    def evaluate(self, n_samples=None):
        phrases = self.sample(n_samples or self.config.n_eval_samples)
        return evaluate(phrases, LEADSHEET_TRACKS, ("melody", "chord"))


def sample_leadsheets(generator: LeadSheetGenerator, n: int, rng: np.random.Generator, batch: int = 64) -> np.ndarray:
    was_training = generator.training
    generator.eval()
    out = []
    try:
        with no_grad():
            for start in range(0, n, batch):
                noise = NoiseBundle.sample(rng, min(batch, n - start))
                out.append(binarize(generator(noise).data, LEADSHEET_TRACKS))
    finally:
        generator.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, 8, N_STEPS, N_PITCHES, 2), dtype=bool)


def _check_leadsheets(phrases) -> np.ndarray:
    data = np.asarray(phrases)
    if data.ndim != 5 or data.shape[1:] != (8, N_STEPS, N_PITCHES, 2):
        raise DataError(f"lead-sheet training data must be (M, 8, 48, 84, 2), got {data.shape}")
    return data.astype(bool)


class ArrangementTrainer(WGANTrainer):
    """Trains the feature-conditioned five-track bar generator."""

    kind = "arrangement-gan"

    def __init__(self, config: TrainConfig, variant: str = "chord-roll", bars=None, checkpoint_dir=None):
        self.variant = check_variant(variant)
        init_rng = np.random.default_rng([config.seed, 0])
        super().__init__(
            config,
            ArrangementGenerator(variant, init_rng),
            ConditionedDiscriminator(variant, init_rng),
            checkpoint_dir,
        )
        self.data = self.conditions = None
        if bars is not None:
            self.data = _check_arrangement_bars(bars)
            self.conditions = network_features(self.data, variant, ARRANGEMENT_TRACKS)
            init_output_prior(self.generator.trunks, self.data)

    def real_batch(self, n):
        if self.data is None:
            raise DataError("no training data attached")
        idx = self.rng.integers(0, len(self.data), size=n)
        return to_signed(self.data[idx]), self.conditions[idx]

    def condition_batch(self, n):
        idx = self.rng.integers(0, len(self.data), size=n)
        return self.conditions[idx]

    def sample_noise(self, n, rng):
        return sample_arrangement_noise(rng, n)

    def generate(self, noise, condition) -> Tensor:
        return self.generator(noise, condition)

    def score(self, x, condition) -> Tensor:
        return self.critic(x, condition)

    def model_metadata(self):
        return {"variant": self.variant}

    def restore(self, model_id, arrays, meta):
        if meta.get("variant", self.variant) != self.variant:
            raise CheckpointError(f"checkpoint variant {meta['variant']!r} does not match {self.variant!r}")
        super().restore(model_id, arrays, meta)

    def arrange(self, conditions: np.ndarray, rng: np.random.Generator | None = None, batch: int = 64) -> np.ndarray:
        """Binarized five-track bars (n, 48, 84, 5) for network-layout conditions."""
        rng = rng if rng is not None else self.eval_rng()
        return arrange_bars(self.generator, conditions, rng, batch)

    def evaluate(self, n_samples=None, conditions=None):
        if conditions is None:
            n = n_samples or self.config.n_eval_samples
            pick = self.eval_rng().integers(0, len(self.conditions), size=n)
            conditions = self.conditions[pick]
        bars = self.arrange(conditions)
        report = evaluate(bars, ARRANGEMENT_TRACKS)
        report.extra["condition_similarity"] = conditioning_similarity(conditions, self.variant, bars)
        return report


def arrange_bars(generator: ArrangementGenerator, conditions, rng: np.random.Generator, batch: int = 64) -> np.ndarray:
    conditions = np.asarray(conditions, dtype=np.float32)
    was_training = generator.training
    generator.eval()
    out = []
    try:
        with no_grad():
            for start in range(0, len(conditions), batch):
                cond = conditions[start : start + batch]
                out.append(binarize(generator(sample_arrangement_noise(rng, len(cond)), cond).data))
    finally:
        generator.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, N_STEPS, N_PITCHES, 5), dtype=bool)


def _check_arrangement_bars(bars) -> np.ndarray:
    data = np.asarray(bars)
    if data.ndim == 5:
        data = data.reshape((-1,) + data.shape[2:])
    if data.ndim != 4 or data.shape[1:] != (N_STEPS, N_PITCHES, 5):
        raise DataError(f"arrangement training data must be (M, 48, 84, 5) bars, got {data.shape}")
    return data.astype(bool)


def feature_beat_chroma(features, kind: str) -> np.ndarray:
    """Beat chroma (n, 12, 4) of network-layout features."""
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    features = np.swapaxes(np.asarray(features, dtype=np.float64), -1, -2)
    if kind == "chroma-beats":
        return features
    if kind == "chroma-roll":
        return chroma_beats(features)
    folded = features.reshape(features.shape[:-2] + (N_PITCHES // 12, 12, N_STEPS)).max(axis=-3)
    return chroma_beats(folded)


def conditioning_similarity(conditions, kind: str, bars, tracks=ARRANGEMENT_TRACKS) -> float:
    """Mean cosine similarity between condition and generated beat chroma (12 x 4, flattened)."""
    ref = feature_beat_chroma(conditions, kind).reshape(len(conditions), -1)
    gen = chroma_beats(chroma_roll(bars, tracks)).reshape(len(bars), -1)
    norms = np.linalg.norm(ref, axis=1) * np.linalg.norm(gen, axis=1)
    cos = np.where(norms > 0, (ref * gen).sum(axis=1) / np.where(norms > 0, norms, 1.0), 0.0)
    return float(cos.mean())


def load_trainer(path, data=None, checkpoint_dir=None) -> WGANTrainer:
    """Rebuild a trainer from a checkpoint, optionally attaching data for further training."""
    model_id, arrays, meta = load_checkpoint(path)
    config = TrainConfig.from_dict(meta["config"])
    if model_id == LeadSheetTrainer.kind:
        trainer = LeadSheetTrainer(config, data, checkpoint_dir)
    elif model_id == ArrangementTrainer.kind:
        trainer = ArrangementTrainer(config, meta["variant"], data, checkpoint_dir)
    else:
        raise CheckpointError(f"unknown model kind {model_id!r}")
    trainer.restore(model_id, arrays, meta)
    return trainer
