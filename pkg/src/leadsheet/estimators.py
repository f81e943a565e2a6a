"""Estimator-style front ends for the two generators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .features import network_features
from .pianoroll import ARRANGEMENT_TRACKS, LEADSHEET_TRACKS
from .training import ArrangementTrainer, LeadSheetTrainer, TrainConfig, arrange_bars, load_trainer, sample_leadsheets
from .validation import check_bars, check_phrases, check_random_state


class _GANEstimator(BaseEstimator):
    def _config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            n_critic=self.n_critic,
            gp_weight=self.gp_weight,
            iterations=self.iterations,
            eval_interval=self.eval_interval,
            seed=self.random_state,
            lr=self.learning_rate,
        )

    def _check_fitted(self):
        if getattr(self, "trainer_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit() or load() first")

    def save(self, path) -> None:
        self._check_fitted()
        self.trainer_.save(path)

    @property
    def history_(self) -> list[dict]:
        self._check_fitted()
        return self.trainer_.history


class LeadSheetGAN(_GANEstimator):
    """Unconditional eight-bar melody-and-chord generator.

    ``fit`` takes phrases shaped (M, 8, 48, 84, 2); ``sample`` returns binarized
    phrases of the same layout.
    """

    def __init__(
        self,
        iterations: int = 2000,
        batch_size: int = 16,
        n_critic: int = 5,
        gp_weight: float = 10.0,
        learning_rate: float = 1e-4,
        eval_interval: int = 0,
        random_state: int = 0,
    ):
        self.iterations = iterations
        self.batch_size = batch_size
        self.n_critic = n_critic
        self.gp_weight = gp_weight
        self.learning_rate = learning_rate
        self.eval_interval = eval_interval
        self.random_state = random_state

    def fit(self, X, y=None):
        data = check_phrases(X, n_tracks=len(LEADSHEET_TRACKS))
        self.trainer_ = LeadSheetTrainer(self._config(), data)
        self.trainer_.train()
        return self

    def sample(self, n_samples: int = 1, random_state=None) -> np.ndarray:
        self._check_fitted()
        return sample_leadsheets(self.trainer_.generator, n_samples, check_random_state(random_state))

    @classmethod
    def load(cls, path) -> "LeadSheetGAN":
        trainer = load_trainer(path)
        if not isinstance(trainer, LeadSheetTrainer):
            raise ValueError(f"{path} does not hold a lead-sheet model")
        c = trainer.config
        est = cls(c.iterations, c.batch_size, c.n_critic, c.gp_weight, c.lr, c.eval_interval, c.seed)
        est.trainer_ = trainer
        return est


class LeadSheetArranger(TransformerMixin, _GANEstimator):
    """Feature-conditioned arranger from lead-sheet bars to five-track bars.

    ``fit`` learns from multi-track bars (..., 48, 84, 5); ``transform`` maps
    lead-sheet bars (..., 48, 84, 2) to arranged bars (..., 48, 84, 5).
    """

    def __init__(
        self,
        feature: str = "chord-roll",
        iterations: int = 2000,
        batch_size: int = 16,
        n_critic: int = 5,
        gp_weight: float = 10.0,
        learning_rate: float = 1e-4,
        eval_interval: int = 0,
        random_state: int = 0,
    ):
        self.feature = feature
        self.iterations = iterations
        self.batch_size = batch_size
        self.n_critic = n_critic
        self.gp_weight = gp_weight
        self.learning_rate = learning_rate
        self.eval_interval = eval_interval
        self.random_state = random_state

    def fit(self, X, y=None):
        bars, _ = check_bars(X, n_tracks=len(ARRANGEMENT_TRACKS))
        self.trainer_ = ArrangementTrainer(self._config(), self.feature, bars)
        self.trainer_.train()
        return self

    def transform(self, X, random_state=None) -> np.ndarray:
        self._check_fitted()
        bars, lead = check_bars(X, n_tracks=len(LEADSHEET_TRACKS))
        conditions = network_features(bars, self.feature, LEADSHEET_TRACKS)
        rng = check_random_state(self.random_state if random_state is None else random_state)
        out = arrange_bars(self.trainer_.generator, conditions, rng)
        return out.reshape(lead + out.shape[1:])

    predict = transform

    @classmethod
    def load(cls, path) -> "LeadSheetArranger":
        trainer = load_trainer(path)
        if not isinstance(trainer, ArrangementTrainer):
            raise ValueError(f"{path} does not hold an arrangement model")
        c = trainer.config
        est = cls(trainer.variant, c.iterations, c.batch_size, c.n_critic, c.gp_weight, c.lr, c.eval_interval, c.seed)
        est.trainer_ = trainer
        return est
