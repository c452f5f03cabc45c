"""Typed configuration objects and their JSON round trip.

Defaults are the hyperparameters used for the 50-ion agents. Every config is a
frozen dataclass; nested configs are rebuilt by ``from_dict``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

from .errors import InvalidSpecError

logger = logging.getLogger('ionshuttle.config')

T = TypeVar('T')

ENCODINGS = ('sinusoidal', 'linear')
REPRESENTATIONS = ('proposed', 'naive')


def _from_dict(cls: Type[T], data: Dict[str, Any]) -> T:
	if not isinstance(data, dict):
		raise InvalidSpecError(f"{cls.__name__} expects a mapping, got {type(data).__name__}")
	known = {f.name: f for f in dataclasses.fields(cls) if f.init}
	unknown = sorted(set(data) - set(known))
	if unknown:
		raise InvalidSpecError(f"Unknown {cls.__name__} keys: {unknown}")
	kwargs = {}
	for name, value in data.items():
		nested = _NESTED.get((cls.__name__, name))
		kwargs[name] = _from_dict(nested, value) if nested is not None and isinstance(value, dict) else value
	try:
		return cls(**kwargs)
	except TypeError as exc:
		raise InvalidSpecError(f"Malformed {cls.__name__}: {exc}") from exc


class _DictMixin:
	def to_dict(self) -> Dict[str, Any]:
		return dataclasses.asdict(self)

	@classmethod
	def from_dict(cls, data: Dict[str, Any]):
		return _from_dict(cls, data)


@dataclass(frozen=True)
class RewardConfig(_DictMixin):
	"""SMDP reward: continuous discount rate ``beta`` and penalty rate ``c_r``."""

	beta: float = -math.log(0.9995)
	c_r: float = 0.1
	gamma_s: float = 1.0
	shaping_enabled: bool = True

	def __post_init__(self) -> None:
		if not self.beta > 0:
			raise InvalidSpecError(f"beta must be > 0, got {self.beta}")
		if not self.c_r > 0:
			raise InvalidSpecError(f"c_r must be > 0, got {self.c_r}")
		if not 0 < self.gamma_s <= 1:
			raise InvalidSpecError(f"gamma_s must be in (0, 1], got {self.gamma_s}")

	@property
	def gamma(self) -> float:
		return math.exp(-self.beta)

	@classmethod
	def from_gamma(cls, gamma: float = 0.9995, **kwargs) -> 'RewardConfig':
		if not 0 < gamma < 1:
			raise InvalidSpecError(f"gamma must be in (0, 1), got {gamma}")
		return cls(beta=-math.log(gamma), **kwargs)


@dataclass(frozen=True)
class EmbeddingConfig(_DictMixin):
	"""Observation settings; ``None`` x_max values resolve to n_cells / n_gates_budget."""

	k_lookahead: int = 4
	b_cell: int = 6
	b_total: int = 7
	encoding: str = 'sinusoidal'
	representation: str = 'proposed'
	cell_x_max: Optional[float] = None
	total_x_max: Optional[float] = None

	def __post_init__(self) -> None:
		if self.k_lookahead < 1:
			raise InvalidSpecError(f"k_lookahead must be >= 1, got {self.k_lookahead}")
		if self.b_cell < 1 or self.b_total < 1:
			raise InvalidSpecError(f"Band counts must be >= 1, got b_cell={self.b_cell} b_total={self.b_total}")
		if self.encoding not in ENCODINGS:
			raise InvalidSpecError(f"encoding must be one of {ENCODINGS}, got '{self.encoding}'")
		if self.representation not in REPRESENTATIONS:
			raise InvalidSpecError(f"representation must be one of {REPRESENTATIONS}, got '{self.representation}'")
		for name in ('cell_x_max', 'total_x_max'):
			value = getattr(self, name)
			if value is not None and not value > 0:
				raise InvalidSpecError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class NetworkConfig(_DictMixin):
	n_hidden: int = 512
	n_blocks: int = 3

	def __post_init__(self) -> None:
		if self.n_hidden < 1 or self.n_blocks < 0:
			raise InvalidSpecError(f"Invalid network shape n_hidden={self.n_hidden} n_blocks={self.n_blocks}")


@dataclass(frozen=True)
class PpoConfig(_DictMixin):
	learning_rate: float = 2.5e-4
	anneal_lr: bool = True
	value_coef: float = 0.5
	clip_ratio: float = 0.1
	n_envs: int = 250
	n_steps: int = 40
	entropy_coef: float = 1e-4
	epochs: int = 4
	minibatch_size: int = 1024
	gae_lambda: float = 0.96
	total_learning_steps: int = 1_000_000
	normalize_advantages: bool = True
	max_grad_norm: Optional[float] = 0.5
	log_every: int = 10
	checkpoint_every: int = 100
	max_seconds: Optional[float] = None

	def __post_init__(self) -> None:
		if not 0 < self.clip_ratio < 1:
			raise InvalidSpecError(f"clip_ratio must be in (0, 1), got {self.clip_ratio}")
		if not 0 <= self.gae_lambda <= 1:
			raise InvalidSpecError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
		if self.learning_rate <= 0:
			raise InvalidSpecError(f"learning_rate must be positive, got {self.learning_rate}")
		for name in ('n_envs', 'n_steps', 'epochs', 'minibatch_size', 'log_every', 'checkpoint_every'):
			if getattr(self, name) < 1:
				raise InvalidSpecError(f"{name} must be >= 1, got {getattr(self, name)}")
		if self.total_learning_steps < 0:
			raise InvalidSpecError(f"total_learning_steps must be >= 0, got {self.total_learning_steps}")
		if self.max_grad_norm is not None and self.max_grad_norm <= 0:
			raise InvalidSpecError(f"max_grad_norm must be positive, got {self.max_grad_norm}")

	def learning_rate_at(self, step: int) -> float:
		"""Linearly decayed learning rate; exactly 0 at ``total_learning_steps``."""
		if not self.anneal_lr or self.total_learning_steps == 0:
			return self.learning_rate
		frac = 1.0 - min(step, self.total_learning_steps) / self.total_learning_steps
		return self.learning_rate * frac


@dataclass(frozen=True)
class InferenceConfig(_DictMixin):
	"""Best-of-N sampling limits. ``step_cap=None`` derives the cap from the heuristic."""

	time_budget: float = 1.0
	max_rollouts: int = 64
	step_cap: Optional[int] = None
	seed: int = 0
	greedy: bool = False
	budget_from_heuristic: bool = False

	def __post_init__(self) -> None:
		if self.time_budget < 0:
			raise InvalidSpecError(f"time_budget must be >= 0, got {self.time_budget}")
		if self.max_rollouts < 1:
			raise InvalidSpecError(f"max_rollouts must be >= 1, got {self.max_rollouts}")
		if self.step_cap is not None and self.step_cap < 1:
			raise InvalidSpecError(f"step_cap must be >= 1, got {self.step_cap}")


@dataclass(frozen=True)
class TrainConfig(_DictMixin):
	chip: str = 'builtin:x50'
	n_max: Optional[int] = None
	n_gates_budget: int = 1275
	seed: int = 0
	episode_cap: Optional[int] = None
	episode_cap_factor: int = 4
	episode_cap_floor: int = 512
	reward: RewardConfig = field(default_factory=RewardConfig)
	embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
	network: NetworkConfig = field(default_factory=NetworkConfig)
	ppo: PpoConfig = field(default_factory=PpoConfig)

	def __post_init__(self) -> None:
		if self.n_gates_budget < 1:
			raise InvalidSpecError(f"n_gates_budget must be >= 1, got {self.n_gates_budget}")
		if self.n_max is not None and self.n_max < 2:
			raise InvalidSpecError(f"n_max must be >= 2, got {self.n_max}")
		if self.episode_cap is not None and self.episode_cap < 1:
			raise InvalidSpecError(f"episode_cap must be >= 1, got {self.episode_cap}")

	@classmethod
	def desk_scale(cls, **overrides) -> 'TrainConfig':
		"""Small X-chip preset (6 ions, 15-gate budget) that trains on a laptop."""
		base = dict(
			chip='builtin:x6',
			n_max=6,
			n_gates_budget=15,
			network=NetworkConfig(n_hidden=128, n_blocks=2),
			ppo=PpoConfig(n_envs=32, minibatch_size=256, total_learning_steps=50_000,
			              learning_rate=5e-4, max_seconds=7200.0),
		)
		base.update(overrides)
		return cls(**base)

	def with_ablation(self, name: str) -> 'TrainConfig':
		"""Return the config for one of the four ablations."""
		if name == 'linear':
			return dataclasses.replace(self, embedding=dataclasses.replace(self.embedding, encoding='linear'))
		if name == 'gamma-s':
			return dataclasses.replace(self, reward=dataclasses.replace(self.reward, gamma_s=self.reward.gamma))
		if name == 'no-shaping':
			return dataclasses.replace(self, reward=dataclasses.replace(self.reward, shaping_enabled=False))
		if name == 'naive':
			return dataclasses.replace(self, embedding=dataclasses.replace(self.embedding, representation='naive'))
		raise InvalidSpecError(f"Unknown ablation '{name}', choose from {ABLATIONS}")

	def save(self, path: str | Path) -> None:
		Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n', encoding='utf-8')


ABLATIONS = ('linear', 'gamma-s', 'no-shaping', 'naive')

_NESTED: Dict[tuple, type] = {
	('TrainConfig', 'reward'): RewardConfig,
	('TrainConfig', 'embedding'): EmbeddingConfig,
	('TrainConfig', 'network'): NetworkConfig,
	('TrainConfig', 'ppo'): PpoConfig,
}


def load_config(path: str | Path) -> TrainConfig:
	try:
		data = json.loads(Path(path).read_text(encoding='utf-8'))
	except (OSError, json.JSONDecodeError) as exc:
		raise InvalidSpecError(f"Cannot read config '{path}': {exc}") from exc
	config = TrainConfig.from_dict(data)
	logger.debug("Loaded training config from %s", path)
	return config
