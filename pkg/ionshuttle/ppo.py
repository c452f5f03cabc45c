"""PPO with SMDP-corrected GAE over batched shuttling environments.

A learning step is one rollout-buffer fill (n_envs x n_steps transitions)
followed by up to ``epochs`` passes of minibatch updates.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from . import log_checkpoint
from .baselines import heuristic_compile
from .checkpoint import save_checkpoint
from .chip import ChipSpec, ChipState, load_chip
from .circuit import Circuit
from .config import PpoConfig, TrainConfig
from .env import BatchedEnv, RandomProblemSource, ShuttlingEnv
from .errors import NumericError
from .networks import ActorCritic, gradients
from .representation import Observer

logger = logging.getLogger('ionshuttle.ppo')

__all__ = ['PpoConfig', 'RolloutBuffer', 'smdp_gae', 'ppo_loss', 'PpoTrainer', 'train', 'heuristic_episode_cap']


def smdp_gae(rewards: np.ndarray, durations: np.ndarray, values: np.ndarray, dones: np.ndarray,
             gamma: float, lam: float, last_values: np.ndarray,
             truncateds: Optional[np.ndarray] = None,
             truncation_values: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
	"""Advantages and return targets for arrays shaped (T,) or (T, N).

	delta_t = R_t + gamma^F_t V(s_{t+1}) - V(s_t)
	A_t = delta_t + (lam gamma)^F_t A_{t+1}

	Termination zeroes V(s_{t+1}) and cuts the recursion. Truncation
	bootstraps with ``truncation_values`` and also cuts the recursion.
	"""
	rewards = np.asarray(rewards, dtype=np.float64)
	squeeze = rewards.ndim == 1
	rewards = rewards.reshape(len(rewards), -1)
	shape = rewards.shape
	durations = np.asarray(durations, dtype=np.float64).reshape(shape)
	values = np.asarray(values, dtype=np.float64).reshape(shape)
	dones = np.asarray(dones, dtype=bool).reshape(shape)
	last_values = np.asarray(last_values, dtype=np.float64).reshape(shape[1])
	truncateds = np.zeros(shape, dtype=bool) if truncateds is None else np.asarray(truncateds, dtype=bool).reshape(shape)
	truncation_values = (np.zeros(shape) if truncation_values is None
	                     else np.asarray(truncation_values, dtype=np.float64).reshape(shape))
	for name, array in (('rewards', rewards), ('durations', durations), ('values', values),
	                    ('last_values', last_values)):
		if not np.isfinite(array).all():
			raise NumericError(f"Non-finite entries in {name}")
	if truncateds.any() and not np.isfinite(truncation_values[truncateds]).all():
		raise NumericError("Non-finite truncation bootstrap values")

	advantages = np.zeros(shape, dtype=np.float64)
	carry = np.zeros(shape[1], dtype=np.float64)
	n_steps = shape[0]
	for t in reversed(range(n_steps)):
		next_values = last_values if t == n_steps - 1 else values[t + 1]
		next_values = np.where(truncateds[t], truncation_values[t], next_values)
		next_values = np.where(dones[t], 0.0, next_values)
		discount = gamma ** durations[t]
		delta = rewards[t] + discount * next_values - values[t]
		cut = dones[t] | truncateds[t]
		carry = delta + np.where(cut, 0.0, (lam * gamma) ** durations[t] * carry)
		advantages[t] = carry
	targets = advantages + values
	if squeeze:
		return advantages[:, 0], targets[:, 0]
	return advantages, targets


class RolloutBuffer:
	"""Fixed (n_steps, n_envs) storage, filled once per learning step."""

	def __init__(self, n_steps: int, n_envs: int, obs_size: int, n_actions: int):
		self.n_steps = n_steps
		self.n_envs = n_envs
		self.observations = np.zeros((n_steps, n_envs, obs_size), dtype=np.float32)
		self.masks = np.zeros((n_steps, n_envs, n_actions), dtype=bool)
		self.actions = np.zeros((n_steps, n_envs), dtype=np.int64)
		self.log_probs = np.zeros((n_steps, n_envs), dtype=np.float32)
		self.base_rewards = np.zeros((n_steps, n_envs), dtype=np.float64)
		self.rewards = np.zeros((n_steps, n_envs), dtype=np.float64)
		self.durations = np.zeros((n_steps, n_envs), dtype=np.float64)
		self.values = np.zeros((n_steps, n_envs), dtype=np.float64)
		self.dones = np.zeros((n_steps, n_envs), dtype=bool)
		self.truncateds = np.zeros((n_steps, n_envs), dtype=bool)
		self.truncation_values = np.zeros((n_steps, n_envs), dtype=np.float64)
		self.last_values = np.zeros(n_envs, dtype=np.float64)
		self.advantages = np.zeros((n_steps, n_envs), dtype=np.float64)
		self.returns = np.zeros((n_steps, n_envs), dtype=np.float64)

	def compute_advantages(self, gamma: float, lam: float) -> None:
		self.advantages, self.returns = smdp_gae(
			self.rewards, self.durations, self.values, self.dones, gamma, lam, self.last_values,
			self.truncateds, self.truncation_values,
		)

	def flat(self) -> Dict[str, torch.Tensor]:
		total = self.n_steps * self.n_envs
		return {
			'observations': torch.from_numpy(self.observations.reshape(total, -1)),
			'masks': torch.from_numpy(self.masks.reshape(total, -1)),
			'actions': torch.from_numpy(self.actions.reshape(total)),
			'log_probs': torch.from_numpy(self.log_probs.reshape(total)),
			'advantages': torch.from_numpy(self.advantages.reshape(total).astype(np.float32)),
			'returns': torch.from_numpy(self.returns.reshape(total).astype(np.float32)),
		}


def ppo_loss(model: ActorCritic, batch: Dict[str, torch.Tensor], cfg: PpoConfig) -> Tuple[torch.Tensor, Dict[str, float]]:
	"""Clipped surrogate, value MSE and masked entropy bonus."""
	advantages = batch['advantages']
	if cfg.normalize_advantages and advantages.numel() > 1:
		advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
	dist = model.forward_policy(batch['observations'], batch['masks'])
	log_probs = dist.log_prob(batch['actions'])
	log_ratio = log_probs - batch['log_probs']
	ratio = log_ratio.exp()
	unclipped = ratio * advantages
	clipped = torch.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * advantages
	surrogate = torch.min(unclipped, clipped).mean()
	values = model.forward_value(batch['observations'])
	value_loss = ((values - batch['returns']) ** 2).mean()
	entropy = dist.entropy().mean()
	loss = -surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
	with torch.no_grad():
		diagnostics = {
			'policy_loss': float(-surrogate),
			'value_loss': float(value_loss),
			'entropy': float(entropy),
			'approx_kl': float(((ratio - 1.0) - log_ratio).mean()),
			'clip_fraction': float(((ratio - 1.0).abs() > cfg.clip_ratio).float().mean()),
		}
	return loss, diagnostics


def heuristic_episode_cap(spec: ChipSpec, factor: int = 4, floor: int = 512) -> Callable[[Circuit, ChipState], int]:
	"""Truncate after max(factor x heuristic steps, floor) actions."""

	def cap(circuit: Circuit, placement: ChipState) -> int:
		steps = len(heuristic_compile(spec, circuit, placement=placement).actions)
		return max(factor * steps, floor)

	return cap


@dataclass
class TrainResult:
	model: ActorCritic
	metrics: List[Dict[str, float]] = field(default_factory=list)
	learning_steps: int = 0
	checkpoint: Optional[Path] = None


class PpoTrainer:
	def __init__(self, config: TrainConfig, spec: Optional[ChipSpec] = None,
	             out_dir: Optional[str | Path] = None):
		self.config = config
		self.spec = spec or load_chip(config.chip)
		self.out_dir = Path(out_dir) if out_dir is not None else None
		self.observer = Observer(self.spec, config.embedding, config.n_gates_budget)
		torch.manual_seed(config.seed)
		self.generator = torch.Generator().manual_seed(config.seed)
		self.model = ActorCritic(self.observer.size, self.spec.n_actions,
		                         config.network.n_hidden, config.network.n_blocks, seed=config.seed)
		self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.ppo.learning_rate, eps=1e-5)
		source = RandomProblemSource(self.spec, config.n_gates_budget, config.n_max)
		if config.episode_cap is not None:
			cap = config.episode_cap
		else:
			cap = heuristic_episode_cap(self.spec, config.episode_cap_factor, config.episode_cap_floor)
		seeds = np.random.SeedSequence(config.seed).spawn(config.ppo.n_envs)
		envs = [ShuttlingEnv(self.spec, config.reward, source, np.random.default_rng(s), cap) for s in seeds]
		self.envs = BatchedEnv(envs, self.observer)
		self.buffer = RolloutBuffer(config.ppo.n_steps, config.ppo.n_envs, self.observer.size, self.spec.n_actions)
		self.learning_step = 0
		self._obs: Optional[np.ndarray] = None
		self._masks: Optional[np.ndarray] = None

	def _log_checkpoint(self, stage: str, level: int = logging.INFO, **details) -> None:
		log_checkpoint(logger, stage, level, **details)

	def collect(self) -> None:
		if self._obs is None:
			self._obs, self._masks = self.envs.reset()
		buf = self.buffer
		self.model.eval()
		with torch.no_grad():
			for t in range(buf.n_steps):
				obs = torch.from_numpy(self._obs)
				masks = torch.from_numpy(self._masks)
				dist = self.model.forward_policy(obs, masks)
				actions = dist.sample(self.generator)
				buf.observations[t] = self._obs
				buf.masks[t] = self._masks
				buf.actions[t] = actions.numpy()
				buf.log_probs[t] = dist.log_prob(actions).numpy()
				buf.values[t] = self.model.forward_value(obs).numpy()
				step = self.envs.step(actions.tolist())
				buf.rewards[t] = step.shaped_rewards
				buf.base_rewards[t] = step.base_rewards
				buf.durations[t] = step.durations
				buf.dones[t] = step.dones
				buf.truncateds[t] = step.truncateds
				buf.truncation_values[t] = 0.0
				if step.final_observations:
					rows = sorted(step.final_observations)
					final = torch.from_numpy(np.stack([step.final_observations[i] for i in rows]))
					buf.truncation_values[t, rows] = self.model.forward_value(final).numpy()
				self._obs, self._masks = step.observations, step.masks
			buf.last_values[:] = self.model.forward_value(torch.from_numpy(self._obs)).numpy()
		buf.compute_advantages(self.config.reward.gamma, self.config.ppo.gae_lambda)

	def update(self) -> Dict[str, float]:
		cfg = self.config.ppo
		data = self.buffer.flat()
		total = data['actions'].shape[0]
		size = min(cfg.minibatch_size, total)
		params = list(self.model.parameters())
		self.model.train()
		sums: Dict[str, float] = {}
		count = 0
		for epoch in range(cfg.epochs):
			order = torch.randperm(total, generator=self.generator)
			for start in range(0, total, size):
				idx = order[start:start + size]
				batch = {key: value[idx] for key, value in data.items()}
				holder = {}

				def loss_fn():
					loss, holder['diag'] = ppo_loss(self.model, batch, cfg)
					return loss

				grads = gradients(loss_fn, params, {'learning_step': self.learning_step, 'epoch': epoch, 'start': start})
				for param, grad in zip(params, grads):
					param.grad = grad
				if cfg.max_grad_norm is not None:
					torch.nn.utils.clip_grad_norm_(params, cfg.max_grad_norm)
				self.optimizer.step()
				self.optimizer.zero_grad(set_to_none=True)
				for key, value in holder['diag'].items():
					sums[key] = sums.get(key, 0.0) + value
				count += 1
		return {key: value / max(count, 1) for key, value in sums.items()}

	def save(self, name: str = 'checkpoint.pt') -> Optional[Path]:
		if self.out_dir is None:
			return None
		return save_checkpoint(self.out_dir / name, self.model, self.config, self.learning_step,
		                       self.spec.to_dict(), self.optimizer.state_dict())

	def train(self) -> TrainResult:
		cfg = self.config.ppo
		result = TrainResult(model=self.model)
		metrics_file = None
		if self.out_dir is not None:
			self.out_dir.mkdir(parents=True, exist_ok=True)
			self.config.save(self.out_dir / 'config.json')
			metrics_file = open(self.out_dir / 'metrics.jsonl', 'w', encoding='utf-8')
		self._log_checkpoint('train.start', chip=self.config.chip, obs_size=self.observer.size,
		                     n_actions=self.spec.n_actions, total_learning_steps=cfg.total_learning_steps)
		started = time.monotonic()
		window: List[Dict[str, float]] = []
		try:
			while self.learning_step < cfg.total_learning_steps:
				if cfg.max_seconds is not None and time.monotonic() - started >= cfg.max_seconds:
					self._log_checkpoint('train.time_limit', learning_step=self.learning_step)
					break
				lr = cfg.learning_rate_at(self.learning_step)
				for group in self.optimizer.param_groups:
					group['lr'] = lr
				try:
					self.collect()
					diagnostics = self.update()
				except NumericError:
					# params are still finite: the failing minibatch never stepped
					result.checkpoint = self.save()
					self._log_checkpoint('train.numeric_abort', logging.ERROR,
					                     learning_step=self.learning_step, checkpoint=str(result.checkpoint))
					raise
				self.learning_step += 1
				diagnostics['learning_rate'] = lr
				window.append(diagnostics)
				if self.learning_step % cfg.log_every == 0 or self.learning_step == cfg.total_learning_steps:
					row = self._metrics_row(window)
					window = []
					result.metrics.append(row)
					if metrics_file is not None:
						metrics_file.write(json.dumps(row, sort_keys=True) + '\n')
						metrics_file.flush()
					self._log_checkpoint('train.metrics', elapsed_s=round(time.monotonic() - started, 1), **row)
				if self.learning_step % cfg.checkpoint_every == 0:
					result.checkpoint = self.save()
			result.checkpoint = self.save() or result.checkpoint
		finally:
			if metrics_file is not None:
				metrics_file.close()
		result.learning_steps = self.learning_step
		self._log_checkpoint('train.done', learning_steps=self.learning_step,
		                     elapsed_s=round(time.monotonic() - started, 1))
		return result

	def _metrics_row(self, window: List[Dict[str, float]]) -> Dict[str, float]:
		episodes = self.envs.drain_completed()
		row: Dict[str, float] = {'learning_step': self.learning_step, 'episodes': len(episodes)}
		for key in window[0]:
			row[key] = float(np.mean([d[key] for d in window]))
		if episodes:
			row['solve_rate'] = float(np.mean([e.solved for e in episodes]))
			solved = [e.elapsed for e in episodes if e.solved]
			row['mean_episode_duration'] = float(np.mean(solved)) if solved else None
		return row


def train(config: TrainConfig, spec: Optional[ChipSpec] = None,
          out_dir: Optional[str | Path] = None) -> TrainResult:
	return PpoTrainer(config, spec, out_dir).train()
