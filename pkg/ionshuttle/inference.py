"""Best-of-N stochastic inference with the trained policy."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import torch

from . import log_checkpoint
from .baselines import heuristic_compile
from .checkpoint import load_checkpoint
from .chip import ChipSpec, ChipState
from .circuit import Circuit
from .config import EmbeddingConfig, InferenceConfig
from .env import ShuttlingEnv
from .errors import BudgetExhaustedError, InvalidSpecError
from .networks import ActorCritic
from .representation import Observer
from .schedule import Schedule

logger = logging.getLogger('ionshuttle.inference')

__all__ = ['InferenceConfig', 'RolloutRecord', 'RlCompiler', 'rl_compile', 'load_compiler']

FALLBACK_STEP_CAP = 4096
STEP_CAP_FACTOR = 8
MIN_HEURISTIC_BUDGET = 1.0


@dataclass(frozen=True, slots=True)
class RolloutRecord:
	index: int
	seconds: float
	total_duration: Optional[float]
	steps: int


class RlCompiler:
	def __init__(self, model: ActorCritic, spec: ChipSpec, embedding: EmbeddingConfig, n_gates_budget: int):
		self.model = model.eval()
		self.spec = spec
		self.observer = Observer(spec, embedding, n_gates_budget)
		if self.observer.size != model.obs_size:
			raise InvalidSpecError(
				f"Checkpoint expects observations of length {model.obs_size}, chip gives {self.observer.size}"
			)
		if spec.n_actions != model.n_actions:
			raise InvalidSpecError(f"Checkpoint has {model.n_actions} actions, chip has {spec.n_actions}")

	def _log_checkpoint(self, stage: str, level: int = logging.INFO, **details) -> None:
		log_checkpoint(logger, stage, level, **details)

	def rollout(self, env: ShuttlingEnv, circuit: Circuit, placement: Optional[ChipState],
	            generator: torch.Generator, step_cap: int, greedy: bool) -> bool:
		env.load(circuit, placement)
		with torch.no_grad():
			while not env.done and env.steps < step_cap:
				obs = torch.from_numpy(self.observer(env.state.chip_state, env.state.dag)).unsqueeze(0)
				mask = torch.from_numpy(env.action_mask()).unsqueeze(0)
				dist = self.model.forward_policy(obs, mask)
				action = dist.mode() if greedy else dist.sample(generator)
				env.step(int(action.item()))
		return env.done

	def compile(self, circuit: Circuit, cfg: Optional[InferenceConfig] = None,
	            placement: Optional[ChipState] = None) -> Schedule:
		"""Sample rollouts until the budget runs out; keep the shortest total duration.

		The wall clock starts at the first rollout. At least one rollout always
		runs; ties go to the lowest rollout index.
		"""
		cfg = cfg or InferenceConfig()
		step_cap = cfg.step_cap
		budget = cfg.time_budget
		if step_cap is None or cfg.budget_from_heuristic:
			reference = heuristic_compile(self.spec, circuit, placement=placement)
			if step_cap is None:
				step_cap = STEP_CAP_FACTOR * reference.steps if reference.steps > 0 else FALLBACK_STEP_CAP
			if cfg.budget_from_heuristic:
				budget = max(reference.compile_time, MIN_HEURISTIC_BUDGET)
		max_rollouts = 1 if cfg.greedy else cfg.max_rollouts
		env = ShuttlingEnv(self.spec)
		best: Optional[Schedule] = None
		best_index = -1
		records: List[RolloutRecord] = []
		started = time.perf_counter()
		for index in range(max_rollouts):
			if index > 0 and time.perf_counter() - started >= budget:
				break
			rollout_start = time.perf_counter()
			generator = torch.Generator().manual_seed(cfg.seed + index)
			solved = self.rollout(env, circuit, placement, generator, step_cap, cfg.greedy)
			seconds = time.perf_counter() - rollout_start
			total = env.state.elapsed if solved else None
			records.append(RolloutRecord(index, seconds, total, env.steps))
			if solved and (best is None or total < best.total_duration):
				best = Schedule.from_env(env, 'rl')
				best_index = index
		elapsed = time.perf_counter() - started
		valid = sum(1 for r in records if r.total_duration is not None)
		self._log_checkpoint('rl_compile.done', rollouts=len(records), valid=valid,
		                     best=best.total_duration if best else None, elapsed_s=round(elapsed, 3))
		if best is None:
			raise BudgetExhaustedError(
				f"No rollout finished within the {step_cap}-step cap ({len(records)} rollouts, {elapsed:.2f}s)"
			)
		best.compile_time = elapsed
		best.extras.update({
			'rollouts': len(records),
			'valid_rollouts': valid,
			'best_rollout': best_index,
			'step_cap': step_cap,
			'time_budget': budget,
			'rollout_seconds': [r.seconds for r in records],
			'rollout_durations': [r.total_duration for r in records],
		})
		return best


def load_compiler(path: str | Path, spec: Optional[ChipSpec] = None) -> RlCompiler:
	checkpoint = load_checkpoint(path)
	if spec is None:
		spec = ChipSpec.from_dict(checkpoint.chip)
	return RlCompiler(checkpoint.model, spec, checkpoint.config.embedding, checkpoint.config.n_gates_budget)


def rl_compile(checkpoint: str | Path | RlCompiler, spec: ChipSpec, circuit: Circuit,
               cfg: Optional[InferenceConfig] = None, placement: Optional[ChipState] = None) -> Schedule:
	compiler = checkpoint if isinstance(checkpoint, RlCompiler) else load_compiler(checkpoint, spec)
	return compiler.compile(circuit, cfg, placement)
