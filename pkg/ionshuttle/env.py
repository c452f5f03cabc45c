"""Shuttling SMDP: states, transitions, durations, base and shaped rewards.

Gate execution is zero-duration and automatic. After reset and after every
shuttling action all executable front-layer gates run until none is left.
"""

from __future__ import annotations

import copy
import logging
import math
import numbers
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .chip import ChipSpec, ChipState, EMPTY, action_mask, apply_action, legal_actions, validate_state
from .circuit import (
	Circuit,
	GateDag,
	as_rng,
	build_dag,
	default_placement,
	executable_gates,
	generate_random_problem,
)
from .config import RewardConfig
from .errors import CapacityError, ContractViolationError, InvalidCircuitError, NumericError

logger = logging.getLogger('ionshuttle.env')

__all__ = [
	'RewardConfig', 'EnvState', 'StepResult', 'ShuttlingEnv', 'BatchedEnv', 'BatchStep',
	'RandomProblemSource', 'FixedProblemSource', 'base_reward', 'potential', 'shaped_reward',
	'discounted_return',
]


@dataclass
class EnvState:
	chip_state: ChipState
	dag: GateDag
	elapsed: float = 0.0

	@property
	def terminal(self) -> bool:
		return self.dag.remaining_count == 0

	def copy(self) -> 'EnvState':
		return EnvState(self.chip_state, self.dag.copy(), self.elapsed)


@dataclass(frozen=True)
class StepResult:
	chip_state: ChipState
	duration: float
	base_reward: float
	shaped_reward: float
	shaping_term: float
	done: bool
	truncated: bool
	gates_executed: Tuple[int, ...]
	remaining_count: int

	@property
	def gates_executed_this_step(self) -> int:
		return len(self.gates_executed)


def base_reward(cfg: RewardConfig, duration: float) -> float:
	"""Integral of -c_r e^{-beta t} over the decision epoch: c_r (e^{-beta F} - 1) / beta."""
	if not duration > 0:
		raise ContractViolationError(f"Duration must be positive, got {duration}")
	if cfg.beta == 0:
		return -cfg.c_r * duration
	return cfg.c_r * math.expm1(-cfg.beta * duration) / cfg.beta


def potential(state: EnvState | GateDag | int) -> float:
	"""phi(s) = -(remaining gates); 0 on terminal states."""
	if isinstance(state, EnvState):
		return -float(state.dag.remaining_count)
	if isinstance(state, GateDag):
		return -float(state.remaining_count)
	return -float(state)


def _as_potential(value) -> float:
	if isinstance(value, numbers.Real) and not isinstance(value, bool):
		return float(value)
	return potential(value)


def shaping_term(cfg: RewardConfig, duration: float, state, next_state) -> float:
	if not cfg.shaping_enabled:
		return 0.0
	return cfg.gamma_s ** duration * _as_potential(next_state) - _as_potential(state)


def shaped_reward(cfg: RewardConfig, reward: float, duration: float, state, next_state) -> float:
	"""R' = R + gamma_s^F phi(s') - phi(s). ``state`` may be an EnvState or a potential value."""
	if not duration > 0:
		raise ContractViolationError(f"Duration must be positive, got {duration}")
	return reward + shaping_term(cfg, duration, state, next_state)


def discounted_return(rewards: Sequence[float], durations: Sequence[float], beta: float) -> float:
	"""G = sum_t e^{-beta * sum_{u<t} F_u} R_t."""
	if len(rewards) != len(durations):
		raise ValueError(f"Got {len(rewards)} rewards but {len(durations)} durations")
	total = 0.0
	clock = 0.0
	for reward, duration in zip(rewards, durations):
		total += math.exp(-beta * clock) * reward
		clock += duration
	return total


class ProblemSource(Protocol):
	def sample(self, rng: np.random.Generator) -> Tuple[Circuit, ChipState]:
		...


class RandomProblemSource:
	"""Training distribution; problems without gates are redrawn."""

	def __init__(self, spec: ChipSpec, n_gates_budget: int, n_max: Optional[int] = None):
		self.spec = spec
		self.n_gates_budget = n_gates_budget
		self.n_max = spec.n_max if n_max is None else n_max
		if self.n_max > spec.n_max:
			raise CapacityError(f"n_max={self.n_max} exceeds chip capacity {spec.n_max}")

	def sample(self, rng: np.random.Generator) -> Tuple[Circuit, ChipState]:
		while True:
			circuit, placement = generate_random_problem(self.spec, self.n_gates_budget, rng, self.n_max)
			if circuit.n_gates > 0:
				return circuit, placement


class FixedProblemSource:
	"""Always returns the same circuit; placement defaults to the first storage element."""

	def __init__(self, spec: ChipSpec, circuit: Circuit, placement: Optional[ChipState] = None):
		if circuit.num_qubits > spec.n_max:
			raise CapacityError(
				f"Circuit references {circuit.num_qubits} qubits, chip holds at most {spec.n_max}"
			)
		self.circuit = circuit
		self.placement = default_placement(spec, circuit.num_qubits) if placement is None else placement

	def sample(self, rng: np.random.Generator) -> Tuple[Circuit, ChipState]:
		return self.circuit, self.placement


def _check_problem(spec: ChipSpec, circuit: Circuit, placement: ChipState) -> None:
	if circuit.num_qubits > spec.n_max:
		raise CapacityError(f"Circuit references {circuit.num_qubits} qubits, chip holds at most {spec.n_max}")
	validate_state(spec, placement)
	present = set(placement.cells) - {EMPTY}
	missing = sorted({q for gate in circuit.gates for q in gate.qubits} - present)
	if missing:
		raise InvalidCircuitError(f"Qubits {missing} are used by the circuit but not placed on the chip")


class ShuttlingEnv:
	"""Single-owner SMDP instance.

	``episode_cap`` is a step count or a callable ``(circuit, placement) -> int``;
	``None`` disables truncation.
	"""

	def __init__(self, spec: ChipSpec, reward_cfg: Optional[RewardConfig] = None,
	             source: Optional[ProblemSource] = None,
	             seed: np.random.Generator | int | None = None,
	             episode_cap: int | Callable[[Circuit, ChipState], int] | None = None):
		self.spec = spec
		self.reward_cfg = reward_cfg or RewardConfig()
		self.source = source
		self.rng = as_rng(seed)
		self.episode_cap = episode_cap
		self.state: Optional[EnvState] = None
		self.circuit: Optional[Circuit] = None
		self.initial_state: Optional[ChipState] = None
		self.initial_remaining = 0
		self.steps = 0
		self.cap: Optional[int] = None
		self.truncated = False
		self.history: List[Tuple[int, float, Tuple[int, ...]]] = []
		self.initial_gates: Tuple[int, ...] = ()

	def reset(self, source: Optional[ProblemSource] = None,
	          rng: np.random.Generator | int | None = None) -> EnvState:
		source = source or self.source
		if source is None:
			raise ContractViolationError("reset() needs a problem source")
		if rng is not None:
			self.rng = as_rng(rng)
		circuit, placement = source.sample(self.rng)
		return self.load(circuit, placement)

	def load(self, circuit: Circuit, placement: Optional[ChipState] = None) -> EnvState:
		if placement is None:
			if circuit.num_qubits > self.spec.n_max:
				raise CapacityError(
					f"Circuit references {circuit.num_qubits} qubits, chip holds at most {self.spec.n_max}"
				)
			placement = default_placement(self.spec, circuit.num_qubits)
		_check_problem(self.spec, circuit, placement)
		self.circuit = circuit
		self.initial_state = placement
		self.state = EnvState(placement, build_dag(circuit), 0.0)
		self.initial_gates = self._execute_ready()
		self.initial_remaining = self.state.dag.remaining_count
		self.steps = 0
		self.truncated = False
		self.history = []
		if callable(self.episode_cap):
			self.cap = int(self.episode_cap(circuit, placement))
		else:
			self.cap = self.episode_cap
		return self.state

	def _execute_ready(self) -> Tuple[int, ...]:
		executed: List[int] = []
		dag = self.state.dag
		while True:
			ready = executable_gates(dag, self.state.chip_state, self.spec)
			if not ready:
				break
			for gid in sorted(ready):
				dag.execute(gid)
				executed.append(gid)
		return tuple(executed)

	@property
	def done(self) -> bool:
		return self.state is not None and self.state.terminal

	def legal_actions(self):
		self._require_state()
		return legal_actions(self.spec, self.state.chip_state, validate=False)

	def action_mask(self) -> np.ndarray:
		self._require_state()
		return action_mask(self.spec, self.state.chip_state)

	def _require_state(self) -> None:
		if self.state is None:
			raise ContractViolationError("Environment used before reset()")

	def step(self, action: int) -> StepResult:
		self._require_state()
		if self.state.terminal:
			raise ContractViolationError("step() called on a terminal state")
		if self.truncated:
			raise ContractViolationError("step() called on a truncated episode; reset first")
		phi = potential(self.state)
		chip_state, duration = apply_action(self.spec, self.state.chip_state, int(action))
		self.state.chip_state = chip_state
		executed = self._execute_ready()
		self.state.elapsed += duration
		self.steps += 1
		phi_next = potential(self.state)
		reward = base_reward(self.reward_cfg, duration)
		term = shaping_term(self.reward_cfg, duration, phi, phi_next)
		if not math.isfinite(reward + term):
			raise NumericError(f"Non-finite reward {reward} + {term} at step {self.steps}")
		done = self.state.terminal
		self.truncated = not done and self.cap is not None and self.steps >= self.cap
		self.history.append((int(action), duration, executed))
		return StepResult(
			chip_state=chip_state,
			duration=duration,
			base_reward=reward,
			shaped_reward=reward + term,
			shaping_term=term,
			done=done,
			truncated=self.truncated,
			gates_executed=executed,
			remaining_count=self.state.dag.remaining_count,
		)

	def clone(self) -> 'ShuttlingEnv':
		"""Independent copy for lookahead; shares the immutable spec and circuit."""
		other = ShuttlingEnv.__new__(ShuttlingEnv)
		other.spec = self.spec
		other.reward_cfg = self.reward_cfg
		other.source = self.source
		other.rng = copy.deepcopy(self.rng)
		other.episode_cap = self.episode_cap
		other.state = self.state.copy() if self.state is not None else None
		other.circuit = self.circuit
		other.initial_state = self.initial_state
		other.initial_remaining = self.initial_remaining
		other.initial_gates = self.initial_gates
		other.steps = self.steps
		other.cap = self.cap
		other.truncated = self.truncated
		other.history = list(self.history)
		return other


@dataclass
class BatchStep:
	observations: np.ndarray
	masks: np.ndarray
	base_rewards: np.ndarray
	shaped_rewards: np.ndarray
	durations: np.ndarray
	dones: np.ndarray
	truncateds: np.ndarray
	final_observations: dict = field(default_factory=dict)
	results: List[StepResult] = field(default_factory=list)


@dataclass(frozen=True, slots=True)
class EpisodeRecord:
	elapsed: float
	steps: int
	solved: bool
	n_gates: int


class BatchedEnv:
	"""N independent environments stepped in lockstep with auto-reset.

	``observer`` maps ``(chip_state, dag)`` to a flat float vector. Members
	step serially, so results only depend on seeds and actions.
	"""

	def __init__(self, envs: Sequence[ShuttlingEnv], observer: Callable[[ChipState, GateDag], np.ndarray]):
		if not envs:
			raise ValueError("BatchedEnv needs at least one environment")
		self.envs = list(envs)
		self.observer = observer
		self.completed: List[EpisodeRecord] = []

	def __len__(self) -> int:
		return len(self.envs)

	def _observe(self, env: ShuttlingEnv) -> np.ndarray:
		return self.observer(env.state.chip_state, env.state.dag)

	def reset(self) -> Tuple[np.ndarray, np.ndarray]:
		for env in self.envs:
			env.reset()
		return self.observations(), self.masks()

	def observations(self) -> np.ndarray:
		return np.stack([self._observe(env) for env in self.envs]).astype(np.float32)

	def masks(self) -> np.ndarray:
		return np.stack([env.action_mask() for env in self.envs])

	def drain_completed(self) -> List[EpisodeRecord]:
		records, self.completed = self.completed, []
		return records

	def step(self, actions: Sequence[int]) -> BatchStep:
		if len(actions) != len(self.envs):
			raise ValueError(f"Expected {len(self.envs)} actions, got {len(actions)}")
		results = []
		final_observations = {}
		for index, (env, action) in enumerate(zip(self.envs, actions)):
			result = env.step(int(action))
			results.append(result)
			if result.done or result.truncated:
				if result.truncated:
					final_observations[index] = self._observe(env).astype(np.float32)
				self.completed.append(EpisodeRecord(
					elapsed=env.state.elapsed,
					steps=env.steps,
					solved=result.done,
					n_gates=env.circuit.n_gates,
				))
				env.reset()
		return BatchStep(
			observations=self.observations(),
			masks=self.masks(),
			base_rewards=np.array([r.base_reward for r in results], dtype=np.float64),
			shaped_rewards=np.array([r.shaped_reward for r in results], dtype=np.float64),
			durations=np.array([r.duration for r in results], dtype=np.float64),
			dones=np.array([r.done for r in results], dtype=bool),
			truncateds=np.array([r.truncated for r in results], dtype=bool),
			final_observations=final_observations,
			results=results,
		)
