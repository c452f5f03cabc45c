"""Schedules emitted by every compiler, their JSON form and the replay check."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .chip import ChipSpec, ChipState
from .circuit import Circuit
from .env import ShuttlingEnv
from .errors import ContractViolationError, InvalidSpecError

logger = logging.getLogger('ionshuttle.schedule')


@dataclass(frozen=True, slots=True)
class ScheduleStep:
	action: int
	duration: float
	gates: Tuple[int, ...] = ()


@dataclass
class Schedule:
	actions: List[ScheduleStep]
	total_duration: float
	method: str
	compile_time: float = 0.0
	initial_gates: Tuple[int, ...] = ()
	placement: Optional[Tuple[int, ...]] = None
	n_gates: int = 0
	extras: Dict[str, Any] = field(default_factory=dict)

	@property
	def steps(self) -> int:
		return len(self.actions)

	@property
	def action_indices(self) -> List[int]:
		return [step.action for step in self.actions]

	@classmethod
	def from_env(cls, env: ShuttlingEnv, method: str, compile_time: float = 0.0) -> 'Schedule':
		steps = [ScheduleStep(a, d, tuple(g)) for a, d, g in env.history]
		total = 0.0
		for step in steps:
			total += step.duration
		return cls(
			actions=steps,
			total_duration=total,
			method=method,
			compile_time=compile_time,
			initial_gates=tuple(env.initial_gates),
			placement=tuple(env.initial_state.cells),
			n_gates=env.circuit.n_gates,
		)

	def to_dict(self) -> Dict[str, Any]:
		return {
			'method': self.method,
			'total_duration': self.total_duration,
			'steps': self.steps,
			'compile_time': self.compile_time,
			'n_gates': self.n_gates,
			'initial_gates': list(self.initial_gates),
			'placement': list(self.placement) if self.placement is not None else None,
			'actions': [
				{'action': s.action, 'duration': s.duration, 'gates': list(s.gates)} for s in self.actions
			],
			'extras': self.extras,
		}

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'Schedule':
		try:
			return cls(
				actions=[ScheduleStep(int(a['action']), float(a['duration']), tuple(a.get('gates', ())))
				         for a in data['actions']],
				total_duration=float(data['total_duration']),
				method=str(data['method']),
				compile_time=float(data.get('compile_time', 0.0)),
				initial_gates=tuple(data.get('initial_gates', ())),
				placement=tuple(data['placement']) if data.get('placement') is not None else None,
				n_gates=int(data.get('n_gates', 0)),
				extras=dict(data.get('extras', {})),
			)
		except (KeyError, TypeError, ValueError) as exc:
			raise InvalidSpecError(f"Malformed schedule document: {exc}") from exc

	def dumps(self) -> str:
		return json.dumps(self.to_dict(), indent=2)

	def save(self, path: str | Path) -> None:
		Path(path).write_text(self.dumps() + '\n', encoding='utf-8')

	@classmethod
	def load(cls, path: str | Path) -> 'Schedule':
		try:
			data = json.loads(Path(path).read_text(encoding='utf-8'))
		except (OSError, json.JSONDecodeError) as exc:
			raise InvalidSpecError(f"Cannot read schedule '{path}': {exc}") from exc
		return cls.from_dict(data)


def schedule_from_actions(spec: ChipSpec, circuit: Circuit, actions: Sequence[int], method: str,
                          placement: Optional[ChipState] = None, compile_time: float = 0.0) -> Schedule:
	env = ShuttlingEnv(spec)
	env.load(circuit, placement)
	for action in actions:
		env.step(action)
	if not env.done:
		raise ContractViolationError(f"{method} actions leave {env.state.dag.remaining_count} gates unexecuted")
	return Schedule.from_env(env, method, compile_time)


def replay_schedule(spec: ChipSpec, circuit: Circuit, schedule: Schedule,
                    placement: Optional[ChipState] = None) -> ShuttlingEnv:
	"""Re-run ``schedule`` from the initial state; raise if anything disagrees."""
	if placement is None and schedule.placement is not None:
		placement = ChipState(tuple(schedule.placement))
	env = ShuttlingEnv(spec)
	env.load(circuit, placement)
	if tuple(env.initial_gates) != tuple(schedule.initial_gates):
		raise ContractViolationError(
			f"Initial gate executions {env.initial_gates} != recorded {schedule.initial_gates}"
		)
	total = 0.0
	for index, step in enumerate(schedule.actions):
		result = env.step(step.action)
		if result.duration != step.duration:
			raise ContractViolationError(f"Step {index}: duration {result.duration} != recorded {step.duration}")
		if tuple(result.gates_executed) != tuple(step.gates):
			raise ContractViolationError(
				f"Step {index}: executed gates {result.gates_executed} != recorded {step.gates}"
			)
		total += result.duration
	if not env.done:
		raise ContractViolationError(f"Schedule ends with {env.state.dag.remaining_count} gates unexecuted")
	if total != schedule.total_duration:
		raise ContractViolationError(f"Total duration {total} != recorded {schedule.total_duration}")
	return env
