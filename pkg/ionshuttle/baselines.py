"""Reference compilers: a greedy windowed heuristic and an exact uniform-cost oracle."""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import log_checkpoint
from .chip import (
	ActionKind,
	CCW,
	CW,
	ChipFamily,
	ChipSpec,
	ChipState,
	EMPTY,
	ZoneKind,
	apply_action,
	legal_actions,
)
from .circuit import Circuit, GateDag, build_dag
from .env import ShuttlingEnv
from .errors import ContractViolationError
from .schedule import Schedule, schedule_from_actions

logger = logging.getLogger('ionshuttle.baselines')

DEFAULT_WINDOW = 4
DEFAULT_CANDIDATES = 8
SEARCH_EXPANSIONS = 200_000


class _Stuck(Exception):
	"""The rule-based orchestration found no admissible move."""


class ActionTable:
	"""Reverse lookup from semantic moves to raw action indices."""

	def __init__(self, spec: ChipSpec):
		self.move: Dict[Tuple[int, int], int] = {}
		self.rotate: Dict[str, int] = {}
		self.ring_to: Dict[int, int] = {}
		self.to_ring: Dict[int, int] = {}
		for index, action in enumerate(spec.actions):
			if action.kind is ActionKind.MOVE:
				self.move[(action.source, action.destination)] = index
			elif action.kind is ActionKind.ROTATE:
				self.rotate[action.direction] = index
			elif action.kind is ActionKind.RING_TO_ZONE:
				self.ring_to[action.destination] = index
			else:
				self.to_ring[action.source] = index


def _zone_stack(spec: ChipSpec, state: ChipState, zone: int) -> List[int]:
	return [q for q in state.zone_contents(spec, zone) if q != EMPTY]


def _locate(spec: ChipSpec, state: ChipState, qubit: int) -> Tuple[int, int]:
	"""(zone index, slot within zone) of ``qubit``."""
	cell = state.cells.index(qubit)
	zone = spec.zone_of_cell[cell]
	return zone, cell - spec.zones[zone].offset


def _ring_distance(slot: int, size: int) -> int:
	return min(slot, size - slot)


def operand_distance(spec: ChipSpec, state: ChipState, qubits: Sequence[int]) -> int:
	"""Cheap estimate of the moves needed to bring ``qubits`` into compute."""
	total = 0
	for q in qubits:
		zone, slot = _locate(spec, state, q)
		if zone == spec.compute_zone:
			continue
		if zone == spec.ring_zone:
			total += 1 + _ring_distance(slot, spec.zones[zone].capacity)
		else:
			total += 1 + slot
	return total


class Orchestrator:
	"""Moves the operands of one gate into the compute zone of an env."""

	def __init__(self, spec: ChipSpec):
		self.spec = spec
		self.table = ActionTable(spec)
		self.max_rule_steps = 4 * spec.n_cells + 16

	def run(self, env: ShuttlingEnv, gid: int) -> List[int]:
		dag = env.state.dag
		if dag.executed[gid]:
			return []
		taken: List[int] = []
		try:
			if self.spec.family is ChipFamily.X:
				self._orchestrate_x(env, gid, taken)
			else:
				self._orchestrate_q(env, gid, taken)
		except _Stuck:
			logger.debug("Rule orchestration stuck on gate %d, falling back to search", gid)
			for action in _search_gate(self.spec, env.state.chip_state, dag.gates[gid].qubits):
				if dag.executed[gid]:
					break
				env.step(action)
				taken.append(action)
		if not dag.executed[gid]:
			raise ContractViolationError(f"Orchestration failed to execute gate {gid}")
		return taken

	def _step(self, env: ShuttlingEnv, action: int, taken: List[int]) -> None:
		if len(taken) > self.max_rule_steps:
			raise _Stuck()
		env.step(action)
		taken.append(action)

	def _storage_targets(self, state: ChipState, exclude: Set[int], avoid: Set[int]) -> List[int]:
		"""Storage registers with room, most free space first, then SPAM."""
		spec = self.spec
		options = []
		for index, zone in enumerate(spec.zones):
			if index in exclude or index == spec.compute_zone or zone.kind is ZoneKind.RING:
				continue
			free = zone.capacity - len(_zone_stack(spec, state, index))
			if free <= 0:
				continue
			rank = 0 if zone.kind is ZoneKind.STORAGE else 1
			options.append((rank, index in avoid, -free, index))
		return [index for *_, index in sorted(options)]

	def _orchestrate_x(self, env: ShuttlingEnv, gid: int, taken: List[int]) -> None:
		spec = self.spec
		dag = env.state.dag
		needed = set(dag.gates[gid].qubits)
		compute = spec.compute_zone
		while not dag.executed[gid]:
			state = env.state.chip_state
			in_compute = _zone_stack(spec, state, compute)
			if any(q not in needed for q in in_compute):
				targets = self._storage_targets(state, {compute}, set())
				if not targets:
					raise _Stuck()
				self._step(env, self.table.move[(compute, targets[0])], taken)
				continue
			pending = [q for q in dag.gates[gid].qubits if q not in in_compute]
			pending.sort(key=lambda q: _locate(spec, state, q)[1])
			ion = pending[0]
			zone, slot = _locate(spec, state, ion)
			if slot == 0:
				self._step(env, self.table.move[(zone, compute)], taken)
				continue
			other_zones = {_locate(spec, state, q)[0] for q in pending[1:]}
			targets = self._storage_targets(state, {zone}, other_zones)
			if not targets:
				raise _Stuck()
			self._step(env, self.table.move[(zone, targets[0])], taken)

	def _rotate_towards(self, env: ShuttlingEnv, slot: int, taken: List[int]) -> None:
		size = self.spec.zones[self.spec.ring_zone].capacity
		direction = CCW if slot <= size - slot else CW
		self._step(env, self.table.rotate[direction], taken)

	def _free_ring_head(self, env: ShuttlingEnv, taken: List[int]) -> None:
		spec = self.spec
		ring = spec.zones[spec.ring_zone]
		while True:
			slots = env.state.chip_state.zone_contents(spec, spec.ring_zone)
			if slots[0] == EMPTY:
				return
			empty = [i for i, q in enumerate(slots) if q == EMPTY]
			if not empty:
				raise _Stuck()
			target = min(empty, key=lambda i: (_ring_distance(i, ring.capacity), i))
			self._rotate_towards(env, target, taken)

	def _orchestrate_q(self, env: ShuttlingEnv, gid: int, taken: List[int]) -> None:
		spec = self.spec
		dag = env.state.dag
		needed = set(dag.gates[gid].qubits)
		compute = spec.compute_zone
		ring_size = spec.zones[spec.ring_zone].capacity
		while not dag.executed[gid]:
			state = env.state.chip_state
			in_compute = _zone_stack(spec, state, compute)
			if any(q not in needed for q in in_compute):
				self._free_ring_head(env, taken)
				self._step(env, self.table.to_ring[compute], taken)
				continue
			pending = [q for q in dag.gates[gid].qubits if q not in in_compute]

			def cost(q: int) -> int:
				zone, slot = _locate(spec, env.state.chip_state, q)
				return _ring_distance(slot, ring_size) if zone == spec.ring_zone else ring_size + slot

			ion = min(pending, key=cost)
			zone, slot = _locate(spec, state, ion)
			if zone == spec.ring_zone:
				if slot == 0:
					self._step(env, self.table.ring_to[compute], taken)
				else:
					self._rotate_towards(env, slot, taken)
				continue
			# ion sits in a non-ring zone: lift it (or whatever is above it) onto the ring
			self._free_ring_head(env, taken)
			self._step(env, self.table.to_ring[zone], taken)


def _search_gate(spec: ChipSpec, start: ChipState, qubits: Tuple[int, int],
                 max_expansions: int = SEARCH_EXPANSIONS) -> List[int]:
	"""A* over chip states until both ``qubits`` sit in the compute zone."""
	needed = set(qubits)
	compute = spec.compute_zone
	fast = min(spec.fast_rotation_duration, spec.default_duration)
	ring_size = spec.zones[spec.ring_zone].capacity if spec.ring_zone is not None else 0

	def bound(state: ChipState) -> float:
		moves = 0
		ring_max = 0
		blockers: Set[int] = set()
		for q in state.zone_contents(spec, compute):
			if q != EMPTY and q not in needed:
				moves += 1
		for q in needed:
			zone, slot = _locate(spec, state, q)
			if zone == compute:
				continue
			moves += 1
			if zone == spec.ring_zone:
				ring_max = max(ring_max, _ring_distance(slot, ring_size))
			else:
				contents = state.zone_contents(spec, zone)
				blockers.update(b for b in contents[:slot] if b not in needed)
		return (moves + len(blockers)) * spec.default_duration + ring_max * fast

	def goal(state: ChipState) -> bool:
		return needed <= set(state.zone_contents(spec, compute))

	counter = itertools.count()
	frontier = [(bound(start), 0.0, next(counter), start)]
	best = {start.cells: 0.0}
	parent: Dict[Tuple[int, ...], Tuple[Tuple[int, ...], int]] = {}
	expansions = 0
	while frontier:
		_, cost, _, state = heapq.heappop(frontier)
		if cost > best[state.cells]:
			continue
		if goal(state):
			path = []
			key = state.cells
			while key in parent:
				key, action = parent[key]
				path.append(action)
			return path[::-1]
		expansions += 1
		if expansions > max_expansions:
			break
		for action in sorted(legal_actions(spec, state, validate=False)):
			nxt, duration = apply_action(spec, state, action)
			new_cost = cost + duration
			if new_cost < best.get(nxt.cells, float('inf')):
				best[nxt.cells] = new_cost
				parent[nxt.cells] = (state.cells, action)
				heapq.heappush(frontier, (new_cost + bound(nxt), new_cost, next(counter), nxt))
	raise ContractViolationError(f"No orchestration found for qubits {qubits} within {max_expansions} expansions")


def candidate_orderings(dag: GateDag, spec: ChipSpec, state: ChipState,
                        n_g: int = DEFAULT_WINDOW, n_p: int = DEFAULT_CANDIDATES) -> List[Tuple[int, ...]]:
	"""Up to ``n_p`` orderings of the next ``n_g`` gates that respect the partial order.

	Partial orderings are expanded level by level; children are interleaved
	across parents so the kept set mixes different first choices. Gates are
	tried in order of (operand distance, gate id).
	"""
	length = min(n_g, dag.remaining_count)
	partials: List[Tuple[Tuple[int, ...], GateDag]] = [((), dag)]
	for _ in range(length):
		per_parent = []
		for prefix, sim in partials:
			front = sim.front_layer()
			front.sort(key=lambda g: (operand_distance(spec, state, sim.gates[g].qubits), g))
			children = []
			for gid in front:
				child = sim.copy()
				child.execute(gid)
				children.append((prefix + (gid,), child))
			per_parent.append(children)
		merged = []
		for rank in range(max((len(c) for c in per_parent), default=0)):
			for children in per_parent:
				if rank < len(children):
					merged.append(children[rank])
		partials = merged[:n_p]
	return [prefix for prefix, _ in partials]


def heuristic_compile(spec: ChipSpec, circuit: Circuit, n_g: int = DEFAULT_WINDOW,
                      n_p: int = DEFAULT_CANDIDATES, placement: Optional[ChipState] = None) -> Schedule:
	"""Windowed greedy compiler: serialize the next n_g gates, orchestrate ions, keep the cheapest window."""
	started = time.perf_counter()
	env = ShuttlingEnv(spec)
	env.load(circuit, placement)
	orchestrator = Orchestrator(spec)
	while not env.done:
		orderings = candidate_orderings(env.state.dag, spec, env.state.chip_state, n_g, n_p)
		best_cost = None
		best_actions: List[int] = []
		for order in orderings:
			trial = env.clone()
			actions: List[int] = []
			for gid in order:
				actions.extend(orchestrator.run(trial, gid))
			cost = trial.state.elapsed - env.state.elapsed
			if best_cost is None or cost < best_cost:
				best_cost = cost
				best_actions = actions
		for action in best_actions:
			env.step(action)
	return Schedule.from_env(env, 'heuristic', time.perf_counter() - started)


@dataclass
class OracleResult:
	schedule: Schedule
	proven_optimal: bool
	expanded_states: int


def canonicalize(cells: Sequence[int], remaining: Sequence[Tuple[int, int]],
                 executed_mask: Optional[int] = None) -> tuple:
	"""Search key invariant under qubit relabeling.

	Qubits are renamed by first use in the remaining gates (p-order); qubits
	without remaining gates are interchangeable and share one label. With
	``executed_mask`` given the raw (cells, mask) key is returned instead.
	"""
	if executed_mask is not None:
		return tuple(cells), executed_mask
	names: Dict[int, int] = {}
	for x, y in remaining:
		for q in (x, y):
			if q not in names:
				names[q] = len(names) + 1
	idle = len(names) + 1
	key_cells = tuple(EMPTY if q == EMPTY else names.get(q, idle) for q in cells)
	key_gates = tuple((names[x], names[y]) for x, y in remaining)
	return key_cells, key_gates


class _GateModel:
	"""Immutable DAG view with bitmask execution, for search."""

	def __init__(self, spec: ChipSpec, circuit: Circuit):
		dag = build_dag(circuit)
		self.spec = spec
		self.gates = [g.qubits for g in circuit.gates]
		self.pred_masks = [sum(1 << p for p in preds) for preds in dag.predecessors]
		self.full = (1 << len(self.gates)) - 1

	def settle(self, cells: Tuple[int, ...], mask: int) -> int:
		compute = {q for q in cells[self.spec.zones[self.spec.compute_zone].offset:
		                            self.spec.zones[self.spec.compute_zone].stop] if q != EMPTY}
		if len(compute) < 2:
			return mask
		changed = True
		while changed:
			changed = False
			for gid, (x, y) in enumerate(self.gates):
				bit = 1 << gid
				if mask & bit or (mask & self.pred_masks[gid]) != self.pred_masks[gid]:
					continue
				if x in compute and y in compute:
					mask |= bit
					changed = True
		return mask

	def remaining(self, mask: int) -> List[Tuple[int, int]]:
		return [g for gid, g in enumerate(self.gates) if not mask & (1 << gid)]


def exact_compile(spec: ChipSpec, circuit: Circuit, placement: Optional[ChipState] = None,
                  max_expansions: Optional[int] = None, time_limit: Optional[float] = None,
                  canonical: bool = True) -> OracleResult:
	"""Uniform-cost search over (chip state, executed gates) with edge weights F.

	On budget exhaustion the heuristic schedule is returned as the incumbent
	with ``proven_optimal=False``.
	"""
	started = time.perf_counter()
	env = ShuttlingEnv(spec)
	env.load(circuit, placement)
	start_cells = env.initial_state.cells
	model = _GateModel(spec, circuit)
	start_mask = model.settle(start_cells, 0)

	def key_of(cells, mask):
		if canonical:
			return canonicalize(cells, model.remaining(mask))
		return canonicalize(cells, (), mask)

	counter = itertools.count()
	start_key = key_of(start_cells, start_mask)
	frontier = [(0.0, next(counter), start_key, start_cells, start_mask)]
	dist = {start_key: 0.0}
	parent: Dict[tuple, Tuple[tuple, int]] = {}
	expansions = 0
	goal_key = None
	while frontier:
		cost, _, key, cells, mask = heapq.heappop(frontier)
		if cost > dist[key]:
			continue
		if mask == model.full:
			goal_key = key
			break
		if max_expansions is not None and expansions >= max_expansions:
			break
		if time_limit is not None and time.perf_counter() - started > time_limit:
			break
		expansions += 1
		state = ChipState(cells)
		for action in sorted(legal_actions(spec, state, validate=False)):
			nxt, duration = apply_action(spec, state, action)
			nmask = model.settle(nxt.cells, mask)
			nkey = key_of(nxt.cells, nmask)
			new_cost = cost + duration
			if new_cost < dist.get(nkey, float('inf')):
				dist[nkey] = new_cost
				parent[nkey] = (key, action)
				heapq.heappush(frontier, (new_cost, next(counter), nkey, nxt.cells, nmask))

	elapsed = time.perf_counter() - started
	if goal_key is None:
		schedule = heuristic_compile(spec, circuit, placement=env.initial_state)
		schedule.method = 'exact'
		schedule.compile_time = time.perf_counter() - started
		schedule.extras['incumbent'] = 'heuristic'
		log_checkpoint(logger, 'oracle.budget_exhausted', expansions=expansions,
		               elapsed_s=round(elapsed, 3), incumbent=schedule.total_duration)
		return OracleResult(schedule, proven_optimal=False, expanded_states=expansions)
	actions: List[int] = []
	node = goal_key
	while node in parent:
		node, action = parent[node]
		actions.append(action)
	actions.reverse()
	schedule = schedule_from_actions(spec, circuit, actions, 'exact', env.initial_state, elapsed)
	log_checkpoint(logger, 'oracle.solved', logging.DEBUG, expansions=expansions,
	               total_duration=schedule.total_duration, elapsed_s=round(elapsed, 3))
	return OracleResult(schedule, proven_optimal=True, expanded_states=expansions)
