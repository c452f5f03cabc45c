"""Chip topologies, discrete cell layout, shuttling actions and movement semantics.

Two chip families are supported:

- X-chip: stack-like registers (compute, SPAM, two storages) joined by one
  X-junction. Every ordered pair of registers is a MoveAcrossJunction action.
- Q-chip: a storage ring ("carousel") joined by one junction to a compute and
  a SPAM zone. Only whole-ring rotations move stored ions.

Cells are numbered per zone starting with the slot next to the junction, in the
zone order of the ChipSpec (X-chip: compute, SPAM, storage A, storage B; Q-chip:
ring, compute, SPAM). Public cell indices are 1-based; ``ChipState.cells`` is a
plain 0-based tuple.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolationError, InvalidSpecError, MaskedActionError

logger = logging.getLogger('ionshuttle.chip')

EMPTY = 0
DEFAULT_DURATION = 1.0
DEFAULT_FAST_ROTATION = 0.25
DEFAULT_STORAGE_CAPACITY = 25

CW = 'cw'
CCW = 'ccw'


class ZoneKind(str, Enum):
	COMPUTE = 'compute'
	SPAM = 'spam'
	STORAGE = 'storage'
	RING = 'ring'


class ChipFamily(str, Enum):
	X = 'x'
	Q = 'q'


class ActionKind(str, Enum):
	MOVE = 'move'
	ROTATE = 'rotate'
	RING_TO_ZONE = 'ring_to_zone'
	ZONE_TO_RING = 'zone_to_ring'


DEFAULT_CAPACITY: Dict[ZoneKind, int] = {
	ZoneKind.COMPUTE: 2,
	ZoneKind.SPAM: 1,
}


@dataclass(frozen=True, slots=True)
class Zone:
	"""A register of the chip; ``offset`` is the 0-based junction-adjacent cell."""

	kind: ZoneKind
	capacity: int
	offset: int
	name: str

	@property
	def stop(self) -> int:
		return self.offset + self.capacity

	@property
	def cells(self) -> range:
		return range(self.offset, self.stop)


@dataclass(frozen=True, slots=True)
class ActionDef:
	"""One raw shuttling action. ``source``/``destination`` are zone indices."""

	kind: ActionKind
	source: Optional[int] = None
	destination: Optional[int] = None
	direction: Optional[str] = None


@dataclass(frozen=True)
class ChipSpec:
	"""Immutable chip description shared by every environment on that chip."""

	family: ChipFamily
	zones: Tuple[Zone, ...]
	actions: Tuple[ActionDef, ...]
	default_duration: float = DEFAULT_DURATION
	fast_rotation_duration: float = DEFAULT_DURATION
	n_cells: int = field(init=False)
	compute_zone: int = field(init=False)
	ring_zone: Optional[int] = field(init=False)
	zone_of_cell: Tuple[int, ...] = field(init=False)

	def __post_init__(self) -> None:
		compute = [i for i, zone in enumerate(self.zones) if zone.kind is ZoneKind.COMPUTE]
		if len(compute) != 1:
			raise InvalidSpecError(f"A chip needs exactly one compute zone, got {len(compute)}")
		rings = [i for i, zone in enumerate(self.zones) if zone.kind is ZoneKind.RING]
		if self.family is ChipFamily.Q and len(rings) != 1:
			raise InvalidSpecError(f"A Q-chip needs exactly one ring, got {len(rings)}")
		if self.family is ChipFamily.X and rings:
			raise InvalidSpecError("An X-chip cannot contain a ring zone")
		if self.default_duration <= 0 or self.fast_rotation_duration <= 0:
			raise InvalidSpecError(
				f"Durations must be positive, got default={self.default_duration} "
				f"fast_rotation={self.fast_rotation_duration}"
			)
		zone_of_cell: List[int] = []
		for index, zone in enumerate(self.zones):
			if zone.capacity < 1:
				raise InvalidSpecError(f"Zone '{zone.name}' capacity must be >= 1, got {zone.capacity}")
			if zone.offset != len(zone_of_cell):
				raise InvalidSpecError(f"Zone '{zone.name}' offset {zone.offset} breaks the cell layout")
			zone_of_cell.extend([index] * zone.capacity)
		object.__setattr__(self, 'n_cells', len(zone_of_cell))
		object.__setattr__(self, 'compute_zone', compute[0])
		object.__setattr__(self, 'ring_zone', rings[0] if rings else None)
		object.__setattr__(self, 'zone_of_cell', tuple(zone_of_cell))

	@property
	def n_actions(self) -> int:
		return len(self.actions)

	@property
	def compute_cells(self) -> range:
		return self.zones[self.compute_zone].cells

	@property
	def storage_zones(self) -> Tuple[int, ...]:
		"""Zones that hold the initial placement of a problem."""
		if self.family is ChipFamily.Q:
			return (self.ring_zone,)
		return tuple(i for i, zone in enumerate(self.zones) if zone.kind is ZoneKind.STORAGE)

	@property
	def n_max(self) -> int:
		"""Maximum number of ions, determined by the storage capacity."""
		return sum(self.zones[i].capacity for i in self.storage_zones)

	def action_label(self, action: int) -> str:
		a = self.actions[action]
		if a.kind is ActionKind.MOVE:
			return f"move {self.zones[a.source].name}->{self.zones[a.destination].name}"
		if a.kind is ActionKind.ROTATE:
			return f"rotate {a.direction}"
		if a.kind is ActionKind.RING_TO_ZONE:
			return f"ring->{self.zones[a.destination].name}"
		return f"{self.zones[a.source].name}->ring"

	def to_dict(self) -> Dict[str, Any]:
		return {
			'family': self.family.value,
			'zones': [{'kind': zone.kind.value, 'capacity': zone.capacity} for zone in self.zones],
			'durations': {
				'default': self.default_duration,
				'fast_rotation': self.fast_rotation_duration,
			},
		}

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'ChipSpec':
		try:
			family = ChipFamily(data['family'])
			zones = [(ZoneKind(z['kind']), int(z['capacity'])) for z in data['zones']]
		except (KeyError, TypeError, ValueError) as exc:
			raise InvalidSpecError(f"Malformed chip document: {exc}") from exc
		durations = data.get('durations', {})
		default = float(durations.get('default', DEFAULT_DURATION))
		fast = float(durations.get('fast_rotation', default))
		return make_chip(family, zones, default_duration=default, fast_rotation_duration=fast)


@dataclass(frozen=True, slots=True)
class ChipState:
	"""Cell -> qubit mapping K; ``cells[i]`` is the qubit in cell i+1 or EMPTY."""

	cells: Tuple[int, ...]

	@classmethod
	def from_mapping(cls, mapping: Sequence[Optional[int]]) -> 'ChipState':
		return cls(tuple(EMPTY if q is None else int(q) for q in mapping))

	def qubit_at(self, cell: int) -> int:
		"""Qubit in the 1-based ``cell`` (EMPTY if none)."""
		return self.cells[cell - 1]

	def cell_map(self) -> Dict[int, int]:
		"""qubit -> 1-based cell index."""
		return {q: i + 1 for i, q in enumerate(self.cells) if q != EMPTY}

	def cell_of(self, qubit: int) -> Optional[int]:
		try:
			return self.cells.index(qubit) + 1
		except ValueError:
			return None

	@property
	def qubits(self) -> Tuple[int, ...]:
		return tuple(sorted(q for q in self.cells if q != EMPTY))

	def zone_contents(self, spec: ChipSpec, zone: int) -> Tuple[int, ...]:
		z = spec.zones[zone]
		return self.cells[z.offset:z.stop]


def _zone_name(kind: ZoneKind, index_of_kind: int) -> str:
	if kind is ZoneKind.STORAGE:
		return f"storage_{chr(ord('a') + index_of_kind)}"
	return kind.value if index_of_kind == 0 else f"{kind.value}_{index_of_kind}"


def make_chip(family: ChipFamily, zones: Sequence[Tuple[ZoneKind, int]],
              default_duration: float = DEFAULT_DURATION,
              fast_rotation_duration: Optional[float] = None) -> ChipSpec:
	"""Lay out cells for ``zones`` (in order) and derive the raw action set."""
	fast = default_duration if fast_rotation_duration is None else fast_rotation_duration
	if fast > default_duration:
		raise InvalidSpecError(
			f"Fast rotation duration {fast} exceeds default duration {default_duration}"
		)
	built: List[Zone] = []
	seen: Dict[ZoneKind, int] = {}
	offset = 0
	for kind, capacity in zones:
		if capacity < 1:
			raise InvalidSpecError(f"Zone capacity must be >= 1, got {kind.value}={capacity}")
		built.append(Zone(kind, capacity, offset, _zone_name(kind, seen.get(kind, 0))))
		seen[kind] = seen.get(kind, 0) + 1
		offset += capacity

	actions: List[ActionDef] = []
	if family is ChipFamily.X:
		for source in range(len(built)):
			for destination in range(len(built)):
				if source != destination:
					actions.append(ActionDef(ActionKind.MOVE, source=source, destination=destination))
	else:
		actions.append(ActionDef(ActionKind.ROTATE, direction=CW))
		actions.append(ActionDef(ActionKind.ROTATE, direction=CCW))
		others = [i for i, zone in enumerate(built) if zone.kind is not ZoneKind.RING]
		actions.extend(ActionDef(ActionKind.RING_TO_ZONE, destination=i) for i in others)
		actions.extend(ActionDef(ActionKind.ZONE_TO_RING, source=i) for i in others)

	return ChipSpec(
		family=family,
		zones=tuple(built),
		actions=tuple(actions),
		default_duration=default_duration,
		fast_rotation_duration=fast,
	)


def build_x_chip(storage_capacity_each: int = DEFAULT_STORAGE_CAPACITY,
                 spam_capacity: int = 1,
                 storage_capacities: Optional[Sequence[int]] = None,
                 duration: float = DEFAULT_DURATION) -> ChipSpec:
	"""Four registers joined by an X-junction: compute(2), SPAM, storage A, storage B."""
	capacities = list(storage_capacities) if storage_capacities is not None else [storage_capacity_each] * 2
	if any(c < 1 for c in capacities):
		raise InvalidSpecError(f"Storage capacity must be >= 1, got {capacities}")
	if spam_capacity < 1:
		raise InvalidSpecError(f"SPAM capacity must be >= 1, got {spam_capacity}")
	zones = [
		(ZoneKind.COMPUTE, DEFAULT_CAPACITY[ZoneKind.COMPUTE]),
		(ZoneKind.SPAM, spam_capacity),
	] + [(ZoneKind.STORAGE, c) for c in capacities]
	return make_chip(ChipFamily.X, zones, default_duration=duration)


def build_q_chip(ring_capacity: int = 2 * DEFAULT_STORAGE_CAPACITY,
                 spam_capacity: int = 1,
                 fast_rotation_duration: float = DEFAULT_FAST_ROTATION,
                 default_duration: float = DEFAULT_DURATION) -> ChipSpec:
	"""Storage ring joined by one junction to compute(2) and SPAM."""
	if ring_capacity < 2:
		raise InvalidSpecError(f"Ring capacity must be >= 2, got {ring_capacity}")
	if spam_capacity < 1:
		raise InvalidSpecError(f"SPAM capacity must be >= 1, got {spam_capacity}")
	if not 0 < fast_rotation_duration <= default_duration:
		raise InvalidSpecError(
			f"Fast rotation duration must be in (0, {default_duration}], got {fast_rotation_duration}"
		)
	zones = [
		(ZoneKind.RING, ring_capacity),
		(ZoneKind.COMPUTE, DEFAULT_CAPACITY[ZoneKind.COMPUTE]),
		(ZoneKind.SPAM, spam_capacity),
	]
	return make_chip(ChipFamily.Q, zones, default_duration=default_duration,
	                 fast_rotation_duration=fast_rotation_duration)


BUILTIN_CHIPS = {
	'x50': lambda: build_x_chip(DEFAULT_STORAGE_CAPACITY),
	'x6': lambda: build_x_chip(3),
	'q50': lambda: build_q_chip(50, spam_capacity=1),
	'q50-spam3': lambda: build_q_chip(50, spam_capacity=3),
}


def load_chip(source: str) -> ChipSpec:
	"""Resolve ``builtin:<name>`` or a JSON chip document path."""
	if source.startswith('builtin:'):
		name = source.split(':', 1)[1]
		if name not in BUILTIN_CHIPS:
			raise InvalidSpecError(f"Unknown builtin chip '{name}', choose from {sorted(BUILTIN_CHIPS)}")
		return BUILTIN_CHIPS[name]()
	path = Path(source)
	try:
		data = json.loads(path.read_text(encoding='utf-8'))
	except (OSError, json.JSONDecodeError) as exc:
		raise InvalidSpecError(f"Cannot read chip document '{source}': {exc}") from exc
	return ChipSpec.from_dict(data)


def empty_state(spec: ChipSpec) -> ChipState:
	return ChipState((EMPTY,) * spec.n_cells)


def zone_occupancy(spec: ChipSpec, state: ChipState) -> List[int]:
	cells = state.cells
	return [sum(1 for i in zone.cells if cells[i] != EMPTY) for zone in spec.zones]


def compute_qubits(spec: ChipSpec, state: ChipState) -> Tuple[int, ...]:
	return tuple(q for q in state.zone_contents(spec, spec.compute_zone) if q != EMPTY)


def validate_state(spec: ChipSpec, state: ChipState) -> None:
	"""Raise ContractViolationError if ``state`` breaks a chip invariant."""
	cells = state.cells
	if len(cells) != spec.n_cells:
		raise ContractViolationError(f"State has {len(cells)} cells, chip has {spec.n_cells}")
	occupied = [q for q in cells if q != EMPTY]
	if any(q < 0 for q in occupied):
		raise ContractViolationError(f"Negative qubit label in {cells}")
	if len(set(occupied)) != len(occupied):
		raise ContractViolationError(f"Duplicate qubit labels in {cells}")
	for zone in spec.zones:
		if zone.kind is ZoneKind.RING:
			continue
		contents = cells[zone.offset:zone.stop]
		filled = sum(1 for q in contents if q != EMPTY)
		if any(q == EMPTY for q in contents[:filled]):
			raise ContractViolationError(f"Zone '{zone.name}' is not a contiguous stack: {contents}")


def legal_actions(spec: ChipSpec, state: ChipState, validate: bool = True) -> FrozenSet[int]:
	"""Indices of the actions permitted in ``state``; never empty."""
	if validate:
		validate_state(spec, state)
	counts = zone_occupancy(spec, state)
	ring_head = state.cells[spec.zones[spec.ring_zone].offset] if spec.ring_zone is not None else EMPTY
	legal = []
	for index, action in enumerate(spec.actions):
		if _is_legal(spec, action, counts, ring_head):
			legal.append(index)
	if not legal:
		raise ContractViolationError(f"No legal action in state {state.cells}")
	return frozenset(legal)


def action_mask(spec: ChipSpec, state: ChipState) -> np.ndarray:
	mask = np.zeros(spec.n_actions, dtype=bool)
	mask[list(legal_actions(spec, state, validate=False))] = True
	return mask


def _is_legal(spec: ChipSpec, action: ActionDef, counts: List[int], ring_head: int) -> bool:
	if action.kind is ActionKind.MOVE:
		return counts[action.source] > 0 and counts[action.destination] < spec.zones[action.destination].capacity
	if action.kind is ActionKind.ROTATE:
		return True
	if action.kind is ActionKind.RING_TO_ZONE:
		return ring_head != EMPTY and counts[action.destination] < spec.zones[action.destination].capacity
	return counts[action.source] > 0 and ring_head == EMPTY


def _pop(cells: List[int], zone: Zone) -> int:
	"""Remove the junction-adjacent ion; the ions behind it move up."""
	ion = cells[zone.offset]
	cells[zone.offset:zone.stop - 1] = cells[zone.offset + 1:zone.stop]
	cells[zone.stop - 1] = EMPTY
	return ion


def _push(cells: List[int], zone: Zone, ion: int) -> None:
	"""Insert ``ion`` next to the junction; stored ions move one slot back."""
	cells[zone.offset + 1:zone.stop] = cells[zone.offset:zone.stop - 1]
	cells[zone.offset] = ion


def apply_action(spec: ChipSpec, state: ChipState, action: int) -> Tuple[ChipState, float]:
	"""Deterministic transition; returns the next state and its duration in steps."""
	if not 0 <= action < spec.n_actions:
		raise MaskedActionError(f"Action index {action} out of range [0, {spec.n_actions})")
	a = spec.actions[action]
	counts = zone_occupancy(spec, state)
	ring = spec.zones[spec.ring_zone] if spec.ring_zone is not None else None
	ring_head = state.cells[ring.offset] if ring is not None else EMPTY
	if not _is_legal(spec, a, counts, ring_head):
		raise MaskedActionError(f"Action '{spec.action_label(action)}' is masked in state {state.cells}")

	cells = list(state.cells)
	duration = spec.default_duration
	if a.kind is ActionKind.MOVE:
		_push(cells, spec.zones[a.destination], _pop(cells, spec.zones[a.source]))
	elif a.kind is ActionKind.ROTATE:
		slots = cells[ring.offset:ring.stop]
		rotated = [slots[-1]] + slots[:-1] if a.direction == CW else slots[1:] + [slots[0]]
		cells[ring.offset:ring.stop] = rotated
		if slots[0] == EMPTY and rotated[0] == EMPTY:
			duration = spec.fast_rotation_duration
	elif a.kind is ActionKind.RING_TO_ZONE:
		cells[ring.offset] = EMPTY
		_push(cells, spec.zones[a.destination], ring_head)
	else:
		cells[ring.offset] = _pop(cells, spec.zones[a.source])
	return ChipState(tuple(cells)), duration
