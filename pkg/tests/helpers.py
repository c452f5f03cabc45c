"""Helpers shared by the ionshuttle tests."""

from ionshuttle.chip import ActionKind, ChipState


def move(spec, source, destination):
	"""Index of the MoveAcrossJunction action between two zone indices."""
	for index, action in enumerate(spec.actions):
		if action.kind is ActionKind.MOVE and action.source == source and action.destination == destination:
			return index
	raise KeyError((source, destination))


def random_state(spec, n_qubits, rng):
	"""Place qubits 1..n_qubits uniformly over zones with room, keeping stacks contiguous."""
	cells = [0] * spec.n_cells
	fill = [0] * len(spec.zones)
	for qubit in range(1, n_qubits + 1):
		open_zones = [i for i, zone in enumerate(spec.zones) if fill[i] < zone.capacity]
		zone_index = open_zones[int(rng.integers(len(open_zones)))]
		zone = spec.zones[zone_index]
		cells[zone.offset + fill[zone_index]] = qubit
		fill[zone_index] += 1
	return ChipState(tuple(cells))
