"""Tests for chip topologies, action masks and movement semantics."""

import json

import numpy as np
import pytest

from ionshuttle.chip import (
	ActionKind, ChipFamily, ChipSpec, ChipState, EMPTY, ZoneKind,
	action_mask, apply_action, build_q_chip, build_x_chip, empty_state,
	legal_actions, load_chip, make_chip, validate_state,
)
from ionshuttle.errors import ContractViolationError, InvalidSpecError, MaskedActionError

from .helpers import move, random_state


class TestBuildXChip:
	"""Test X-chip construction."""

	def test_figure_sized_chip(self):
		"""Storage 4 each gives the 11-cell layout."""
		spec = build_x_chip(4)
		assert spec.n_cells == 11
		assert spec.family is ChipFamily.X

	def test_minimal_chip(self):
		"""Storage 1 each gives 5 cells and all 12 ordered register pairs."""
		spec = build_x_chip(1)
		assert spec.n_cells == 5
		assert spec.n_actions == 12
		assert all(a.kind is ActionKind.MOVE for a in spec.actions)

	def test_fifty_ion_chip(self):
		"""Storage 25 each holds 50 ions in 53 cells."""
		spec = build_x_chip(25)
		assert spec.n_max == 50
		assert spec.n_cells == 53

	def test_zone_order(self):
		"""Zones are compute, SPAM, storage A, storage B."""
		spec = build_x_chip(3)
		kinds = [zone.kind for zone in spec.zones]
		assert kinds == [ZoneKind.COMPUTE, ZoneKind.SPAM, ZoneKind.STORAGE, ZoneKind.STORAGE]
		assert [zone.capacity for zone in spec.zones] == [2, 1, 3, 3]

	def test_custom_capacities(self):
		"""Unequal storages and a larger SPAM zone are supported."""
		spec = build_x_chip(spam_capacity=3, storage_capacities=[2, 5])
		assert spec.n_cells == 2 + 3 + 2 + 5
		assert spec.n_max == 7

	@pytest.mark.parametrize('kwargs', [
		{'storage_capacity_each': 0},
		{'spam_capacity': 0},
		{'storage_capacities': [3, 0]},
		{'duration': 0.0},
	])
	def test_invalid_capacities(self, kwargs):
		"""Non-positive capacities or durations are rejected."""
		with pytest.raises(InvalidSpecError):
			build_x_chip(**kwargs)


class TestBuildQChip:
	"""Test Q-chip construction."""

	def test_five_slot_ring(self):
		"""Ring 5 + compute 2 + SPAM 1 = 8 cells and six actions."""
		spec = build_q_chip(5, 1, 0.25)
		assert spec.n_cells == 8
		assert spec.n_actions == 6
		assert spec.fast_rotation_duration == 0.25
		assert spec.n_max == 5

	def test_uniform_duration_chip(self):
		"""fast == default collapses to a uniform chip."""
		spec = build_q_chip(2, 1, 1.0)
		state = empty_state(spec)
		for action in legal_actions(spec, state):
			_, duration = apply_action(spec, state, action)
			assert duration == 1.0

	def test_modified_spam(self):
		"""SPAM capacity 3 variant."""
		spec = load_chip('builtin:q50-spam3')
		assert spec.zones[spec.ring_zone].capacity == 50
		assert [z.capacity for z in spec.zones if z.kind is ZoneKind.SPAM] == [3]

	@pytest.mark.parametrize('kwargs', [
		{'ring_capacity': 1},
		{'spam_capacity': 0},
		{'fast_rotation_duration': 0.0},
		{'fast_rotation_duration': 2.0},
	])
	def test_invalid(self, kwargs):
		"""Invalid ring or duration parameters raise."""
		with pytest.raises(InvalidSpecError):
			build_q_chip(**kwargs)


class TestLegalActions:
	"""Test the action mask."""

	def test_all_ions_in_storage(self):
		"""Only moves out of non-empty registers are legal."""
		spec = build_x_chip(4)
		state = ChipState((0, 0, 0, 1, 2, 3, 0, 0, 0, 0, 0))
		legal = legal_actions(spec, state)
		storage_a = 2
		for index in legal:
			assert spec.actions[index].source == storage_a
		assert move(spec, storage_a, 0) in legal
		assert move(spec, 0, 1) not in legal

	def test_ring_full(self):
		"""A full ring blocks moving the compute ion back."""
		spec = build_q_chip(5, 1, 0.25)
		state = ChipState((1, 2, 3, 4, 5, 6, 0, 0))
		legal = legal_actions(spec, state)
		compute_to_ring = next(i for i, a in enumerate(spec.actions)
		                       if a.kind is ActionKind.ZONE_TO_RING and a.source == spec.compute_zone)
		assert compute_to_ring not in legal

	def test_full_storages_match_brute_force(self):
		"""Mask equals the enumeration of (source non-empty, destination not full)."""
		spec = build_x_chip(1)
		state = ChipState((1, 2, 0, 3, 4))
		occupancy = [2, 0, 1, 1]
		expected = {
			i for i, a in enumerate(spec.actions)
			if occupancy[a.source] > 0 and occupancy[a.destination] < spec.zones[a.destination].capacity
		}
		assert legal_actions(spec, state) == frozenset(expected)
		assert all(spec.actions[i].destination != spec.compute_zone for i in expected)

	def test_mask_vector(self):
		"""Boolean vector form agrees with the set."""
		spec = build_x_chip(3)
		state = ChipState((0, 0, 0, 1, 2, 0, 3, 0, 0))
		mask = action_mask(spec, state)
		assert mask.dtype == bool
		assert set(np.flatnonzero(mask)) == set(legal_actions(spec, state))

	def test_invalid_state(self):
		"""A gap inside a register is a contract violation."""
		spec = build_x_chip(3)
		with pytest.raises(ContractViolationError):
			legal_actions(spec, ChipState((0, 0, 0, 0, 1, 0, 0, 0, 0)))
		with pytest.raises(ContractViolationError):
			validate_state(spec, ChipState((1, 1, 0, 0, 0, 0, 0, 0, 0)))


class TestApplyAction:
	"""Test transitions and durations."""

	def test_storage_to_compute_compacts(self, eleven_cell_chip, eleven_cell_state):
		"""Clearing compute then pulling from the 5-cell storage shifts the stack toward the junction."""
		compute, small, large = 0, 1, 2
		state, duration = apply_action(eleven_cell_chip, eleven_cell_state, move(eleven_cell_chip, compute, small))
		assert duration == 1.0
		assert state.cells[:4] == (1, 0, 4, 0)
		state, _ = apply_action(eleven_cell_chip, state, move(eleven_cell_chip, large, compute))
		assert state.qubit_at(1) == 3
		assert state.qubit_at(2) == 1
		assert state.qubit_at(5) == 5
		assert state.qubit_at(6) == EMPTY

	def test_lifo_insertion(self):
		"""An incoming ion takes the junction slot and pushes the register back."""
		spec = build_x_chip(3)
		state = ChipState((1, 0, 0, 2, 0, 0, 0, 0, 0))
		state, _ = apply_action(spec, state, move(spec, 0, 2))
		assert state.zone_contents(spec, 2) == (1, 2, 0)

	def test_empty_ring_rotation_is_fast(self):
		"""Rotating an empty ring costs the fast duration and changes nothing."""
		spec = build_q_chip(5, 1, 0.25)
		state = empty_state(spec)
		for direction in ('cw', 'ccw'):
			index = next(i for i, a in enumerate(spec.actions) if a.direction == direction)
			nxt, duration = apply_action(spec, state, index)
			assert nxt == state
			assert duration == 0.25

	def test_rotation_durations(self):
		"""Clockwise rotation with empty junction slot and empty incoming slot is fast."""
		spec = build_q_chip(5, 1, 0.25)
		state = ChipState((0, 1, 2, 3, 0, 0, 0, 0))
		cw = next(i for i, a in enumerate(spec.actions) if a.direction == 'cw')
		ccw = next(i for i, a in enumerate(spec.actions) if a.direction == 'ccw')
		nxt, duration = apply_action(spec, state, cw)
		assert duration == 0.25
		assert nxt.cells[:5] == (0, 0, 1, 2, 3)
		nxt, duration = apply_action(spec, state, ccw)
		assert duration == 1.0
		assert nxt.cells[:5] == (1, 2, 3, 0, 0)

	def test_rotations_are_inverse(self, rng):
		"""CW then CCW, and CCW then CW, restore any ring occupancy exactly."""
		spec = build_q_chip(5, 1, 0.25)
		cw = next(i for i, a in enumerate(spec.actions) if a.direction == 'cw')
		ccw = next(i for i, a in enumerate(spec.actions) if a.direction == 'ccw')
		for _ in range(200):
			n_ions = int(rng.integers(1, 6))
			ring = rng.permutation(list(range(1, n_ions + 1)) + [0] * (5 - n_ions))
			state = ChipState(tuple(int(q) for q in ring) + (0, 0, 0))
			assert {cw, ccw} <= legal_actions(spec, state)
			for first, second in ((cw, ccw), (ccw, cw)):
				middle, _ = apply_action(spec, state, first)
				restored, _ = apply_action(spec, middle, second)
				assert restored == state

	def test_masked_action_raises(self, eleven_cell_chip, eleven_cell_state):
		"""SPAM -> compute is masked while compute is full."""
		with pytest.raises(MaskedActionError):
			apply_action(eleven_cell_chip, eleven_cell_state, move(eleven_cell_chip, 3, 0))
		with pytest.raises(MaskedActionError):
			apply_action(eleven_cell_chip, eleven_cell_state, eleven_cell_chip.n_actions)

	@pytest.mark.parametrize('chip', ['builtin:x6', 'q_small'])
	def test_random_walk_invariants(self, chip, rng):
		"""Conservation, mask soundness, stack invariant and the duration set hold on random walks."""
		spec = build_q_chip(5, 1, 0.25) if chip == 'q_small' else load_chip(chip)
		for _ in range(20):
			state = random_state(spec, int(rng.integers(1, spec.n_max + 1)), rng)
			for _ in range(50):
				legal = legal_actions(spec, state)
				for index in range(spec.n_actions):
					if index in legal:
						continue
					with pytest.raises(MaskedActionError):
						apply_action(spec, state, index)
				action = sorted(legal)[int(rng.integers(len(legal)))]
				nxt, duration = apply_action(spec, state, action)
				assert sorted(nxt.cells) == sorted(state.cells)
				assert duration in (spec.fast_rotation_duration, spec.default_duration)
				validate_state(spec, nxt)
				assert apply_action(spec, state, action) == (nxt, duration)
				state = nxt


class TestChipDocuments:
	"""Test chip JSON documents."""

	@pytest.mark.parametrize('name', ['x50', 'x6', 'q50', 'q50-spam3'])
	def test_round_trip(self, name):
		"""to_dict/from_dict reproduces the chip."""
		spec = load_chip(f'builtin:{name}')
		assert ChipSpec.from_dict(spec.to_dict()) == spec

	def test_load_from_file(self, tmp_path):
		"""A JSON document on disk loads like a builtin."""
		path = tmp_path / 'chip.json'
		path.write_text(json.dumps(build_q_chip(7, 3, 0.5).to_dict()))
		spec = load_chip(str(path))
		assert spec.zones[spec.ring_zone].capacity == 7
		assert spec.fast_rotation_duration == 0.5

	def test_unknown_builtin(self):
		"""Unknown builtin names raise InvalidSpecError."""
		with pytest.raises(InvalidSpecError):
			load_chip('builtin:y12')

	def test_malformed_document(self, tmp_path):
		"""Bad kinds raise InvalidSpecError."""
		path = tmp_path / 'chip.json'
		path.write_text(json.dumps({'family': 'x', 'zones': [{'kind': 'teleporter', 'capacity': 2}]}))
		with pytest.raises(InvalidSpecError):
			load_chip(str(path))

	def test_single_compute_zone_required(self):
		"""A chip without compute zone is rejected."""
		with pytest.raises(InvalidSpecError):
			make_chip(ChipFamily.X, [(ZoneKind.STORAGE, 2), (ZoneKind.SPAM, 1)])

	def test_action_labels(self):
		"""Labels name the zones involved."""
		spec = build_q_chip(5)
		labels = [spec.action_label(i) for i in range(spec.n_actions)]
		assert labels[0] == 'rotate cw'
		assert 'ring->compute' in labels
		assert 'compute->ring' in labels
