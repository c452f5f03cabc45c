"""Agent observations built from (ChipState, GateDag).

The proposed encoding never looks at qubit labels: each cell row holds an
occupied flag and, per lookahead depth d, the cell of the other operand of
that qubit's gate at depth d. The naive encoding keeps raw labels and only
serves as an ablation.
"""

from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from .chip import ChipSpec, ChipState, EMPTY
from .circuit import GateDag
from .config import EmbeddingConfig

logger = logging.getLogger('ionshuttle.representation')

__all__ = ['EmbeddingConfig', 'DIAMOND', 'encode', 'sinusoidal', 'linear', 'observe', 'observe_naive', 'Observer']

# Entry value for "no cell" in the encoding matrix; real cells are 1-based.
DIAMOND = 0


def encode(chip_state: ChipState, dag: GateDag, k_lookahead: int) -> np.ndarray:
	"""Encoding matrix M, shape (n_cells, 1 + k_lookahead), int64.

	Column 0 is the occupied flag; column 1 + d is the 1-based cell holding
	the partner of the cell's qubit in its depth-d gate, or DIAMOND.
	"""
	cells = chip_state.cells
	location = chip_state.cell_map()
	matrix = np.zeros((len(cells), 1 + k_lookahead), dtype=np.int64)
	for index, qubit in enumerate(cells):
		if qubit == EMPTY:
			continue
		matrix[index, 0] = 1
		# depths strictly increase along a qubit chain, so k pending gates suffice
		for gid in dag.pending_on(qubit, limit=k_lookahead):
			depth = dag.depth[gid]
			if depth >= k_lookahead:
				break
			if matrix[index, 1 + depth] != DIAMOND:
				continue
			gate = dag.gates[gid]
			partner = gate.y if gate.x == qubit else gate.x
			matrix[index, 1 + depth] = location.get(partner, DIAMOND)
	return matrix


def sinusoidal(x: Optional[float], x_max: float, b: int) -> np.ndarray:
	"""(x_norm, cos(x_norm pi 2^i), sin(x_norm pi 2^i)) for i < b; ``None`` embeds to zeros."""
	if not x_max > 0:
		raise ValueError(f"x_max must be positive, got {x_max}")
	if x is None:
		return np.zeros(2 * b + 1, dtype=np.float64)
	return _sinusoidal_array(np.array([x], dtype=np.float64), np.array([True]), x_max, b)[0]


def linear(x: Optional[float], x_max: float) -> np.ndarray:
	if not x_max > 0:
		raise ValueError(f"x_max must be positive, got {x_max}")
	if x is None:
		return np.zeros(1, dtype=np.float64)
	return np.array([min(max(x / x_max, 0.0), 1.0)], dtype=np.float64)


def _sinusoidal_array(values: np.ndarray, valid: np.ndarray, x_max: float, b: int) -> np.ndarray:
	x_norm = np.clip(values / x_max, 0.0, 1.0)[..., None]
	angles = x_norm * (math.pi * (2.0 ** np.arange(b)))
	out = np.concatenate([x_norm, np.cos(angles), np.sin(angles)], axis=-1)
	out[~valid] = 0.0
	return out


def _linear_array(values: np.ndarray, valid: np.ndarray, x_max: float) -> np.ndarray:
	out = np.clip(values / x_max, 0.0, 1.0)[..., None]
	out[~valid] = 0.0
	return out


def observe(chip_state: ChipState, dag: GateDag, cfg: EmbeddingConfig,
            n_cells: int, n_gates_budget: int) -> np.ndarray:
	"""Flattened embedded M followed by the embedded remaining-gate count."""
	matrix = encode(chip_state, dag, cfg.k_lookahead)
	cell_x_max = cfg.cell_x_max or float(n_cells)
	total_x_max = cfg.total_x_max or float(n_gates_budget)
	partners = matrix[:, 1:].astype(np.float64)
	valid = matrix[:, 1:] != DIAMOND
	remaining = np.array([float(dag.remaining_count)])
	if cfg.encoding == 'linear':
		cells = _linear_array(partners, valid, cell_x_max)
		total = _linear_array(remaining, np.array([True]), total_x_max)
	else:
		cells = _sinusoidal_array(partners, valid, cell_x_max, cfg.b_cell)
		total = _sinusoidal_array(remaining, np.array([True]), total_x_max, cfg.b_total)
	rows = np.concatenate([matrix[:, :1].astype(np.float64), cells.reshape(len(matrix), -1)], axis=1)
	return np.concatenate([rows.reshape(-1), total.reshape(-1)])


def observe_naive(chip_state: ChipState, dag: GateDag, n_gates_budget: Optional[int] = None) -> np.ndarray:
	"""v_q (label per cell) followed by v_g (remaining gates as label pairs, zero padded)."""
	v_q = np.asarray(chip_state.cells, dtype=np.float64)
	remaining = dag.remaining_gates()
	slots = len(remaining) if n_gates_budget is None else n_gates_budget
	if len(remaining) > slots:
		logger.debug("Naive observation drops %d gates beyond the %d-gate budget", len(remaining) - slots, slots)
		remaining = remaining[:slots]
	v_g = np.zeros(2 * slots, dtype=np.float64)
	for position, gid in enumerate(remaining):
		gate = dag.gates[gid]
		v_g[2 * position] = gate.x
		v_g[2 * position + 1] = gate.y
	return np.concatenate([v_q, v_g])


class Observer:
	"""Observation function bound to one chip and embedding config."""

	def __init__(self, spec: ChipSpec, cfg: Optional[EmbeddingConfig] = None, n_gates_budget: int = 1275):
		self.spec = spec
		self.cfg = cfg or EmbeddingConfig()
		self.n_gates_budget = n_gates_budget
		n_cells = spec.n_cells
		k = self.cfg.k_lookahead
		if self.cfg.representation == 'naive':
			self.size = n_cells + 2 * n_gates_budget
		elif self.cfg.encoding == 'linear':
			self.size = n_cells * (1 + k) + 1
		else:
			self.size = n_cells * (1 + k * (2 * self.cfg.b_cell + 1)) + (2 * self.cfg.b_total + 1)

	def __call__(self, chip_state: ChipState, dag: GateDag) -> np.ndarray:
		if self.cfg.representation == 'naive':
			vector = observe_naive(chip_state, dag, self.n_gates_budget)
		else:
			vector = observe(chip_state, dag, self.cfg, self.spec.n_cells, self.n_gates_budget)
		return vector.astype(np.float32)
