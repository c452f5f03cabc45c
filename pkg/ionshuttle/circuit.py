"""Two-qubit interaction circuits, their dependency DAG and problem generators.

Two gates commute iff they act on distinct qubits, so the DAG only needs the
per-qubit predecessor chain: every gate depends on the previous gate touching
each of its operands.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .chip import ChipSpec, ChipState, EMPTY, compute_qubits
from .errors import CapacityError, DependencyViolationError, InvalidCircuitError

logger = logging.getLogger('ionshuttle.circuit')


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
	if isinstance(rng, np.random.Generator):
		return rng
	return np.random.default_rng(rng)


@dataclass(frozen=True, slots=True)
class Gate:
	x: int
	y: int

	@property
	def qubits(self) -> Tuple[int, int]:
		return (self.x, self.y)


@dataclass(frozen=True)
class Circuit:
	"""Sequence p of two-qubit gates over qubits 1..num_qubits."""

	gates: Tuple[Gate, ...]
	num_qubits: int

	def __post_init__(self) -> None:
		for index, gate in enumerate(self.gates):
			if gate.x == gate.y:
				raise InvalidCircuitError(f"Gate {index} acts twice on qubit {gate.x}")
			for q in gate.qubits:
				if not 1 <= q <= self.num_qubits:
					raise InvalidCircuitError(
						f"Gate {index} uses qubit {q} outside 1..{self.num_qubits}"
					)

	@classmethod
	def from_pairs(cls, pairs: Iterable[Sequence[int]], num_qubits: Optional[int] = None) -> 'Circuit':
		gates = tuple(Gate(int(x), int(y)) for x, y in pairs)
		if num_qubits is None:
			num_qubits = max((max(g.x, g.y) for g in gates), default=0)
		return cls(gates, num_qubits)

	@property
	def n_gates(self) -> int:
		return len(self.gates)

	def pairs(self) -> List[Tuple[int, int]]:
		return [(g.x, g.y) for g in self.gates]

	def relabel(self, mapping: Mapping[int, int]) -> 'Circuit':
		return Circuit(tuple(Gate(mapping[g.x], mapping[g.y]) for g in self.gates), self.num_qubits)

	@classmethod
	def parse(cls, text: str, num_qubits: Optional[int] = None) -> 'Circuit':
		"""Parse the pairs-list format: one ``x y`` gate per line, ``#`` comments."""
		pairs = []
		for lineno, raw in enumerate(text.splitlines(), start=1):
			line = raw.split('#', 1)[0].strip()
			if not line:
				continue
			fields = line.split()
			if len(fields) != 2:
				raise InvalidCircuitError(f"Line {lineno}: expected 'x y', got {raw!r}")
			try:
				pairs.append((int(fields[0]), int(fields[1])))
			except ValueError as exc:
				raise InvalidCircuitError(f"Line {lineno}: non-integer qubit label in {raw!r}") from exc
		return cls.from_pairs(pairs, num_qubits)

	@classmethod
	def load(cls, path: str | Path) -> 'Circuit':
		return cls.parse(Path(path).read_text(encoding='utf-8'))

	def dumps(self) -> str:
		header = f"# {self.num_qubits} qubits, {self.n_gates} two-qubit gates\n"
		return header + ''.join(f"{g.x} {g.y}\n" for g in self.gates)


class GateDag:
	"""Dependency DAG with per-gate depth and execution bookkeeping.

	Gate ids are positions in p, which is already a topological order.
	"""

	def __init__(self, circuit: Circuit) -> None:
		self.circuit = circuit
		self.gates = circuit.gates
		n = len(self.gates)
		self.predecessors: List[Tuple[int, ...]] = []
		self.successors: List[List[int]] = [[] for _ in range(n)]
		self.qubit_chains: Dict[int, List[int]] = {}
		last: Dict[int, int] = {}
		for gid, gate in enumerate(self.gates):
			preds = tuple(sorted({last[q] for q in gate.qubits if q in last}))
			self.predecessors.append(preds)
			for p in preds:
				self.successors[p].append(gid)
			for q in gate.qubits:
				last[q] = gid
				self.qubit_chains.setdefault(q, []).append(gid)
		self.executed: List[bool] = [False] * n
		self.remaining_count = n
		self._chain_head: Dict[int, int] = {q: 0 for q in self.qubit_chains}
		self.depth: List[int] = [0] * n
		for gid in range(n):
			preds = self.predecessors[gid]
			self.depth[gid] = 1 + max(self.depth[p] for p in preds) if preds else 0
		self._front: Set[int] = {gid for gid in range(n) if self.depth[gid] == 0}

	def copy(self) -> 'GateDag':
		clone = GateDag.__new__(GateDag)
		clone.circuit = self.circuit
		clone.gates = self.gates
		clone.predecessors = self.predecessors
		clone.successors = self.successors
		clone.qubit_chains = self.qubit_chains
		clone.executed = list(self.executed)
		clone.remaining_count = self.remaining_count
		clone._chain_head = dict(self._chain_head)
		clone.depth = list(self.depth)
		clone._front = set(self._front)
		return clone

	@property
	def done(self) -> bool:
		return self.remaining_count == 0

	def front_layer(self) -> List[int]:
		return sorted(self._front)

	def remaining_gates(self) -> List[int]:
		return [gid for gid, ex in enumerate(self.executed) if not ex]

	def pending_on(self, qubit: int, limit: Optional[int] = None) -> List[int]:
		"""Unexecuted gates on ``qubit`` in p-order (their depths strictly increase)."""
		chain = self.qubit_chains.get(qubit, [])
		head = self._chain_head.get(qubit, 0)
		stop = len(chain) if limit is None else min(len(chain), head + limit)
		return chain[head:stop]

	def _recompute(self, gid: int) -> int:
		live = [self.depth[p] for p in self.predecessors[gid] if not self.executed[p]]
		return 1 + max(live) if live else 0

	def execute(self, gid: int) -> None:
		if self.executed[gid]:
			raise DependencyViolationError(f"Gate {gid} was already executed")
		if gid not in self._front:
			raise DependencyViolationError(
				f"Gate {gid} {self.gates[gid].qubits} has unexecuted predecessors (depth {self.depth[gid]})"
			)
		self.executed[gid] = True
		self.remaining_count -= 1
		self._front.discard(gid)
		for q in self.gates[gid].qubits:
			self._chain_head[q] += 1
		heap = list(self.successors[gid])
		heapq.heapify(heap)
		seen = set(heap)
		while heap:
			u = heapq.heappop(heap)
			new_depth = self._recompute(u)
			if new_depth == self.depth[u]:
				continue
			self.depth[u] = new_depth
			if new_depth == 0:
				self._front.add(u)
			for v in self.successors[u]:
				if v not in seen:
					seen.add(v)
					heapq.heappush(heap, v)


def build_dag(circuit: Circuit) -> GateDag:
	for index, gate in enumerate(circuit.gates):
		if gate.x == gate.y:
			raise InvalidCircuitError(f"Gate {index} acts twice on qubit {gate.x}")
	return GateDag(circuit)


def executable_gates(dag: GateDag, chip_state: ChipState, spec: ChipSpec) -> Set[int]:
	"""Front-layer gates whose operands both sit in the compute zone."""
	in_compute = set(compute_qubits(spec, chip_state))
	if len(in_compute) < 2:
		return set()
	return {gid for gid in dag._front if dag.gates[gid].x in in_compute and dag.gates[gid].y in in_compute}


def execute_gate(dag: GateDag, gid: int) -> GateDag:
	dag.execute(gid)
	return dag


def storage_placement(spec: ChipSpec, n_qubits: int, first_zone: int = 0) -> ChipState:
	"""Compact qubits 1..n in label order from the junction outward.

	Filling starts on storage element ``first_zone`` and overflows into the
	next storage element when it is full.
	"""
	if n_qubits > spec.n_max:
		raise CapacityError(f"Circuit needs {n_qubits} qubits, chip holds at most {spec.n_max}")
	storages = spec.storage_zones
	order = storages[first_zone:] + storages[:first_zone]
	cells = [EMPTY] * spec.n_cells
	label = 1
	for zone_index in order:
		zone = spec.zones[zone_index]
		for cell in zone.cells:
			if label > n_qubits:
				break
			cells[cell] = label
			label += 1
	return ChipState(tuple(cells))


def default_placement(spec: ChipSpec, n_qubits: int) -> ChipState:
	return storage_placement(spec, n_qubits, 0)


def _random_gates(z: int, count: int, rng: np.random.Generator) -> List[Gate]:
	gates = []
	for _ in range(count):
		x = int(rng.integers(1, z + 1))
		y = int(rng.integers(1, z))
		if y >= x:
			y += 1
		gates.append(Gate(x, y))
	return gates


def random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator | int | None) -> Circuit:
	"""Training-style gates with a fixed qubit and gate count."""
	if n_qubits < 2:
		raise InvalidCircuitError(f"Random circuits need at least 2 qubits, got {n_qubits}")
	return Circuit(tuple(_random_gates(n_qubits, n_gates, as_rng(rng))), n_qubits)


def generate_random_problem(spec: ChipSpec, n_gates_budget: int,
                            rng: np.random.Generator | int | None,
                            n_max: Optional[int] = None) -> Tuple[Circuit, ChipState]:
	"""Training problem: z ~ U{2..n_max} qubits, Binomial(n_gates, z/n_max) gates."""
	rng = as_rng(rng)
	n_max = spec.n_max if n_max is None else n_max
	if n_max < 2:
		raise CapacityError(f"n_max must be >= 2, got {n_max}")
	if n_max > spec.n_max:
		raise CapacityError(f"n_max={n_max} exceeds chip capacity {spec.n_max}")
	z = int(rng.integers(2, n_max + 1))
	count = int(rng.binomial(n_gates_budget, z / n_max))
	gates = _random_gates(z, count, rng)
	first_zone = int(rng.integers(len(spec.storage_zones)))
	return Circuit(tuple(gates), z), storage_placement(spec, z, first_zone)


def generate_qv_circuit(n: int, rng: np.random.Generator | int | None) -> Circuit:
	"""Square circuit: n layers, each pairing a random permutation of 1..n."""
	if n < 2:
		raise InvalidCircuitError(f"Quantum volume circuits need n >= 2, got {n}")
	rng = as_rng(rng)
	gates = []
	for _ in range(n):
		perm = rng.permutation(n) + 1
		for w in range(n // 2):
			gates.append(Gate(int(perm[2 * w]), int(perm[2 * w + 1])))
	return Circuit(tuple(gates), n)
