"""Benchmark harness: suites, per-instance rows, bootstrap aggregates and budget curves."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import log_checkpoint
from .baselines import exact_compile, heuristic_compile
from .chip import ChipSpec
from .circuit import Circuit, generate_qv_circuit, random_circuit
from .config import InferenceConfig
from .errors import BudgetExhaustedError, InvalidSpecError
from .inference import RlCompiler

logger = logging.getLogger('ionshuttle.bench')

DEFAULT_BOOTSTRAP_DRAWS = 20_000
GAP_BUCKETS = ('0', '1', '2', '>2')
CSV_COLUMNS = ('instance', 'method', 'n_qubits', 'n_gates', 'steps', 'total_duration',
               'steps_per_gate', 'gap', 'proven_optimal')


@dataclass(frozen=True)
class SuiteSpec:
	kind: str
	n_qubits: int
	count: int
	seed: int = 0
	n_gates: Optional[int] = None

	def __post_init__(self) -> None:
		if self.kind not in ('qv', 'random'):
			raise InvalidSpecError(f"Unknown suite kind '{self.kind}', choose 'qv' or 'random'")
		if self.kind == 'random' and self.n_gates is None:
			raise InvalidSpecError("Random suites need n_gates")
		if self.count < 1:
			raise InvalidSpecError(f"Suite count must be >= 1, got {self.count}")

	def circuits(self) -> List[Circuit]:
		out = []
		for index in range(self.count):
			rng = np.random.default_rng([self.seed, index])
			if self.kind == 'qv':
				out.append(generate_qv_circuit(self.n_qubits, rng))
			else:
				out.append(random_circuit(self.n_qubits, self.n_gates, rng))
		return out


@dataclass
class BenchRow:
	instance: int
	method: str
	n_qubits: int
	n_gates: int
	steps: Optional[int]
	total_duration: Optional[float]
	steps_per_gate: Optional[float]
	compile_seconds: float
	gap: Optional[float] = None
	proven_optimal: Optional[bool] = None
	rollout_seconds: List[float] = field(default_factory=list)
	rollout_durations: List[Optional[float]] = field(default_factory=list)


@dataclass
class Aggregate:
	method: str
	n: int
	mean_steps: float
	ci_low: float
	ci_high: float
	mean_steps_per_gate: Optional[float]
	mean_gap: Optional[float]
	gap_histogram: Dict[str, int]
	failures: int


@dataclass
class BenchReport:
	rows: List[BenchRow]
	aggregates: List[Aggregate]
	budget_curves: Dict[str, List[Dict[str, float]]] = field(default_factory=dict)

	def to_csv(self) -> str:
		buffer = io.StringIO()
		writer = csv.writer(buffer, lineterminator='\n')
		writer.writerow(CSV_COLUMNS)
		for row in self.rows:
			writer.writerow(['' if getattr(row, c) is None else getattr(row, c) for c in CSV_COLUMNS])
		return buffer.getvalue()

	def to_dict(self) -> Dict:
		return {
			'rows': [asdict(r) for r in self.rows],
			'aggregates': [asdict(a) for a in self.aggregates],
			'budget_curves': self.budget_curves,
		}

	def save(self, out_dir: str | Path, stem: str = 'bench') -> Tuple[Path, Path]:
		out_dir = Path(out_dir)
		out_dir.mkdir(parents=True, exist_ok=True)
		csv_path = out_dir / f'{stem}.csv'
		json_path = out_dir / f'{stem}.json'
		csv_path.write_text(self.to_csv(), encoding='utf-8')
		json_path.write_text(json.dumps(self.to_dict(), indent=2) + '\n', encoding='utf-8')
		return csv_path, json_path


def bootstrap_mean_ci(values: Sequence[float], rng: np.random.Generator,
                      draws: int = DEFAULT_BOOTSTRAP_DRAWS, level: float = 0.95) -> Tuple[float, float, float]:
	"""Mean and percentile bootstrap confidence interval."""
	data = np.asarray(values, dtype=np.float64)
	if data.size == 0:
		raise ValueError("Cannot bootstrap an empty sample")
	mean = float(data.mean())
	idx = rng.integers(0, data.size, size=(draws, data.size))
	means = data[idx].mean(axis=1)
	alpha = (1.0 - level) / 2.0
	low, high = np.quantile(means, [alpha, 1.0 - alpha])
	return mean, float(min(low, mean)), float(max(high, mean))


def gap_bucket(gap: float) -> str:
	if gap <= 1e-9:
		return '0'
	if gap <= 1.0 + 1e-9:
		return '1'
	if gap <= 2.0 + 1e-9:
		return '2'
	return '>2'


def budget_curve(rollout_seconds: Sequence[Sequence[float]], rollout_durations: Sequence[Sequence[Optional[float]]],
                 optima: Sequence[Optional[float]], budgets: Sequence[float], rng: np.random.Generator,
                 draws: int = DEFAULT_BOOTSTRAP_DRAWS) -> List[Dict[str, float]]:
	"""Expected gap of best-of-N inference as a function of the wall-clock budget.

	Each draw picks an instance and resamples its recorded rollouts with
	replacement until their summed time reaches the budget (at least one
	rollout, at most as many as were recorded), keeping the best duration.
	"""
	usable = [i for i, opt in enumerate(optima) if opt is not None and len(rollout_seconds[i]) > 0]
	curve: List[Dict[str, float]] = []
	if not usable:
		return curve
	picks = np.asarray(usable)[rng.integers(len(usable), size=draws)]
	for budget in budgets:
		gaps = np.full(draws, np.nan)
		for i in usable:
			rows = np.flatnonzero(picks == i)
			if rows.size == 0:
				continue
			seconds = np.asarray(rollout_seconds[i], dtype=np.float64)
			durations = np.array([np.inf if d is None else d for d in rollout_durations[i]], dtype=np.float64)
			n = seconds.size
			idx = rng.integers(n, size=(rows.size, n))
			spent = np.cumsum(seconds[idx], axis=1)
			reached = spent >= budget
			count = np.where(reached.any(axis=1), reached.argmax(axis=1) + 1, n)
			running = np.minimum.accumulate(durations[idx], axis=1)
			best = running[np.arange(rows.size), count - 1]
			gaps[rows] = np.where(np.isfinite(best), best - optima[i], np.nan)
		finite = gaps[np.isfinite(gaps)]
		curve.append({
			'budget': float(budget),
			'mean_gap': float(finite.mean()) if finite.size else None,
			'ci_low': float(np.quantile(finite, 0.025)) if finite.size else None,
			'ci_high': float(np.quantile(finite, 0.975)) if finite.size else None,
			'solve_rate': float(finite.size / draws),
		})
	return curve


def _aggregate(method: str, rows: List[BenchRow], rng: np.random.Generator, draws: int) -> Aggregate:
	done = [r for r in rows if r.steps is not None]
	steps = [r.steps for r in done]
	if steps:
		mean, low, high = bootstrap_mean_ci(steps, rng, draws)
	else:
		mean = low = high = float('nan')
	per_gate = [r.steps_per_gate for r in done if r.steps_per_gate is not None]
	gaps = [r.gap for r in done if r.gap is not None]
	histogram = {bucket: 0 for bucket in GAP_BUCKETS}
	for gap in gaps:
		histogram[gap_bucket(gap)] += 1
	return Aggregate(
		method=method,
		n=len(done),
		mean_steps=mean,
		ci_low=low,
		ci_high=high,
		mean_steps_per_gate=float(np.mean(per_gate)) if per_gate else None,
		mean_gap=float(np.mean(gaps)) if gaps else None,
		gap_histogram=histogram,
		failures=len(rows) - len(done),
	)


def run_bench(spec: ChipSpec, suite: SuiteSpec, methods: Sequence[str],
              compiler: Optional[RlCompiler] = None, budgets: Sequence[float] = (1.0,),
              inference: Optional[InferenceConfig] = None, oracle_expansions: Optional[int] = 2_000_000,
              oracle_time_limit: Optional[float] = None, draws: int = DEFAULT_BOOTSTRAP_DRAWS) -> BenchReport:
	unknown = sorted(set(methods) - {'heuristic', 'exact', 'rl'})
	if unknown:
		raise InvalidSpecError(f"Unknown bench methods {unknown}")
	if 'rl' in methods and compiler is None:
		raise InvalidSpecError("The rl method needs a model checkpoint")
	inference = inference or InferenceConfig()
	circuits = suite.circuits()
	log_checkpoint(logger, 'bench.start', suite=suite.kind, n_qubits=suite.n_qubits,
	               count=suite.count, methods=list(methods), budgets=list(budgets))
	optima: List[Optional[float]] = []
	rows: List[BenchRow] = []
	rl_seconds: List[List[float]] = []
	rl_durations: List[List[Optional[float]]] = []
	for index, circuit in enumerate(circuits):
		oracle = None
		if 'exact' in methods:
			oracle = exact_compile(spec, circuit, max_expansions=oracle_expansions, time_limit=oracle_time_limit)
		optimum = oracle.schedule.total_duration if oracle is not None and oracle.proven_optimal else None
		optima.append(optimum)

		def row_for(method: str, schedule, proven: Optional[bool] = None) -> BenchRow:
			gap = None if optimum is None or schedule is None else schedule.total_duration - optimum
			return BenchRow(
				instance=index,
				method=method,
				n_qubits=circuit.num_qubits,
				n_gates=circuit.n_gates,
				steps=schedule.steps if schedule else None,
				total_duration=schedule.total_duration if schedule else None,
				steps_per_gate=(schedule.steps / circuit.n_gates) if schedule and circuit.n_gates else None,
				compile_seconds=schedule.compile_time if schedule else 0.0,
				gap=gap,
				proven_optimal=proven,
			)

		if oracle is not None:
			rows.append(row_for('exact', oracle.schedule, oracle.proven_optimal))
		if 'heuristic' in methods:
			rows.append(row_for('heuristic', heuristic_compile(spec, circuit)))
		if 'rl' in methods:
			seconds: List[float] = []
			durations: List[Optional[float]] = []
			for budget in budgets:
				cfg = InferenceConfig(
					time_budget=budget, max_rollouts=inference.max_rollouts, step_cap=inference.step_cap,
					seed=inference.seed, greedy=inference.greedy,
				)
				try:
					schedule = compiler.compile(circuit, cfg)
				except BudgetExhaustedError as exc:
					logger.warning("Instance %d: %s", index, exc)
					rows.append(row_for(f'rl@{budget:g}s', None))
					continue
				row = row_for(f'rl@{budget:g}s', schedule)
				row.rollout_seconds = list(schedule.extras['rollout_seconds'])
				row.rollout_durations = list(schedule.extras['rollout_durations'])
				rows.append(row)
				if len(row.rollout_seconds) > len(seconds):
					seconds, durations = row.rollout_seconds, row.rollout_durations
			rl_seconds.append(seconds)
			rl_durations.append(durations)
		log_checkpoint(logger, 'bench.instance', logging.DEBUG, instance=index, optimum=optimum)

	rng = np.random.default_rng(suite.seed)
	methods_seen = list(dict.fromkeys(r.method for r in rows))
	aggregates = [_aggregate(m, [r for r in rows if r.method == m], rng, draws) for m in methods_seen]
	report = BenchReport(rows=rows, aggregates=aggregates)
	if 'rl' in methods and 'exact' in methods:
		report.budget_curves['rl'] = budget_curve(rl_seconds, rl_durations, optima, budgets, rng, draws)
	for agg in aggregates:
		log_checkpoint(logger, 'bench.aggregate', method=agg.method, n=agg.n, mean_steps=round(agg.mean_steps, 3),
		               mean_gap=agg.mean_gap, histogram=agg.gap_histogram)
	return report
