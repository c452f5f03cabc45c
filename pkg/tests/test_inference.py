"""Tests for best-of-N inference with a (possibly untrained) policy."""

import math

import pytest

from ionshuttle.checkpoint import save_checkpoint
from ionshuttle.chip import load_chip
from ionshuttle.circuit import Circuit, random_circuit
from ionshuttle.config import EmbeddingConfig, InferenceConfig, TrainConfig
from ionshuttle.errors import BudgetExhaustedError, InvalidSpecError
from ionshuttle.inference import RlCompiler, load_compiler, rl_compile
from ionshuttle.networks import ActorCritic
from ionshuttle.representation import Observer
from ionshuttle.schedule import replay_schedule

N_GATES_BUDGET = 15


@pytest.fixture
def spec():
	return load_chip('builtin:x6')


@pytest.fixture
def compiler(spec):
	size = Observer(spec, EmbeddingConfig(), N_GATES_BUDGET).size
	model = ActorCritic(size, spec.n_actions, n_hidden=32, n_blocks=1, seed=0)
	return RlCompiler(model, spec, EmbeddingConfig(), N_GATES_BUDGET)


class TestRlCompiler:
	"""Test rollouts, budgets and the returned schedule."""

	def test_valid_schedule(self, spec, compiler):
		"""An untrained policy still finds a valid schedule with a generous cap."""
		circuit = random_circuit(3, 4, 0)
		schedule = compiler.compile(circuit, InferenceConfig(time_budget=math.inf, max_rollouts=4, step_cap=20_000))
		replay_schedule(spec, circuit, schedule)
		assert schedule.method == 'rl'
		assert schedule.extras['rollouts'] == 4
		assert len(schedule.extras['rollout_seconds']) == 4

	def test_more_rollouts_never_worse(self, compiler):
		"""Best-of-8 is at most best-of-1 with the same seed."""
		circuit = random_circuit(3, 4, 1)
		one = compiler.compile(circuit, InferenceConfig(max_rollouts=1, step_cap=20_000))
		eight = compiler.compile(circuit, InferenceConfig(time_budget=math.inf, max_rollouts=8, step_cap=20_000))
		assert eight.total_duration <= one.total_duration
		assert eight.extras['rollout_durations'][0] == one.total_duration

	def test_best_is_minimum(self, compiler):
		"""The returned duration is the minimum over valid rollouts."""
		circuit = random_circuit(3, 3, 2)
		schedule = compiler.compile(circuit, InferenceConfig(time_budget=math.inf, max_rollouts=6, step_cap=20_000))
		durations = [d for d in schedule.extras['rollout_durations'] if d is not None]
		assert schedule.total_duration == min(durations)
		assert schedule.extras['rollout_durations'].index(min(durations)) == schedule.extras['best_rollout']

	def test_empty_circuit(self, compiler):
		"""No gates gives an empty schedule."""
		schedule = compiler.compile(Circuit.from_pairs([], num_qubits=2))
		assert schedule.steps == 0
		assert schedule.total_duration == 0.0

	def test_step_cap_exhausted(self, compiler):
		"""A one-step cap cannot finish a circuit starting in storage."""
		with pytest.raises(BudgetExhaustedError):
			compiler.compile(random_circuit(4, 6, 3), InferenceConfig(max_rollouts=3, step_cap=1))

	def test_zero_budget_runs_one_rollout(self, compiler):
		circuit = random_circuit(3, 2, 4)
		schedule = compiler.compile(circuit, InferenceConfig(time_budget=0.0, max_rollouts=50, step_cap=20_000))
		assert schedule.extras['rollouts'] == 1

	def test_greedy_single_rollout(self, compiler):
		"""Greedy decoding runs one deterministic rollout."""
		circuit = Circuit.from_pairs([(1, 2)])
		cfg = InferenceConfig(greedy=True, max_rollouts=10, step_cap=50)
		outcomes = []
		for _ in range(2):
			try:
				schedule = compiler.compile(circuit, cfg)
			except BudgetExhaustedError as exc:
				assert '(1 rollouts' in str(exc)
				outcomes.append(None)
			else:
				assert schedule.extras['rollouts'] == 1
				outcomes.append(schedule.action_indices)
		assert outcomes[0] == outcomes[1]

	def test_derived_step_cap(self, compiler):
		"""Without an explicit cap the heuristic sets it."""
		circuit = random_circuit(3, 3, 5)
		try:
			schedule = compiler.compile(circuit, InferenceConfig(max_rollouts=2))
		except BudgetExhaustedError as exc:
			assert 'step cap' in str(exc)
		else:
			assert schedule.extras['step_cap'] >= schedule.steps

	def test_observation_mismatch(self, spec):
		"""A model built for another chip is rejected."""
		model = ActorCritic(10, spec.n_actions, n_hidden=8, n_blocks=1, seed=0)
		with pytest.raises(InvalidSpecError):
			RlCompiler(model, spec, EmbeddingConfig(), N_GATES_BUDGET)

	def test_action_mismatch(self, spec):
		size = Observer(spec, EmbeddingConfig(), N_GATES_BUDGET).size
		model = ActorCritic(size, spec.n_actions + 1, n_hidden=8, n_blocks=1, seed=0)
		with pytest.raises(InvalidSpecError):
			RlCompiler(model, spec, EmbeddingConfig(), N_GATES_BUDGET)


class TestLoadCompiler:
	"""Test building compilers from checkpoints."""

	def test_from_checkpoint(self, tmp_path, spec, compiler):
		"""The chip document in the checkpoint rebuilds the compiler."""
		config = TrainConfig.desk_scale()
		path = save_checkpoint(tmp_path / 'model.pt', compiler.model, config, 0, spec.to_dict())
		loaded = load_compiler(path)
		assert loaded.spec == spec
		circuit = random_circuit(3, 3, 6)
		cfg = InferenceConfig(time_budget=math.inf, max_rollouts=2, step_cap=20_000)
		a = loaded.compile(circuit, cfg)
		b = rl_compile(path, spec, circuit, cfg)
		assert a.action_indices == b.action_indices
		assert a.action_indices == compiler.compile(circuit, cfg).action_indices
