"""Tests for the ionshuttle command line."""

import io
import json
import sys

import click
import pytest
import torch
from click.testing import CliRunner

from ionshuttle.checkpoint import save_checkpoint
from ionshuttle.chip import load_chip
from ionshuttle.circuit import Circuit
from ionshuttle.cli import _TeeStream, cli
from ionshuttle.config import EmbeddingConfig, NetworkConfig, PpoConfig, TrainConfig
from ionshuttle.networks import ActorCritic
from ionshuttle.representation import Observer
from ionshuttle.schedule import Schedule, replay_schedule


@pytest.fixture
def runner():
	return CliRunner()


@pytest.fixture
def circuit_file(runner, tmp_path):
	path = tmp_path / 'circuit.txt'
	result = runner.invoke(cli, ['--seed', '3', '--out', str(path), 'gen-random', '--n', '3', '--gates', '4'])
	assert result.exit_code == 0, result.output
	return path


@pytest.fixture
def untrained_checkpoint(tmp_path):
	spec = load_chip('builtin:x6')
	config = TrainConfig.desk_scale()
	size = Observer(spec, EmbeddingConfig(), config.n_gates_budget).size
	torch.manual_seed(0)
	model = ActorCritic(size, spec.n_actions, n_hidden=16, n_blocks=1, seed=0)
	return save_checkpoint(tmp_path / 'untrained.pt', model, config, 0, spec.to_dict())


class TestGenerators:
	"""Test circuit generator commands."""

	def test_gen_qv(self, runner, tmp_path):
		path = tmp_path / 'qv.txt'
		result = runner.invoke(cli, ['--out', str(path), 'gen-qv', '--n', '6'])
		assert result.exit_code == 0, result.output
		circuit = Circuit.load(path)
		assert circuit.n_gates == 18

	def test_gen_into_directory(self, runner, tmp_path):
		result = runner.invoke(cli, ['--seed', '2', '--out', str(tmp_path / 'circuits'), 'gen-qv', '--n', '4'])
		assert result.exit_code == 0, result.output
		assert (tmp_path / 'circuits' / 'qv4_s2.txt').exists()

	def test_gen_random(self, circuit_file):
		assert Circuit.load(circuit_file).n_gates == 4

	def test_deterministic(self, runner, tmp_path):
		outputs = []
		for name in ('a.txt', 'b.txt'):
			runner.invoke(cli, ['--seed', '5', '--out', str(tmp_path / name), 'gen-qv', '--n', '4'])
			outputs.append((tmp_path / name).read_text())
		assert outputs[0] == outputs[1]

	def test_gen_qv_to_stdout(self, runner):
		"""Without --out the circuit is printed and parses back."""
		result = runner.invoke(cli, ['--seed', '5', 'gen-qv', '--n', '4'])
		assert result.exit_code == 0, result.output
		text = '\n'.join(line for line in result.output.splitlines() if not line.startswith('[ionshuttle]'))
		circuit = Circuit.parse(text)
		assert circuit.n_gates == 8
		assert circuit.num_qubits == 4

	@pytest.mark.parametrize('command', [['gen-qv', '--n', '4'], ['gen-random', '--n', '4', '--gates', '5']])
	def test_seed_after_subcommand(self, runner, tmp_path, command):
		"""A --seed given to the generator matches the global --seed."""
		global_path, local_path = tmp_path / 'global.txt', tmp_path / 'local.txt'
		runner.invoke(cli, ['--seed', '7', '--out', str(global_path)] + command)
		result = runner.invoke(cli, ['--out', str(local_path)] + command + ['--seed', '7'])
		assert result.exit_code == 0, result.output
		assert local_path.read_text() == global_path.read_text()


class TestCompile:
	"""Test the compile and oracle commands."""

	@pytest.mark.parametrize('method', ['heuristic', 'exact'])
	def test_schedule_file(self, runner, tmp_path, circuit_file, method):
		out = tmp_path / f'{method}.json'
		result = runner.invoke(cli, ['--chip', 'builtin:x6', '--out', str(out), 'compile', str(circuit_file),
		                             '--method', method])
		assert result.exit_code == 0, result.output
		schedule = Schedule.load(out)
		assert schedule.method == method
		replay_schedule(load_chip('builtin:x6'), Circuit.load(circuit_file), schedule)

	def test_oracle_report(self, runner, tmp_path, circuit_file):
		result = runner.invoke(cli, ['--chip', 'builtin:x6', 'oracle', str(circuit_file)])
		assert result.exit_code == 0, result.output
		assert 'proven optimal' in result.output

	def test_oracle_incumbent(self, runner, tmp_path, circuit_file):
		out = tmp_path / 'oracle.json'
		result = runner.invoke(cli, ['--chip', 'builtin:x6', '--out', str(out), 'oracle', str(circuit_file),
		                             '--max-expansions', '1'])
		assert result.exit_code == 0, result.output
		assert 'incumbent (not proven)' in result.output
		assert json.loads(out.read_text())['extras']['proven_optimal'] is False

	def test_bad_circuit_exits_2(self, runner, tmp_path):
		path = tmp_path / 'bad.txt'
		path.write_text('1 1\n')
		result = runner.invoke(cli, ['--chip', 'builtin:x6', 'compile', str(path)])
		assert result.exit_code == 2
		assert 'Error:' in result.output

	def test_too_many_qubits_exits_2(self, runner, tmp_path):
		path = tmp_path / 'wide.txt'
		path.write_text('1 7\n')
		result = runner.invoke(cli, ['--chip', 'builtin:x6', 'compile', str(path)])
		assert result.exit_code == 2

	def test_rl_needs_checkpoint(self, runner, circuit_file):
		result = runner.invoke(cli, ['--chip', 'builtin:x6', 'compile', str(circuit_file), '--method', 'rl'])
		assert result.exit_code == 2

	def test_rl_budget_exhausted_exits_3(self, runner, circuit_file, untrained_checkpoint):
		result = runner.invoke(cli, ['compile', str(circuit_file), '--method', 'rl',
		                             '--checkpoint', str(untrained_checkpoint), '--step-cap', '1'])
		assert result.exit_code == 3
		assert 'Error:' in result.output

	def test_rl_schedule(self, runner, tmp_path, circuit_file, untrained_checkpoint):
		out = tmp_path / 'rl.json'
		result = runner.invoke(cli, ['--out', str(out), 'compile', str(circuit_file), '--method', 'rl',
		                             '--checkpoint', str(untrained_checkpoint), '--step-cap', '20000',
		                             '--max-rollouts', '2'])
		assert result.exit_code == 0, result.output
		replay_schedule(load_chip('builtin:x6'), Circuit.load(circuit_file), Schedule.load(out))


class TestAnimate:
	"""Test frame dumps from the command line."""

	@pytest.fixture
	def schedule_file(self, runner, tmp_path, circuit_file):
		out = tmp_path / 'schedule.json'
		runner.invoke(cli, ['--chip', 'builtin:x6', '--out', str(out), 'compile', str(circuit_file)])
		return out

	def test_text_frames(self, runner, schedule_file, circuit_file):
		result = runner.invoke(cli, ['--chip', 'builtin:x6', 'animate', str(schedule_file), str(circuit_file)])
		assert result.exit_code == 0, result.output
		steps = Schedule.load(schedule_file).steps
		assert sum(1 for line in result.output.splitlines() if line.startswith('#')) == steps + 1

	def test_json_frames(self, runner, tmp_path, schedule_file, circuit_file):
		out = tmp_path / 'frames'
		result = runner.invoke(cli, ['--chip', 'builtin:x6', '--out', str(out), 'animate',
		                             str(schedule_file), str(circuit_file)])
		assert result.exit_code == 0, result.output
		frames = json.loads((out / 'frames.json').read_text())
		assert frames[-1]['remaining'] == 0

	def test_wrong_chip_rejected(self, runner, schedule_file, circuit_file):
		"""Replaying on a chip with different actions fails validation."""
		result = runner.invoke(cli, ['--chip', 'builtin:q50', 'animate', str(schedule_file), str(circuit_file)])
		assert result.exit_code == 2


class TestBenchAndTrain:
	"""Test the bench and train commands at toy sizes."""

	def test_bench(self, runner, tmp_path):
		out = tmp_path / 'bench'
		result = runner.invoke(cli, ['--chip', 'builtin:x6', '--out', str(out), 'bench', '--suite', 'random',
		                             '--n', '3', '--count', '3', '--gates', '4', '--draws', '200'])
		assert result.exit_code == 0, result.output
		assert (out / 'bench.csv').exists()
		report = json.loads((out / 'bench.json').read_text())
		assert {row['method'] for row in report['rows']} == {'heuristic', 'exact'}

	def test_bench_rl_needs_checkpoint(self, runner, tmp_path):
		result = runner.invoke(cli, ['--chip', 'builtin:x6', '--out', str(tmp_path), 'bench', '--methods', 'rl',
		                             '--count', '1', '--n', '4'])
		assert result.exit_code == 2

	def test_train_from_config(self, runner, tmp_path):
		"""A tiny config trains and writes a usable checkpoint."""
		config = TrainConfig(
			chip='builtin:x6', n_max=3, n_gates_budget=4, episode_cap=32,
			network=NetworkConfig(n_hidden=16, n_blocks=1),
			ppo=PpoConfig(n_envs=2, n_steps=8, minibatch_size=8, epochs=1, total_learning_steps=2),
		)
		config_path = tmp_path / 'config.json'
		config.save(config_path)
		out = tmp_path / 'run'
		result = runner.invoke(cli, ['--seed', '4', '--config', str(config_path), '--out', str(out), 'train'])
		assert result.exit_code == 0, result.output
		assert 'Trained 2 learning steps' in result.output
		assert (out / 'checkpoint.pt').exists()
		assert json.loads((out / 'config.json').read_text())['seed'] == 4


class TestTeeStream:
	"""Test the stdout/stderr tee behind the CLI log file."""

	@pytest.fixture
	def tee(self):
		return _TeeStream(io.StringIO(), io.StringIO(), 'STDOUT', 'abcd1234', 'gen-qv')

	def test_rejects_bytes(self, tee):
		"""Bytes, even empty, are refused so click treats the tee as a text stream."""
		with pytest.raises(TypeError):
			tee.write(b'')
		with pytest.raises(TypeError):
			tee.write(b'1 2\n')

	def test_writes_text_to_both(self, tee):
		assert tee.write('1 2\n3 4\n') == 8
		assert tee._original.getvalue() == '1 2\n3 4\n'
		lines = tee._log_handle.getvalue().splitlines()
		assert len(lines) == 2
		assert all('[STDOUT] abcd1234 gen-qv - ' in line for line in lines)

	def test_click_echo_through_tee(self, tee, monkeypatch):
		"""click.echo to a tee installed as sys.stdout writes text."""
		monkeypatch.setattr(sys, 'stdout', tee)
		click.echo('5 6')
		assert tee._original.getvalue() == '5 6\n'
