"""Command-line surface for ionshuttle."""

import dataclasses
import io
import logging
import os
import sys
import uuid
from datetime import datetime
from pathlib import Path
from typing import List, Optional, TextIO

import click

from .chip import ChipSpec, load_chip
from .circuit import Circuit, generate_qv_circuit, random_circuit
from .config import ABLATIONS, InferenceConfig, TrainConfig, load_config
from .errors import BudgetExhaustedError, ContractViolationError, NumericError
from .schedule import Schedule

logger = logging.getLogger('ionshuttle.cli')
_CLI_LOGGING_CONFIGURED = False
_CLI_LOG_FILE: Path | None = None
_CLI_LOG_HANDLE: TextIO | None = None
_ORIGINAL_STDOUT: TextIO | None = None
_ORIGINAL_STDERR: TextIO | None = None

EXIT_INVALID_INPUT = 2
EXIT_BUDGET_EXHAUSTED = 3
DEFAULT_CHIP = 'builtin:x50'


class _RunIdentifierFilter(logging.Filter):
	def __init__(self, run_id: str, command_name: str | None):
		super().__init__()
		self.run_id = run_id
		self.command_name = (command_name or 'cli').replace(' ', '_')

	def filter(self, record: logging.LogRecord) -> bool:
		record.cli_run_id = self.run_id
		record.cli_command = self.command_name
		return True


class _TeeStream(io.TextIOBase):
	def __init__(self, original: TextIO, log_handle: TextIO, stream_name: str, run_id: str, command_name: str | None):
		self._original = original
		self._log_handle = log_handle
		self._stream_name = stream_name
		self._run_id = run_id
		self._command_name = (command_name or 'cli').replace(' ', '_')

	def write(self, s: str) -> int:
		if not isinstance(s, str):
			raise TypeError(f"write() argument must be str, not {type(s).__name__}")
		if not s:
			return 0

		self._original.write(s)
		timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
		for chunk in s.splitlines(True):
			self._log_handle.write(
				f"{timestamp} [{self._stream_name}] {self._run_id} {self._command_name} - {chunk}"
			)
		self._log_handle.flush()
		return len(s)

	def flush(self) -> None:
		self._original.flush()
		self._log_handle.flush()

	def isatty(self) -> bool:
		return getattr(self._original, 'isatty', lambda: False)()

	def fileno(self) -> int:
		return getattr(self._original, 'fileno', lambda: -1)()


def _log_dir() -> Path:
	override = os.environ.get('IONSHUTTLE_LOG_DIR')
	if override:
		return Path(override)
	return Path(__file__).resolve().parents[1] / 'logs'


def _setup_cli_logging(command_name: str | None) -> Path:
	global _CLI_LOGGING_CONFIGURED, _CLI_LOG_FILE

	if _CLI_LOGGING_CONFIGURED and _CLI_LOG_FILE is not None:
		return _CLI_LOG_FILE

	logs_dir = _log_dir()
	logs_dir.mkdir(parents=True, exist_ok=True)

	log_file = logs_dir / 'cli.log'
	run_id = uuid.uuid4().hex[:8]

	file_handler = logging.FileHandler(log_file, encoding='utf-8')
	file_handler.setLevel(logging.DEBUG)
	file_handler.addFilter(_RunIdentifierFilter(run_id, command_name))
	file_handler.setFormatter(logging.Formatter(
		'%(asctime)s [%(levelname)8s] %(cli_run_id)s %(cli_command)s %(name)s:%(funcName)s:%(lineno)d - %(message)s',
		datefmt='%Y-%m-%d %H:%M:%S'
	))

	root_logger = logging.getLogger()
	root_logger.addHandler(file_handler)

	global _CLI_LOG_HANDLE, _ORIGINAL_STDOUT, _ORIGINAL_STDERR
	if _CLI_LOG_HANDLE is None:
		_CLI_LOG_HANDLE = open(log_file, 'a', encoding='utf-8')

	if _ORIGINAL_STDOUT is None:
		_ORIGINAL_STDOUT = sys.stdout
	if _ORIGINAL_STDERR is None:
		_ORIGINAL_STDERR = sys.stderr

	sys.stdout = _TeeStream(_ORIGINAL_STDOUT, _CLI_LOG_HANDLE, 'STDOUT', run_id, command_name)
	sys.stderr = _TeeStream(_ORIGINAL_STDERR, _CLI_LOG_HANDLE, 'STDERR', run_id, command_name)

	_CLI_LOGGING_CONFIGURED = True
	_CLI_LOG_FILE = log_file
	print(f"[ionshuttle] Logging CLI output to: {log_file} (run_id={run_id})", file=sys.stderr)

	return log_file


class IonShuttleCLI(click.Group):
	def invoke(self, ctx):
		_setup_cli_logging(ctx.invoked_subcommand)
		try:
			return super().invoke(ctx)
		except (BudgetExhaustedError, NumericError) as exc:
			logger.error("Aborted without a result: %s", exc)
			click.echo(f"Error: {exc}", err=True)
			ctx.exit(EXIT_BUDGET_EXHAUSTED)
		except (ValueError, ContractViolationError) as exc:
			logger.error("Invalid input: %s", exc)
			click.echo(f"Error: {exc}", err=True)
			ctx.exit(EXIT_INVALID_INPUT)


class _Options:
	def __init__(self, chip: Optional[str], seed: Optional[int], config: Optional[str], out: Optional[str]):
		self.chip = chip
		self.seed_given = seed is not None
		self.seed = 0 if seed is None else seed
		self.config = config
		self.out = Path(out) if out else None

	def chip_spec(self, fallback: str = DEFAULT_CHIP) -> ChipSpec:
		return load_chip(self.chip or fallback)


def _emit(opts: _Options, text: str, default_name: Optional[str] = None) -> None:
	"""Write ``text`` to --out (a file, or a directory when ``default_name`` is given) or stdout."""
	if opts.out is None:
		click.echo(text, nl=not text.endswith('\n'))
		return
	path = opts.out
	if default_name is not None and (path.is_dir() or path.suffix == ''):
		path.mkdir(parents=True, exist_ok=True)
		path = path / default_name
	else:
		path.parent.mkdir(parents=True, exist_ok=True)
	path.write_text(text if text.endswith('\n') else text + '\n', encoding='utf-8')
	click.echo(f"Wrote {path}")


def _split(value: str, cast=str) -> List:
	try:
		return [cast(v.strip()) for v in value.split(',') if v.strip()]
	except ValueError as exc:
		raise click.BadParameter(f"cannot parse '{value}': {exc}") from exc


@click.group(cls=IonShuttleCLI)
@click.option('--chip', default=None, help='Chip document path or builtin:x50|x6|q50|q50-spam3 (default builtin:x50)')
@click.option('--seed', default=None, type=int, help='Seed for generators and sampling (default 0)')
@click.option('--config', 'config_path', default=None, type=click.Path(dir_okay=False),
              help='Training config JSON')
@click.option('--out', default=None, type=click.Path(), help='Output file or directory')
@click.pass_context
def cli(ctx, chip: Optional[str], seed: Optional[int], config_path: Optional[str], out: Optional[str]):
	"""ionshuttle - learned ion shuttling schedules for QCCD chips."""
	ctx.obj = _Options(chip, seed, config_path, out)


@cli.command()
@click.option('--desk-scale', is_flag=True, default=False, help='Use the small 6-ion preset')
@click.option('--ablation', type=click.Choice(ABLATIONS), default=None, help='Train one ablation variant')
@click.option('--total-steps', type=int, default=None, help='Override the number of learning steps')
@click.option('--max-seconds', type=float, default=None, help='Wall-clock limit for training')
@click.pass_obj
def train(opts: _Options, desk_scale: bool, ablation: Optional[str], total_steps: Optional[int],
          max_seconds: Optional[float]):
	"""Train a PPO agent on random problems."""
	from .ppo import PpoTrainer

	if opts.config:
		config = load_config(opts.config)
	elif desk_scale:
		config = TrainConfig.desk_scale()
	else:
		config = TrainConfig()
	overrides = {'seed': opts.seed} if opts.seed_given else {}
	if opts.chip:
		overrides['chip'] = opts.chip
	config = dataclasses.replace(config, **overrides)
	ppo_overrides = {}
	if total_steps is not None:
		ppo_overrides['total_learning_steps'] = total_steps
	if max_seconds is not None:
		ppo_overrides['max_seconds'] = max_seconds
	if ppo_overrides:
		config = dataclasses.replace(config, ppo=dataclasses.replace(config.ppo, **ppo_overrides))
	if ablation:
		config = config.with_ablation(ablation)
	out_dir = opts.out or Path('runs') / 'train'
	logger.info("Training on %s into %s", config.chip, out_dir)
	result = PpoTrainer(config, out_dir=out_dir).train()
	click.echo(f"Trained {result.learning_steps} learning steps; checkpoint: {result.checkpoint}")


@cli.command('compile')
@click.argument('circuit_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--method', type=click.Choice(['rl', 'heuristic', 'exact']), default='heuristic', show_default=True)
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Trained model (required for --method rl)')
@click.option('--budget', type=float, default=1.0, show_default=True, help='RL wall-clock budget in seconds')
@click.option('--max-rollouts', type=int, default=64, show_default=True)
@click.option('--step-cap', type=int, default=None, help='Per-rollout step cap (default 8x heuristic steps)')
@click.option('--greedy', is_flag=True, default=False, help='Argmax policy instead of sampling')
@click.option('--budget-from-heuristic', is_flag=True, default=False,
              help='Budget = max(heuristic compile time, 1 s)')
@click.option('--max-expansions', type=int, default=None, help='Expansion limit for --method exact')
@click.option('--time-limit', type=float, default=None, help='Time limit for --method exact')
@click.pass_obj
def compile_cmd(opts: _Options, circuit_path: str, method: str, checkpoint: Optional[str], budget: float,
                max_rollouts: int, step_cap: Optional[int], greedy: bool, budget_from_heuristic: bool,
                max_expansions: Optional[int], time_limit: Optional[float]):
	"""Compile a circuit file into a shuttling schedule (JSON)."""
	from .baselines import exact_compile, heuristic_compile

	circuit = Circuit.load(circuit_path)
	if method == 'rl':
		from .inference import load_compiler

		if checkpoint is None:
			raise click.UsageError("--method rl needs --checkpoint")
		compiler = load_compiler(checkpoint, load_chip(opts.chip) if opts.chip else None)
		cfg = InferenceConfig(time_budget=budget, max_rollouts=max_rollouts, step_cap=step_cap,
		                      seed=opts.seed, greedy=greedy, budget_from_heuristic=budget_from_heuristic)
		schedule = compiler.compile(circuit, cfg)
	elif method == 'heuristic':
		schedule = heuristic_compile(opts.chip_spec(), circuit)
	else:
		result = exact_compile(opts.chip_spec(), circuit, max_expansions=max_expansions, time_limit=time_limit)
		schedule = result.schedule
		schedule.extras['proven_optimal'] = result.proven_optimal
	logger.info("%s schedule: %d steps, total duration %g", method, schedule.steps, schedule.total_duration)
	_emit(opts, schedule.dumps(), 'schedule.json')


@cli.command()
@click.option('--suite', type=click.Choice(['qv', 'random']), default='qv', show_default=True)
@click.option('--n', 'n_qubits', type=int, default=6, show_default=True, help='Qubits per instance')
@click.option('--count', type=int, default=100, show_default=True, help='Number of instances')
@click.option('--gates', type=int, default=None, help='Gates per instance (random suite)')
@click.option('--methods', default='heuristic,exact', show_default=True, help='Comma list of rl,heuristic,exact')
@click.option('--budgets', default='1.0', show_default=True, help='Comma list of RL budgets in seconds')
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--max-rollouts', type=int, default=64, show_default=True)
@click.option('--oracle-expansions', type=int, default=2_000_000, show_default=True)
@click.option('--draws', type=int, default=20_000, show_default=True, help='Bootstrap draws')
@click.pass_obj
def bench(opts: _Options, suite: str, n_qubits: int, count: int, gates: Optional[int], methods: str,
          budgets: str, checkpoint: Optional[str], max_rollouts: int, oracle_expansions: int, draws: int):
	"""Benchmark compilers on a seeded suite; writes bench.csv and bench.json."""
	from .bench import SuiteSpec, run_bench

	method_list = _split(methods)
	compiler = None
	spec = opts.chip_spec()
	if 'rl' in method_list:
		from .inference import load_compiler

		if checkpoint is None:
			raise click.UsageError("the rl method needs --checkpoint")
		compiler = load_compiler(checkpoint, spec)
	report = run_bench(
		spec,
		SuiteSpec(suite, n_qubits, count, opts.seed, gates),
		method_list,
		compiler=compiler,
		budgets=_split(budgets, float),
		inference=InferenceConfig(max_rollouts=max_rollouts, seed=opts.seed),
		oracle_expansions=oracle_expansions,
		draws=draws,
	)
	csv_path, json_path = report.save(opts.out or Path('bench'))
	for agg in report.aggregates:
		gap = '-' if agg.mean_gap is None else f"{agg.mean_gap:.3f}"
		click.echo(f"{agg.method:>12}: n={agg.n} steps={agg.mean_steps:.2f} "
		           f"[{agg.ci_low:.2f}, {agg.ci_high:.2f}] gap={gap} failures={agg.failures}")
	click.echo(f"Wrote {csv_path} and {json_path}")


@cli.command('gen-qv')
@click.option('--n', 'n_qubits', type=int, required=True, help='Number of qubits (and layers)')
@click.option('--seed', 'local_seed', type=int, default=None, help='Generator seed (overrides the global --seed)')
@click.pass_obj
def gen_qv(opts: _Options, n_qubits: int, local_seed: Optional[int]):
	"""Write a quantum volume circuit in the pairs-list format."""
	seed = opts.seed if local_seed is None else local_seed
	_emit(opts, generate_qv_circuit(n_qubits, seed).dumps(), f'qv{n_qubits}_s{seed}.txt')


@cli.command('gen-random')
@click.option('--n', 'n_qubits', type=int, required=True, help='Number of qubits')
@click.option('--gates', type=int, required=True, help='Number of two-qubit gates')
@click.option('--seed', 'local_seed', type=int, default=None, help='Generator seed (overrides the global --seed)')
@click.pass_obj
def gen_random(opts: _Options, n_qubits: int, gates: int, local_seed: Optional[int]):
	"""Write a random training-style circuit in the pairs-list format."""
	seed = opts.seed if local_seed is None else local_seed
	_emit(opts, random_circuit(n_qubits, gates, seed).dumps(), f'random{n_qubits}x{gates}_s{seed}.txt')


@cli.command()
@click.argument('circuit_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--max-expansions', type=int, default=2_000_000, show_default=True)
@click.option('--time-limit', type=float, default=None, help='Seconds before giving up on a proof')
@click.option('--raw-states', is_flag=True, default=False, help='Disable relabeling canonicalization')
@click.pass_obj
def oracle(opts: _Options, circuit_path: str, max_expansions: int, time_limit: Optional[float], raw_states: bool):
	"""Run the exact search and report whether the schedule is proven optimal."""
	from .baselines import exact_compile

	result = exact_compile(opts.chip_spec(), Circuit.load(circuit_path), max_expansions=max_expansions,
	                       time_limit=time_limit, canonical=not raw_states)
	result.schedule.extras['proven_optimal'] = result.proven_optimal
	result.schedule.extras['expanded_states'] = result.expanded_states
	status = 'proven optimal' if result.proven_optimal else 'incumbent (not proven)'
	click.echo(f"total_duration={result.schedule.total_duration:g} steps={result.schedule.steps} "
	           f"{status} expanded={result.expanded_states}")
	if opts.out is not None:
		_emit(opts, result.schedule.dumps(), 'oracle.json')


@cli.command()
@click.argument('schedule_path', type=click.Path(exists=True, dir_okay=False))
@click.argument('circuit_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--video', type=click.Path(dir_okay=False), default=None, help='Also render an MP4')
@click.option('--fps', type=int, default=2, show_default=True)
@click.pass_obj
def animate(opts: _Options, schedule_path: str, circuit_path: str, video: Optional[str], fps: int):
	"""Dump per-step cell occupancy frames of a schedule."""
	from .animate import dump_frames, frames, render_text, write_video

	spec = opts.chip_spec()
	frame_list = frames(spec, Circuit.load(circuit_path), Schedule.load(schedule_path))
	if opts.out is None:
		for frame in frame_list:
			click.echo(render_text(frame))
	else:
		path = opts.out / 'frames.json' if opts.out.is_dir() or opts.out.suffix == '' else opts.out
		path.parent.mkdir(parents=True, exist_ok=True)
		dump_frames(frame_list, path)
		click.echo(f"Wrote {len(frame_list)} frames to {path}")
	if video:
		write_video(spec, frame_list, video, fps)
		click.echo(f"Wrote video {video}")


def main() -> None:
	cli()


if __name__ == '__main__':
	main()
