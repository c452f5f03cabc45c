"""Shared fixtures for the ionshuttle tests."""

import numpy as np
import pytest

from ionshuttle.chip import ChipFamily, ChipState, ZoneKind, make_chip
from ionshuttle.circuit import Circuit


@pytest.fixture(autouse=True, scope='session')
def _cli_log_dir(tmp_path_factory):
	"""Keep CLI log files out of the source tree."""
	mp = pytest.MonkeyPatch()
	mp.setenv('IONSHUTTLE_LOG_DIR', str(tmp_path_factory.mktemp('logs')))
	yield
	mp.undo()


@pytest.fixture
def eleven_cell_chip():
	"""11-cell X-chip: compute(2), storage(2), storage(5), SPAM(2)."""
	return make_chip(ChipFamily.X, [
		(ZoneKind.COMPUTE, 2),
		(ZoneKind.STORAGE, 2),
		(ZoneKind.STORAGE, 5),
		(ZoneKind.SPAM, 2),
	])


@pytest.fixture
def eleven_cell_state():
	return ChipState((4, 1, 0, 0, 3, 5, 0, 0, 0, 2, 0))


@pytest.fixture
def five_qubit_circuit():
	return Circuit.from_pairs([(1, 3), (2, 4), (1, 5), (1, 3)], num_qubits=5)


@pytest.fixture
def rng():
	return np.random.default_rng(1234)
