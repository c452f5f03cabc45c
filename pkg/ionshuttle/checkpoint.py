"""Versioned model checkpoints (torch container)."""

from __future__ import annotations

import logging
import os
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import torch

from .config import TrainConfig
from .errors import InvalidSpecError
from .networks import ActorCritic

logger = logging.getLogger('ionshuttle.checkpoint')

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
	model: ActorCritic
	config: TrainConfig
	learning_step: int
	chip: Dict[str, Any]
	optimizer_state: Optional[Dict[str, Any]] = None


def save_checkpoint(path: str | Path, model: ActorCritic, config: TrainConfig, learning_step: int,
                    chip: Dict[str, Any], optimizer_state: Optional[Dict[str, Any]] = None) -> Path:
	"""Write atomically so an interrupted save never clobbers the last good file."""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	payload = {
		'format_version': FORMAT_VERSION,
		'shapes': model.shape_spec(),
		'policy': model.policy.state_dict(),
		'value': model.value.state_dict(),
		'learning_step': int(learning_step),
		'config': config.to_dict(),
		'chip': chip,
		'optimizer': optimizer_state,
	}
	tmp = path.with_name(path.name + '.tmp')
	torch.save(payload, tmp)
	os.replace(tmp, path)
	logger.debug("Saved checkpoint %s at learning step %d", path, learning_step)
	return path


def load_checkpoint(path: str | Path) -> Checkpoint:
	path = Path(path)
	try:
		payload = torch.load(path, map_location='cpu', weights_only=False)
	except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as exc:
		raise InvalidSpecError(f"Cannot read checkpoint '{path}': {exc}") from exc
	version = payload.get('format_version')
	if version != FORMAT_VERSION:
		raise InvalidSpecError(f"Unsupported checkpoint format {version}, expected {FORMAT_VERSION}")
	shapes = payload['shapes']
	model = ActorCritic(shapes['obs_size'], shapes['n_actions'], shapes['n_hidden'], shapes['n_blocks'])
	model.policy.load_state_dict(payload['policy'])
	model.value.load_state_dict(payload['value'])
	model.eval()
	return Checkpoint(
		model=model,
		config=TrainConfig.from_dict(payload['config']),
		learning_step=int(payload['learning_step']),
		chip=payload['chip'],
		optimizer_state=payload.get('optimizer'),
	)
