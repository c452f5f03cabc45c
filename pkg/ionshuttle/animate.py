"""Frame dumps of a schedule: JSON frames, text rendering and an optional MP4."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import cv2
import numpy as np

from .chip import ChipSpec, ChipState, EMPTY
from .circuit import Circuit
from .env import ShuttlingEnv
from .schedule import Schedule, replay_schedule

logger = logging.getLogger('ionshuttle.animate')

CELL_SIZE = 48
MARGIN = 12
LABEL_WIDTH = 120
ZONE_COLORS = {
	'compute': (60, 160, 60),
	'spam': (160, 120, 40),
	'storage': (150, 90, 40),
	'ring': (120, 60, 140),
}


def frames(spec: ChipSpec, circuit: Circuit, schedule: Schedule,
           placement: Optional[ChipState] = None) -> List[Dict[str, Any]]:
	"""One frame per state: the initial state, then one after every action."""
	if placement is None and schedule.placement is not None:
		placement = ChipState(tuple(schedule.placement))
	replay_schedule(spec, circuit, schedule, placement)
	env = ShuttlingEnv(spec)
	env.load(circuit, placement)
	out = [_frame(spec, env, 0, None, 0.0, env.initial_gates)]
	for index, step in enumerate(schedule.actions, start=1):
		result = env.step(step.action)
		out.append(_frame(spec, env, index, step.action, result.duration, result.gates_executed))
	return out


def _frame(spec: ChipSpec, env: ShuttlingEnv, index: int, action: Optional[int], duration: float,
           gates) -> Dict[str, Any]:
	state = env.state.chip_state
	return {
		'step': index,
		'action': action,
		'label': spec.action_label(action) if action is not None else 'start',
		'duration': duration,
		'elapsed': env.state.elapsed,
		'cells': list(state.cells),
		'zones': {zone.name: list(state.zone_contents(spec, i)) for i, zone in enumerate(spec.zones)},
		'gates_executed': list(gates),
		'remaining': env.state.dag.remaining_count,
	}


def render_text(frame: Dict[str, Any]) -> str:
	parts = []
	for name, contents in frame['zones'].items():
		slots = ' '.join('.' if q == EMPTY else str(q) for q in contents)
		parts.append(f"{name}[{slots}]")
	head = f"#{frame['step']:>4} t={frame['elapsed']:<8g} {frame['label']:<24}"
	tail = f" gates={frame['gates_executed']}" if frame['gates_executed'] else ''
	return head + ' '.join(parts) + tail


def dump_frames(frame_list: List[Dict[str, Any]], path: str | Path) -> Path:
	path = Path(path)
	path.write_text(json.dumps(frame_list, indent=1) + '\n', encoding='utf-8')
	return path


def draw_frame(spec: ChipSpec, frame: Dict[str, Any]) -> np.ndarray:
	"""BGR image: one row of cells per zone, junction-adjacent slot on the left."""
	widest = max(zone.capacity for zone in spec.zones)
	width = LABEL_WIDTH + widest * CELL_SIZE + 2 * MARGIN
	height = (len(spec.zones) + 1) * (CELL_SIZE + MARGIN) + MARGIN
	image = np.full((height, width, 3), 255, dtype=np.uint8)
	cv2.putText(image, f"step {frame['step']}  t={frame['elapsed']:g}  {frame['label']}",
	            (MARGIN, MARGIN + 20), cv2.FONT_HERSHEY_SIMPLEX, 0.5, (0, 0, 0), 1)
	for row, zone in enumerate(spec.zones, start=1):
		top = row * (CELL_SIZE + MARGIN)
		color = ZONE_COLORS[zone.kind.value]
		cv2.putText(image, zone.name, (MARGIN, top + CELL_SIZE // 2 + 5),
		            cv2.FONT_HERSHEY_SIMPLEX, 0.5, color, 1)
		for slot, qubit in enumerate(frame['zones'][zone.name]):
			left = LABEL_WIDTH + slot * CELL_SIZE
			cv2.rectangle(image, (left, top), (left + CELL_SIZE - 4, top + CELL_SIZE - 4), color, 2)
			if qubit != EMPTY:
				cv2.circle(image, (left + CELL_SIZE // 2 - 2, top + CELL_SIZE // 2 - 2), CELL_SIZE // 3, color, -1)
				cv2.putText(image, str(qubit), (left + 10, top + CELL_SIZE // 2 + 4),
				            cv2.FONT_HERSHEY_SIMPLEX, 0.45, (255, 255, 255), 1)
	return image


def write_video(spec: ChipSpec, frame_list: List[Dict[str, Any]], path: str | Path, fps: int = 2) -> Path:
	path = Path(path)
	if not frame_list:
		raise ValueError("No frames to render")
	first = draw_frame(spec, frame_list[0])
	height, width = first.shape[:2]
	writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*'mp4v'), fps, (width, height))
	if not writer.isOpened():
		raise RuntimeError(f"Failed to open video writer for {path}")
	try:
		writer.write(first)
		for frame in frame_list[1:]:
			writer.write(draw_frame(spec, frame))
	finally:
		writer.release()
	logger.info("Wrote %d frames to %s", len(frame_list), path)
	return path
