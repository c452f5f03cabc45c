"""Residual policy/value networks and the masked categorical distribution."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.func import functional_call

from .errors import ContractViolationError, NumericError

logger = logging.getLogger('ionshuttle.networks')

HIDDEN_GAIN = math.sqrt(2.0)
POLICY_HEAD_GAIN = 0.01
VALUE_HEAD_GAIN = 1.0


class ResidualBlock(nn.Module):
	"""x + fc2(relu(fc1(relu(x))))"""

	def __init__(self, width: int):
		super().__init__()
		self.fc1 = nn.Linear(width, width)
		self.fc2 = nn.Linear(width, width)

	def forward(self, x: torch.Tensor) -> torch.Tensor:
		return x + self.fc2(F.relu(self.fc1(F.relu(x))))


class ResidualNet(nn.Module):
	def __init__(self, in_features: int, out_features: int, n_hidden: int = 512, n_blocks: int = 3):
		super().__init__()
		self.in_features = in_features
		self.out_features = out_features
		self.input = nn.Linear(in_features, n_hidden)
		self.blocks = nn.ModuleList(ResidualBlock(n_hidden) for _ in range(n_blocks))
		self.output = nn.Linear(n_hidden, out_features)

	def forward(self, x: torch.Tensor) -> torch.Tensor:
		h = self.input(x)
		for block in self.blocks:
			h = block(h)
		return self.output(F.relu(h))


def init_params(net: ResidualNet, head_gain: float, generator: Optional[torch.Generator] = None) -> ResidualNet:
	"""Orthogonal weights (gain sqrt 2 hidden, ``head_gain`` on the output), zero biases."""
	with torch.no_grad():
		for module in net.modules():
			if isinstance(module, nn.Linear):
				gain = head_gain if module is net.output else HIDDEN_GAIN
				nn.init.orthogonal_(module.weight, gain=gain, generator=generator)
				nn.init.zeros_(module.bias)
	return net


class MaskedCategorical:
	"""Categorical over actions with illegal entries pinned to probability 0."""

	def __init__(self, logits: torch.Tensor, mask: torch.Tensor):
		mask = mask.to(torch.bool)
		if logits.shape != mask.shape:
			raise ContractViolationError(f"Logits shape {tuple(logits.shape)} != mask shape {tuple(mask.shape)}")
		empty = ~mask.any(dim=-1)
		if bool(empty.any()):
			rows = torch.nonzero(empty).flatten().tolist()
			raise ContractViolationError(f"All actions masked in rows {rows}")
		self.mask = mask
		self.logits = torch.where(mask, logits, torch.full_like(logits, torch.finfo(logits.dtype).min))
		self.log_probs = F.log_softmax(self.logits, dim=-1)
		self.probs = self.log_probs.exp()

	def log_prob(self, actions: torch.Tensor) -> torch.Tensor:
		return self.log_probs.gather(-1, actions.long().unsqueeze(-1)).squeeze(-1)

	def entropy(self) -> torch.Tensor:
		"""Entropy over legal actions only; bounded by ln |legal|."""
		terms = torch.where(self.mask, self.probs * self.log_probs, torch.zeros_like(self.probs))
		return -terms.sum(dim=-1)

	def sample(self, generator: Optional[torch.Generator] = None) -> torch.Tensor:
		return torch.multinomial(self.probs, 1, generator=generator).squeeze(-1)

	def mode(self) -> torch.Tensor:
		return self.logits.argmax(dim=-1)


class ActorCritic(nn.Module):
	"""Separate policy and value networks; they share no parameters."""

	def __init__(self, obs_size: int, n_actions: int, n_hidden: int = 512, n_blocks: int = 3,
	             seed: Optional[int] = None):
		super().__init__()
		self.obs_size = obs_size
		self.n_actions = n_actions
		self.n_hidden = n_hidden
		self.n_blocks = n_blocks
		generator = torch.Generator().manual_seed(seed) if seed is not None else None
		self.policy = init_params(ResidualNet(obs_size, n_actions, n_hidden, n_blocks), POLICY_HEAD_GAIN, generator)
		self.value = init_params(ResidualNet(obs_size, 1, n_hidden, n_blocks), VALUE_HEAD_GAIN, generator)

	def shape_spec(self) -> Dict[str, int]:
		return {
			'obs_size': self.obs_size,
			'n_actions': self.n_actions,
			'n_hidden': self.n_hidden,
			'n_blocks': self.n_blocks,
		}

	def forward_policy(self, observations: torch.Tensor, masks: torch.Tensor) -> MaskedCategorical:
		if observations.shape[-1] != self.obs_size:
			raise ContractViolationError(
				f"Observation length {observations.shape[-1]} does not match network input {self.obs_size}"
			)
		return MaskedCategorical(self.policy(observations), masks)

	def forward_value(self, observations: torch.Tensor) -> torch.Tensor:
		return self.value(observations).squeeze(-1)

	def forward(self, observations: torch.Tensor, masks: torch.Tensor):
		return self.forward_policy(observations, masks), self.forward_value(observations)


def gradients(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor],
              diagnostics: Optional[Dict[str, float]] = None) -> List[torch.Tensor]:
	"""Exact gradients of the scalar ``loss_fn()``; raises NumericError on non-finite values."""
	loss = loss_fn()
	if not torch.isfinite(loss).all():
		raise NumericError(f"Non-finite loss {loss.item()} (diagnostics: {diagnostics or {}})")
	grads = torch.autograd.grad(loss, list(params), allow_unused=True)
	grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
	bad = [i for i, g in enumerate(grads) if not torch.isfinite(g).all()]
	if bad:
		raise NumericError(f"Non-finite gradients in parameters {bad} (diagnostics: {diagnostics or {}})")
	return grads


@dataclass(frozen=True)
class GradientCheckReport:
	passed: bool
	max_abs_error: float
	n_entries: int


def gradient_check(module: nn.Module, loss_of_outputs: Callable[[nn.Module, Dict[str, torch.Tensor]], torch.Tensor],
                   eps: float = 1e-6, atol: float = 1e-4) -> GradientCheckReport:
	"""Compare autograd gradients with central finite differences in float64.

	``loss_of_outputs(module, params)`` must evaluate the loss through
	``functional_call`` with the given parameter dict.
	"""
	checked = copy.deepcopy(module).to(torch.float64)
	names = [name for name, _ in checked.named_parameters()]
	base = [p.detach().clone().requires_grad_(True) for _, p in checked.named_parameters()]

	def loss_fn(*flat):
		return loss_of_outputs(checked, dict(zip(names, flat)))

	analytic = torch.autograd.grad(loss_fn(*base), base)
	max_error = 0.0
	entries = 0
	with torch.no_grad():
		for index, param in enumerate(base):
			flat = param.view(-1)
			for j in range(flat.numel()):
				original = flat[j].item()
				flat[j] = original + eps
				upper = loss_fn(*base).item()
				flat[j] = original - eps
				lower = loss_fn(*base).item()
				flat[j] = original
				numeric = (upper - lower) / (2 * eps)
				max_error = max(max_error, abs(numeric - analytic[index].view(-1)[j].item()))
				entries += 1
	passed = max_error <= atol
	if not passed:
		logger.warning("Gradient check failed: max error %.3e over %d entries", max_error, entries)
	return GradientCheckReport(passed=passed, max_abs_error=max_error, n_entries=entries)


def gradient_check_loss(observations: torch.Tensor, masks: torch.Tensor, actions: torch.Tensor,
               advantages: torch.Tensor, targets: torch.Tensor):
	"""Policy-gradient plus value loss used by the float64 gradient check."""

	def loss_of_outputs(module: ActorCritic, params: Dict[str, torch.Tensor]) -> torch.Tensor:
		logits = functional_call(module.policy, _strip(params, 'policy.'), (observations,))
		values = functional_call(module.value, _strip(params, 'value.'), (observations,)).squeeze(-1)
		dist = MaskedCategorical(logits, masks)
		return (-(dist.log_prob(actions) * advantages).mean()
		        + 0.5 * ((values - targets) ** 2).mean()
		        - 0.01 * dist.entropy().mean())

	return loss_of_outputs


def _strip(params: Dict[str, torch.Tensor], prefix: str) -> Dict[str, torch.Tensor]:
	return {name[len(prefix):]: p for name, p in params.items() if name.startswith(prefix)}
