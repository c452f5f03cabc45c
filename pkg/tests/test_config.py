"""Tests for typed configuration objects."""

import dataclasses
import json
import math

import pytest

from ionshuttle.config import (
	ABLATIONS, EmbeddingConfig, InferenceConfig, NetworkConfig, PpoConfig, RewardConfig, TrainConfig, load_config,
)
from ionshuttle.errors import InvalidSpecError


class TestRewardConfig:
	"""Test reward parameters."""

	def test_defaults(self):
		cfg = RewardConfig()
		assert cfg.gamma == pytest.approx(0.9995)
		assert cfg.c_r == 0.1
		assert cfg.gamma_s == 1.0
		assert cfg.shaping_enabled

	def test_from_gamma(self):
		cfg = RewardConfig.from_gamma(0.9, c_r=0.5)
		assert cfg.beta == pytest.approx(-math.log(0.9))
		assert cfg.gamma == pytest.approx(0.9)
		assert cfg.c_r == 0.5

	@pytest.mark.parametrize('kwargs', [{'beta': 0.0}, {'c_r': -1.0}, {'gamma_s': 0.0}, {'gamma_s': 1.5}])
	def test_invalid(self, kwargs):
		with pytest.raises(InvalidSpecError):
			RewardConfig(**kwargs)

	def test_invalid_gamma(self):
		with pytest.raises(InvalidSpecError):
			RewardConfig.from_gamma(1.0)


class TestTrainConfig:
	"""Test the training config, presets and ablations."""

	def test_default_hyperparameters(self):
		cfg = TrainConfig()
		assert cfg.chip == 'builtin:x50'
		assert cfg.n_gates_budget == 1275
		assert (cfg.network.n_hidden, cfg.network.n_blocks) == (512, 3)
		ppo = cfg.ppo
		assert (ppo.learning_rate, ppo.clip_ratio, ppo.n_envs, ppo.n_steps) == (2.5e-4, 0.1, 250, 40)
		assert (ppo.epochs, ppo.minibatch_size, ppo.gae_lambda, ppo.entropy_coef) == (4, 1024, 0.96, 1e-4)
		emb = cfg.embedding
		assert (emb.k_lookahead, emb.b_cell, emb.b_total) == (4, 6, 7)

	def test_desk_scale(self):
		cfg = TrainConfig.desk_scale()
		assert cfg.chip == 'builtin:x6'
		assert cfg.n_max == 6
		assert cfg.n_gates_budget == 15
		assert cfg.ppo.total_learning_steps == 50_000
		assert cfg.ppo.max_seconds == 7200.0

	def test_desk_scale_overrides(self):
		assert TrainConfig.desk_scale(seed=9).seed == 9

	def test_round_trip(self, tmp_path):
		"""save/load_config reproduce nested configs."""
		cfg = TrainConfig.desk_scale(seed=3).with_ablation('linear')
		path = tmp_path / 'cfg.json'
		cfg.save(path)
		assert load_config(path) == cfg

	def test_partial_document(self, tmp_path):
		"""Missing keys keep their defaults."""
		path = tmp_path / 'cfg.json'
		path.write_text(json.dumps({'seed': 4, 'ppo': {'n_envs': 8}}))
		cfg = load_config(path)
		assert cfg.seed == 4
		assert cfg.ppo.n_envs == 8
		assert cfg.ppo.n_steps == PpoConfig().n_steps

	@pytest.mark.parametrize('document', [
		{'unknown_key': 1},
		{'ppo': {'clip_ratio': 2.0}},
		{'embedding': {'encoding': 'fourier'}},
		{'network': {'n_hidden': 0}},
		{'n_gates_budget': 0},
	])
	def test_invalid_documents(self, tmp_path, document):
		path = tmp_path / 'cfg.json'
		path.write_text(json.dumps(document))
		with pytest.raises(InvalidSpecError):
			load_config(path)

	def test_unreadable(self, tmp_path):
		path = tmp_path / 'cfg.json'
		path.write_text('{not json')
		with pytest.raises(InvalidSpecError):
			load_config(path)

	def test_ablations(self):
		"""Each ablation flips exactly one switch."""
		base = TrainConfig.desk_scale()
		assert base.with_ablation('linear').embedding.encoding == 'linear'
		assert base.with_ablation('naive').embedding.representation == 'naive'
		assert not base.with_ablation('no-shaping').reward.shaping_enabled
		gamma_s = base.with_ablation('gamma-s').reward
		assert gamma_s.gamma_s == pytest.approx(RewardConfig().gamma)
		assert dataclasses.replace(gamma_s, gamma_s=1.0) == base.reward
		for name in ABLATIONS:
			changed = base.with_ablation(name)
			assert changed.ppo == base.ppo and changed.network == base.network

	def test_unknown_ablation(self):
		with pytest.raises(InvalidSpecError):
			TrainConfig().with_ablation('dropout')


class TestOtherConfigs:
	"""Test validation of the smaller configs."""

	@pytest.mark.parametrize('kwargs', [{'k_lookahead': 0}, {'b_cell': 0}, {'representation': 'graph'},
	                                    {'cell_x_max': 0.0}])
	def test_embedding_invalid(self, kwargs):
		with pytest.raises(InvalidSpecError):
			EmbeddingConfig(**kwargs)

	@pytest.mark.parametrize('kwargs', [{'time_budget': -1.0}, {'max_rollouts': 0}, {'step_cap': 0}])
	def test_inference_invalid(self, kwargs):
		with pytest.raises(InvalidSpecError):
			InferenceConfig(**kwargs)

	def test_network_without_blocks(self):
		assert NetworkConfig(n_hidden=8, n_blocks=0).n_blocks == 0

	@pytest.mark.parametrize('kwargs', [{'gae_lambda': 1.5}, {'n_envs': 0}, {'learning_rate': 0.0},
	                                    {'max_grad_norm': -1.0}, {'total_learning_steps': -1}])
	def test_ppo_invalid(self, kwargs):
		with pytest.raises(InvalidSpecError):
			PpoConfig(**kwargs)
