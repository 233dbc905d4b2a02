"""Stage-wise training.

The networks train one after another: the orientation net first, then
the LUT generator, then the reconstructor against its discriminator.
Each stage loads the checkpoints of the stages before it, freezes them,
and writes its own checkpoint into the same directory.  Every step is
appended to a JSON-lines log so that two runs can be compared byte for
byte.
"""

import dataclasses
import json
import logging
import math
import os

import numpy as np
from tqdm import tqdm

from . import tensor as T
from .errors import DomainError, FormatError, NumericError
from .models import (LUTFORMER_CKPT, ORIENTATION_CKPT, RECONSTRUCTION_CKPT, LossWeights,
                     PerceptualExtractor, angle_loss, build_models, discriminator_loss,
                     lut_loss, normalize_angles, reconstruction_loss)
from .remap import remap_array
from .stream import chop, map

logger = logging.getLogger(__name__)

ORIENTATION = 'orientation'
LUTFORMER = 'lutformer'
RECONSTRUCTION = 'recon'
STAGES = (ORIENTATION, LUTFORMER, RECONSTRUCTION)

DISCRIMINATOR_CKPT = 'disc.ckpt'


@dataclasses.dataclass
class StageResult:
	stage: str
	checkpoint: str
	history: list


class TrainingLog(object):
	"""Step records kept in memory and, given a path, written as JSON lines."""

	def __init__(self, path=None, config_text=''):
		self.history = []
		self.file = None
		if path is not None:
			self.file = open(path, 'w', encoding='utf-8')
			self.file.write(json.dumps({'config': config_text}) + '\n')

	def record(self, **entry):
		self.history.append(entry)
		if self.file is not None:
			self.file.write(json.dumps(entry, sort_keys=True) + '\n')
		logger.debug('%s', entry)

	def close(self):
		if self.file is not None:
			self.file.close()
			self.file = None


def batches(records, batch_size, rng):
	"""Endless shuffled batches, reshuffled every epoch."""
	while True:
		order = rng.permutation(len(records))
		yield from order >> map(records.__getitem__) >> chop(batch_size)


def _load_frozen(model, ckpt_dir, name):
	path = os.path.join(ckpt_dir, name)
	if not os.path.exists(path):
		raise FormatError('missing checkpoint %s (train the earlier stage first)' % path)
	state, _ = T.load_checkpoint(path)
	model.load_state_dict(state)
	return model.freeze()


def _check(loss, stage, step, components):
	if not math.isfinite(loss):
		raise NumericError('%s loss became %r at step %d (%s)' % (stage, loss, step, components))


def _stack(images):
	return np.stack([image.data for image in list(images)])


def _angles(batch):
	return np.array([[r.angles.pitch, r.angles.roll] for r in batch], dtype=np.float64)


def rotated_features(orientation, lutformer, batch, threads=1):
	"""Shallow features of the tilted images remapped with the generated
	LUTs for the true angles: the reconstructor's training input."""
	with T.no_grad():
		shallow = orientation.shallow(T.Tensor(_stack(r.nonupright for r in batch))).data
		luts = lutformer(_angles(batch)).data
	return np.stack([remap_array(f, lut, threads=threads) for f, lut in zip(shallow, luts)])


def train_stage(stage, records, cfg, ckpt_dir, steps=None, log_path=None, threads=1):
	"""Train one stage on `records` (DatasetRecords) and write its
	checkpoint into `ckpt_dir`.  Returns a StageResult."""
	if stage not in STAGES:
		raise DomainError('stage must be one of %s, got %r' % (', '.join(STAGES), stage))
	if not records:
		raise DomainError('dataset is empty')
	steps = cfg.steps if steps is None else steps
	os.makedirs(ckpt_dir, exist_ok=True)
	rng = np.random.default_rng([cfg.seed, STAGES.index(stage)])
	weights = LossWeights.from_run(cfg)
	orientation, lutformer, generator, disc = build_models(cfg)
	log = TrainingLog(log_path, cfg.dump())
	feed = batches(records, cfg.batch_size, rng)

	if stage == ORIENTATION:
		model = orientation
		optimizers = [T.Adam(orientation.parameters(), cfg.lr_orientation)]
		def step_fn(batch):
			out, _ = orientation(T.Tensor(_stack(r.nonupright for r in batch)))
			loss = angle_loss(out, normalize_angles(_angles(batch)), weights.lambda_angle)
			optimizers[0].zero_grad()
			loss.backward()
			optimizers[0].step()
			return {'loss': loss.item()}
		name = ORIENTATION_CKPT

	elif stage == LUTFORMER:
		_load_frozen(orientation, ckpt_dir, ORIENTATION_CKPT)
		model = lutformer
		optimizers = [T.SGD(lutformer.parameters(), cfg.lr_lutformer)]
		def step_fn(batch):
			truth = np.stack([r.truth_lut.data for r in batch])
			loss = lut_loss(lutformer(_angles(batch)), truth, weights.mu_lut)
			optimizers[0].zero_grad()
			loss.backward()
			optimizers[0].step()
			return {'loss': loss.item()}
		name = LUTFORMER_CKPT

	else:
		_load_frozen(orientation, ckpt_dir, ORIENTATION_CKPT)
		_load_frozen(lutformer, ckpt_dir, LUTFORMER_CKPT)
		model = generator
		extractor = PerceptualExtractor(cfg.channels, cfg.perceptual_seed)
		adversarial = weights.beta > 0
		optimizers = [T.Adam(generator.parameters(), cfg.lr_generator)]
		if adversarial:
			optimizers.append(T.Adam(disc.parameters(), cfg.lr_discriminator))
		def step_fn(batch):
			features = T.Tensor(rotated_features(orientation, lutformer, batch, threads))
			target = T.Tensor(_stack(r.upright for r in batch))
			fake = generator(features)
			total, components = reconstruction_loss(fake, target, disc if adversarial else None,
			                                        weights, extractor)
			optimizers[0].zero_grad()
			disc.zero_grad()
			total.backward()
			optimizers[0].step()
			if adversarial:
				d_loss = discriminator_loss(disc, target, fake)
				optimizers[1].zero_grad()
				d_loss.backward()
				optimizers[1].step()
				components['discriminator'] = d_loss.item()
			components['loss'] = total.item()
			return components
		name = RECONSTRUCTION_CKPT

	logger.info('training %s for %d steps on %d records (batch %d)',
	            stage, steps, len(records), cfg.batch_size)
	progress = tqdm(range(steps), desc=stage, unit='step', disable=None)
	try:
		for step in progress:
			components = step_fn(next(feed))
			_check(components['loss'], stage, step, components)
			log.record(stage=stage, step=step, **components)
			progress.set_postfix(loss='%.4g' % components['loss'])
	finally:
		progress.close()
		log.close()

	path = os.path.join(ckpt_dir, name)
	T.save_checkpoint(path, model.state_dict(), cfg.dump())
	if stage == RECONSTRUCTION and weights.beta > 0:
		T.save_checkpoint(os.path.join(ckpt_dir, DISCRIMINATOR_CKPT), disc.state_dict(), cfg.dump())
	logger.info('wrote %s (%d parameters)', path, model.count())
	return StageResult(stage, path, log.history)


def train_all(records, cfg, ckpt_dir, steps=None, log_dir=None, threads=1):
	"""The three stages in order."""
	results = []
	for stage in STAGES:
		log_path = None if log_dir is None else os.path.join(log_dir, '%s.jsonl' % stage)
		results.append(train_stage(stage, records, cfg, ckpt_dir, steps, log_path, threads))
	return results
