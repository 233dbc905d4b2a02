"""Run configuration.

A RunConfig is a flat dataclass whose every field has a default.  It is
read from and written to plain `key=value` text, and the canonical text
(`dump()`) is echoed into every checkpoint, training log and report so
that any number can be traced back to the settings that produced it.

	>>> cfg = RunConfig.from_preset('desk')
	>>> cfg.image_width, cfg.lut_height, cfg.lut_width
	(128, 64, 128)
	>>> RunConfig.parse('preset=desk\\nseed=7\\n').seed
	7
"""

import dataclasses
import logging
import typing

from .errors import DomainError

logger = logging.getLogger(__name__)

PRESETS = ('desk', 'paper')
LUT_VARIANTS = ('x16', 'x2', 'x16_6', 'no_fc')


@dataclasses.dataclass
class RunConfig:
	preset: str = 'desk'
	seed: int = 0
	threads: int = 1

	# image and shallow-feature geometry
	channels: int = 3
	image_height: int = 64
	stem_channels: int = 8
	orientation_blocks: int = 5

	# LUT generator
	embed_dim: int = 32
	coarse_height: int = 4
	coarse_width: int = 8
	upsample_factor: int = 16
	pre_blocks: int = 1
	post_blocks: int = 2
	heads: int = 2
	lut_variant: str = 'x16'

	# reconstruction
	recon_blocks: int = 5
	recon_channels: int = 16
	disc_channels: int = 16
	perceptual_seed: int = 1234

	# loss weights
	lambda_angle: float = 1000.0
	mu_lut: float = 100.0
	alpha_perceptual: float = 0.01
	beta_adversarial: float = 0.01

	# schedule
	batch_size: int = 8
	lr_orientation: float = 2e-4
	lr_lutformer: float = 3e-2
	lr_generator: float = 2e-4
	lr_discriminator: float = 1e-4
	steps: int = 200

	# initialisation (not stated in the source material; recorded here)
	weight_init: str = 'uniform_fan_in'
	embed_init_std: float = 0.02
	activation: str = 'relu'
	output_head: str = 'sigmoid'

	# dataset
	angle_min: float = -90.0
	angle_max: float = 90.0
	angle_step: float = 1.0

	def __post_init__(self):
		if self.preset not in PRESETS:
			raise DomainError('unknown preset %r' % self.preset)
		if self.lut_variant not in LUT_VARIANTS:
			raise DomainError('unknown lut_variant %r' % self.lut_variant)
		if self.embed_dim != self.coarse_height * self.coarse_width:
			raise DomainError('embed_dim must equal coarse_height * coarse_width')
		if self.coarse_width != 2 * self.coarse_height:
			raise DomainError('coarse LUT must be 2:1')
		if self.embed_dim % self.heads:
			raise DomainError('embed_dim must be divisible by heads')
		if self.image_height >> self.orientation_blocks < 1:
			raise DomainError('image too small for %d blocks' % self.orientation_blocks)
		if self.lut_height != self.image_height:
			raise DomainError('LUT height %d (coarse_height x upsample_factor) must equal image_height %d'
			                  % (self.lut_height, self.image_height))

	@property
	def image_width(self):
		return 2 * self.image_height

	@property
	def lut_height(self):
		return self.coarse_height * self.upsample_factor

	@property
	def lut_width(self):
		return self.coarse_width * self.upsample_factor

	@classmethod
	def from_preset(cls, name, **overrides):
		if name == 'paper':
			values = dict(preset='paper', image_height=256, embed_dim=512,
			              coarse_height=16, coarse_width=32, heads=8,
			              recon_channels=64, disc_channels=64)
		elif name == 'desk':
			values = dict(preset='desk')
		else:
			raise DomainError('unknown preset %r' % name)
		values.update(overrides)
		return cls(**values)

	@classmethod
	def parse(cls, text):
		"""Parse `key=value` lines.  A `preset` key, wherever it appears,
		selects the base the other keys override."""
		fields = {f.name: f for f in dataclasses.fields(cls)}
		hints = typing.get_type_hints(cls)
		values = {}
		for lineno, line in enumerate(text.splitlines(), 1):
			line = line.split('#', 1)[0].strip()
			if not line:
				continue
			key, sep, raw = line.partition('=')
			key, raw = key.strip(), raw.strip()
			if not sep or key not in fields:
				raise DomainError('line %d: unknown or malformed entry %r' % (lineno, line))
			try:
				values[key] = hints[key](raw)
			except ValueError:
				raise DomainError('line %d: bad value for %s: %r' % (lineno, key, raw))
		return cls.from_preset(values.pop('preset', 'desk'), **values)

	@classmethod
	def load(cls, path):
		with open(path, encoding='utf-8') as f:
			cfg = cls.parse(f.read())
		logger.info('loaded config %s (preset=%s)', path, cfg.preset)
		return cfg

	def replace(self, **changes):
		return dataclasses.replace(self, **changes)

	def dump(self):
		return ''.join('%s=%s\n' % (f.name, getattr(self, f.name))
		               for f in dataclasses.fields(self))

	def save(self, path):
		with open(path, 'w', encoding='utf-8') as f:
			f.write(self.dump())
