"""The three networks, their losses, and the end-to-end composition.

	image --OrientationNet--> (pitch, roll), shallow features
	(pitch, roll) --LutFormer--> LUT
	remap(shallow features, LUT) --Reconstructor--> upright image

Networks are Modules from upright.tensor; they take and return Tensors
laid out N x C x H x W.  Angles travel between networks normalized to
[0, 1] via (angle + 90) / 180.
"""

import dataclasses
import logging
import math
import os

import numpy as np

from . import tensor as T
from .errors import DomainError, FormatError
from .geometry import EquirectGrid, TiltAngles
from .lut import Direction, Lut, generate_lut
from .remap import BILINEAR, EquirectImage, remap_array

logger = logging.getLogger(__name__)

# one embedding row per whole degree in [-90, 90]
ANGLE_VOCABULARY = 181

ORIENTATION_CKPT = 'orientation.ckpt'
LUTFORMER_CKPT = 'lutformer.ckpt'
RECONSTRUCTION_CKPT = 'recon.ckpt'


#_____________________________________________________________________
# Configurations


@dataclasses.dataclass(frozen=True)
class OrientationNetConfig:
	channels: int
	height: int
	width: int
	stem_channels: int
	blocks: int = 5

	def __post_init__(self):
		if self.height >> self.blocks < 1 or self.width >> self.blocks < 1:
			raise DomainError('%dx%d input too small for %d blocks' % (self.height, self.width, self.blocks))

	@classmethod
	def from_run(cls, cfg):
		return cls(cfg.channels, cfg.image_height, cfg.image_width, cfg.stem_channels, cfg.orientation_blocks)

	@property
	def trunk_shape(self):
		"""Channels, height and width after the last block."""
		return (self.stem_channels << self.blocks, self.height >> self.blocks, self.width >> self.blocks)


@dataclasses.dataclass(frozen=True)
class LutFormerConfig:
	embed_dim: int
	coarse_height: int
	coarse_width: int
	factor: int
	pre_blocks: int
	post_blocks: int
	heads: int
	variant: str = 'x16'
	embed_init_std: float = 0.02

	def __post_init__(self):
		if self.embed_dim != self.coarse_height * self.coarse_width:
			raise DomainError('embed_dim must equal coarse_height * coarse_width')
		if self.embed_dim % self.heads:
			raise DomainError('embed_dim must be divisible by heads')
		if self.variant == 'x2' and self.factor & (self.factor - 1):
			raise DomainError('the x2 variant needs a power-of-two factor')

	@classmethod
	def from_run(cls, cfg):
		return cls(cfg.embed_dim, cfg.coarse_height, cfg.coarse_width, cfg.upsample_factor,
		           cfg.pre_blocks, cfg.post_blocks, cfg.heads, cfg.lut_variant, cfg.embed_init_std)

	@property
	def lut_grid(self):
		return EquirectGrid(self.coarse_height * self.factor, self.coarse_width * self.factor)


@dataclasses.dataclass(frozen=True)
class ReconstructorConfig:
	feature_channels: int
	out_channels: int
	channels: int
	blocks: int = 5
	disc_channels: int = 16

	@classmethod
	def from_run(cls, cfg):
		return cls(cfg.stem_channels, cfg.channels, cfg.recon_channels, cfg.recon_blocks, cfg.disc_channels)

	@property
	def patch_receptive_field(self):
		# two 4x4 stride-2 convolutions followed by a 3x3 stride-1 one
		return 1 + (3 - 1) * 4 + (4 - 1) * 2 + (4 - 1) * 1


@dataclasses.dataclass(frozen=True)
class LossWeights:
	lambda_angle: float = 1000.0
	mu_lut: float = 100.0
	alpha: float = 0.01
	beta: float = 0.01

	def __post_init__(self):
		if min(self.lambda_angle, self.mu_lut, self.alpha) <= 0 or self.beta < 0:
			raise DomainError('loss weights must be positive (beta = 0 disables the discriminator)')

	@classmethod
	def from_run(cls, cfg):
		return cls(cfg.lambda_angle, cfg.mu_lut, cfg.alpha_perceptual, cfg.beta_adversarial)


#_____________________________________________________________________
# Angles


def normalize_angles(angles):
	"""TiltAngles, or an N x 2 array of degrees, to values in [0, 1]."""
	if isinstance(angles, TiltAngles):
		angles = [angles.pitch, angles.roll]
	return (np.asarray(angles, dtype=np.float64) + 90.0) / 180.0


def decode_angles(p_norm, r_norm):
	"""
	>>> decode_angles(0.75, 0.25)
	TiltAngles(pitch=45.0, roll=-45.0)
	"""
	for value in (p_norm, r_norm):
		if not 0.0 <= value <= 1.0:
			raise DomainError('normalized angle %r outside [0, 1]' % (value,))
	return TiltAngles(float(p_norm) * 180.0 - 90.0, float(r_norm) * 180.0 - 90.0)


def angle_indices(degrees):
	"""Nearest whole-degree embedding rows for an array of angles."""
	degrees = np.asarray(degrees, dtype=np.float64)
	index = np.rint(degrees + 90.0)
	if not np.all(np.isfinite(index)) or index.min() < 0 or index.max() >= ANGLE_VOCABULARY:
		raise DomainError('angle outside the embedding vocabulary [-90, 90]')
	return index.astype(np.intp)


#_____________________________________________________________________
# Orientation network


class OrientationNet(T.Module):
	"""Two stem convolutions (the shallow features), then blocks of one
	max pooling and two convolutions doubling the channels, average
	pooling and a fully connected layer to two sigmoid outputs."""

	def __init__(self, config, rng):
		self.config = config
		s = config.stem_channels
		self.stem = [T.Conv2d(rng, config.channels, s, 3, padding=1), T.Conv2d(rng, s, s, 3, padding=1)]
		self.blocks = []
		for i in range(config.blocks):
			c = s << i
			self.blocks.append(T.Conv2d(rng, c, 2 * c, 3, padding=1))
			self.blocks.append(T.Conv2d(rng, 2 * c, 2 * c, 3, padding=1))
		self.head = T.Linear(rng, s << config.blocks, 2)

	def shallow(self, x):
		for conv in self.stem:
			x = T.relu(conv(x))
		return x

	def trunk(self, features):
		x = features
		for first, second in zip(self.blocks[::2], self.blocks[1::2]):
			x = T.relu(second(T.relu(first(T.maxpool2(x)))))
		return x

	def __call__(self, x):
		"""(N x 2 normalized (pitch, roll), shallow features)."""
		c, h, w = x.shape[1:]
		if (c, h, w) != (self.config.channels, self.config.height, self.config.width):
			raise DomainError('orientation net expects %dx%dx%d input, got %dx%dx%d'
			                  % ((self.config.channels, self.config.height, self.config.width) + (c, h, w)))
		features = self.shallow(x)
		return T.sigmoid(self.head(T.global_avgpool(self.trunk(features)))), features


def orientation_forward(net, image):
	"""(p_norm, r_norm, shallow features) for one EquirectImage."""
	with T.no_grad():
		out, features = net(T.Tensor(image.data[None]))
	p, r = out.data[0]
	return float(p), float(r), features.data[0]


def angle_loss(pred, truth, lam):
	"""lam * sum of per-component smooth L1, averaged over the batch.

	`pred` is an N x 2 Tensor and `truth` an N x 2 array, both normalized.
	"""
	truth = np.asarray(truth, dtype=pred.dtype).reshape(pred.shape)
	return T.smooth_l1(pred - truth).sum(axis=1).mean() * lam


#_____________________________________________________________________
# LUT generator


class EncoderBlock(T.Module):
	"""Post-norm transformer encoder block.  `make_linear()` builds each
	token-wise linear map, dense or factored."""

	def __init__(self, dim, heads, make_linear):
		self.heads = heads
		self.query, self.key, self.value, self.output = (make_linear() for _ in range(4))
		self.norm1 = T.LayerNorm(dim)
		self.hidden = make_linear()
		self.out = make_linear()
		self.norm2 = T.LayerNorm(dim)

	def __call__(self, x):
		x = self.norm1(x + T.multihead_self_attention(x, self.heads, (self.query, self.key, self.value, self.output)))
		return self.norm2(x + self.out(T.relu(self.hidden(x))))


class UpsampleStage(T.Module):
	def __init__(self, factor, height, width, heads, count, rng):
		self.factor = factor
		self.height, self.width = height, width
		self.blocks = [EncoderBlock(height * width, heads, lambda: T.KronLinear(rng, height, width))
		               for _ in range(count)]

	def __call__(self, plane):
		n = plane.shape[0]
		plane = T.bilinear_upsample(plane, self.factor)
		tokens = T.reshape(plane, (n, 2, self.height * self.width))
		for block in self.blocks:
			tokens = block(tokens)
		return T.reshape(tokens, (n, 2, self.height, self.width))


class LutFormer(T.Module):
	"""Two angle tokens to a 2 x H x W LUT.

	Pitch and roll share one embedding table; learned position vectors
	tell the two slots apart.  Variants:

		x16    encoder blocks, fusion, one upsample, post blocks
		x2     repeated x2 upsampling, one block after each
		x16_6  as x16 with six post-upsample blocks
		no_fc  as x16 without the fusion layer
	"""

	def __init__(self, config, rng):
		self.config = config
		d = config.embed_dim
		self.embed = T.Embedding(rng, ANGLE_VOCABULARY, d, config.embed_init_std)
		self.position = T.Parameter(rng.normal(0.0, config.embed_init_std, size=(2, d)).astype(np.float32),
		                            'position')
		self.pre = [EncoderBlock(d, config.heads, lambda: T.Linear(rng, d, d))
		            for _ in range(config.pre_blocks)]
		self.fusion = None if config.variant == 'no_fc' else T.Linear(rng, 2 * d, 2 * d)
		h, w = config.coarse_height, config.coarse_width
		if config.variant == 'x2':
			self.stages = []
			for _ in range(int(math.log2(config.factor))):
				h, w = 2 * h, 2 * w
				self.stages.append(UpsampleStage(2, h, w, config.heads, 1, rng))
		else:
			count = 6 if config.variant == 'x16_6' else config.post_blocks
			self.stages = [UpsampleStage(config.factor, h * config.factor, w * config.factor,
			                             config.heads, count, rng)]

	def encode(self, angles):
		"""N x 2 x embed_dim tokens after the pre-upsample blocks."""
		tokens = self.embed(angle_indices(angles)) + self.position
		for block in self.pre:
			tokens = block(tokens)
		return tokens

	def fuse(self, tokens):
		if self.fusion is None:
			return tokens
		n, _, d = tokens.shape
		return T.reshape(self.fusion(T.reshape(tokens, (n, 2 * d))), (n, 2, d))

	def __call__(self, angles):
		"""N x 2 degrees (pitch, roll) to N x 2 x H x W values in (-1, 1)."""
		angles = np.asarray(angles, dtype=np.float64).reshape(-1, 2)
		tokens = self.fuse(self.encode(angles))
		plane = T.reshape(tokens, (angles.shape[0], 2, self.config.coarse_height, self.config.coarse_width))
		for stage in self.stages:
			plane = stage(plane)
		return T.tanh(plane)

	def generate(self, angles):
		"""InverseUpright Lut for one TiltAngles."""
		with T.no_grad():
			out = self([[angles.pitch, angles.roll]])
		return Lut(Direction.INVERSE_UPRIGHT, out.data[0], angles.pitch, angles.roll)


def lut_loss(generated, truth, mu):
	"""mu times the mean absolute difference over 2 x H x W (and the batch)."""
	truth = np.asarray(truth, dtype=generated.dtype)
	if truth.shape != generated.shape:
		raise DomainError('generated LUT %s and truth %s differ in shape' % (generated.shape, truth.shape))
	return T.tabs(generated - truth).mean() * mu


#_____________________________________________________________________
# Reconstruction


class ResidualBlock(T.Module):
	def __init__(self, channels, rng):
		self.first = T.Conv2d(rng, channels, channels, 3, padding=1)
		self.second = T.Conv2d(rng, channels, channels, 3, padding=1)

	def __call__(self, x):
		return x + self.second(T.relu(self.first(x)))


class Reconstructor(T.Module):
	def __init__(self, config, rng):
		self.config = config
		self.stem = T.Conv2d(rng, config.feature_channels, config.channels, 3, padding=1)
		self.blocks = [ResidualBlock(config.channels, rng) for _ in range(config.blocks)]
		self.head = T.Conv2d(rng, config.channels, config.out_channels, 3, padding=1)

	def __call__(self, features):
		if features.shape[1] != self.config.feature_channels:
			raise DomainError('reconstructor expects %d feature channels, got %d'
			                  % (self.config.feature_channels, features.shape[1]))
		x = T.relu(self.stem(features))
		for block in self.blocks:
			x = block(x)
		return T.sigmoid(self.head(x))


class Discriminator(T.Module):
	"""Unconditional patch discriminator; each output value judges one
	receptive field of the input."""

	def __init__(self, config, rng):
		c = config.disc_channels
		self.layers = [T.Conv2d(rng, config.out_channels, c, 4, stride=2, padding=1),
		               T.Conv2d(rng, c, 2 * c, 4, stride=2, padding=1),
		               T.Conv2d(rng, 2 * c, 1, 3, padding=1)]

	def __call__(self, image):
		x = image
		for conv in self.layers[:-1]:
			x = T.leaky_relu(conv(x))
		return T.sigmoid(self.layers[-1](x))


class PerceptualExtractor(T.Module):
	"""Fixed random convolution pyramid used as the feature space of the
	perceptual loss.  Built from its own seed and frozen."""

	def __init__(self, channels, seed):
		rng = np.random.default_rng(seed)
		self.layers = [T.Conv2d(rng, channels, 8, 3, padding=1),
		               T.Conv2d(rng, 8, 16, 3, stride=2, padding=1),
		               T.Conv2d(rng, 16, 32, 3, stride=2, padding=1)]
		self.freeze()

	def __call__(self, image):
		features = []
		x = image
		for conv in self.layers:
			x = T.relu(conv(x))
			features.append(x)
		return features


def mse(a, b):
	d = a - b
	return (d * d).mean()


def l1(a, b):
	return T.tabs(a - b).mean()


def bce(p, target, eps=1e-7):
	"""Binary cross-entropy against a constant or array target."""
	p = T.clip(p, eps, 1.0 - eps)
	target = np.broadcast_to(np.asarray(target, dtype=p.dtype), p.shape)
	return -(T.log(p) * target + T.log(1.0 - p) * (1.0 - target)).mean()


def gaussian_window(size=11, sigma=1.5):
	x = np.arange(size) - (size - 1) / 2.0
	w = np.exp(-x * x / (2.0 * sigma * sigma))
	return w / w.sum()


def ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
	"""Mean SSIM over valid Gaussian windows, values in [0, 1], as a
	differentiable scalar.  Statistics are per channel."""
	n, c, h, w = a.shape
	if h < size or w < size:
		raise DomainError('images smaller than the %dx%d SSIM window' % (size, size))
	g = gaussian_window(size, sigma).astype(a.dtype)
	rows = T.Tensor(g.reshape(1, 1, 1, size))
	cols = T.Tensor(g.reshape(1, 1, size, 1))
	def blur(x):
		return T.conv2d(T.conv2d(T.reshape(x, (n * c, 1, h, w)), rows), cols)
	c1, c2 = k1 ** 2, k2 ** 2
	mu_a, mu_b = blur(a), blur(b)
	var_a = blur(a * a) - mu_a * mu_a
	var_b = blur(b * b) - mu_b * mu_b
	cov = blur(a * b) - mu_a * mu_b
	num = (mu_a * mu_b * 2.0 + c1) * (cov * 2.0 + c2)
	den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
	return (num / den).mean()


def reconstruction_loss(generated, target, disc, weights, extractor):
	"""alpha * perceptual + (1 - SSIM) + pixel L1 + beta * adversarial.

	Returns the total as a Tensor and the four components as floats.  The
	adversarial term is the non-saturating BCE of the discriminator's
	verdict on `generated` against 'real'; with beta = 0 or no
	discriminator it is 0.
	"""
	target = T.Tensor(np.asarray(target.data if isinstance(target, T.Tensor) else target,
	                             dtype=generated.dtype))
	fake_features = extractor(generated)
	with T.no_grad():
		real_features = extractor(target)
	perceptual = None
	for f, r in zip(fake_features, real_features):
		term = mse(f, r)
		perceptual = term if perceptual is None else perceptual + term
	structural = 1.0 - ssim(generated, target)
	pixel = l1(generated, target)
	total = perceptual * weights.alpha + structural + pixel
	adversarial = 0.0
	if disc is not None and weights.beta > 0:
		adv = bce(disc(generated), 1.0)
		total = total + adv * weights.beta
		adversarial = adv.item()
	return total, {'perceptual': perceptual.item(), 'ssim': structural.item(),
	               'pixel': pixel.item(), 'adversarial': adversarial}


def discriminator_loss(disc, real, fake):
	"""BCE of real images against 1 and generated ones against 0."""
	return (bce(disc(real), 1.0) + bce(disc(fake.detach()), 0.0)) * 0.5


#_____________________________________________________________________
# End to end


def build_models(cfg):
	"""Fresh networks seeded from cfg.seed, in training order."""
	rng = np.random.default_rng(cfg.seed)
	recon = ReconstructorConfig.from_run(cfg)
	return (OrientationNet(OrientationNetConfig.from_run(cfg), rng),
	        LutFormer(LutFormerConfig.from_run(cfg), rng),
	        Reconstructor(recon, rng),
	        Discriminator(recon, rng))


class UprightPipeline(object):
	"""Orientation, LUT generation, feature remap and reconstruction.

	Any stage can be replaced:

		features(image, shallow) -> C x H x W array to be remapped
		lut_source(angles, grid) -> Lut
		reconstruct(features)    -> C x H x W array in [0, 1]
	"""

	def __init__(self, orientation, lutformer=None, reconstructor=None,
	             features=None, lut_source=None, reconstruct=None,
	             interp=BILINEAR, threads=1):
		self.orientation = orientation
		self.lutformer = lutformer
		self.reconstructor = reconstructor
		self.features = features or (lambda image, shallow: shallow)
		self.lut_source = lut_source or self._generated_lut
		self.reconstruct = reconstruct or self._reconstructed
		self.interp = interp
		self.threads = threads

	@classmethod
	def load(cls, cfg, ckpt_dir, **hooks):
		orientation, lutformer, reconstructor, _ = build_models(cfg)
		for model, name in ((orientation, ORIENTATION_CKPT), (lutformer, LUTFORMER_CKPT),
		                    (reconstructor, RECONSTRUCTION_CKPT)):
			path = os.path.join(ckpt_dir, name)
			if not os.path.exists(path):
				raise FormatError('missing checkpoint %s' % path)
			state, _ = T.load_checkpoint(path)
			model.load_state_dict(state)
			model.freeze()
		logger.info('loaded checkpoints from %s', ckpt_dir)
		return cls(orientation, lutformer, reconstructor, **hooks)

	def _generated_lut(self, angles, grid):
		lut = self.lutformer.generate(angles)
		if lut.grid != grid:
			raise DomainError('generated LUT is %s but features are %s' % (lut.grid, grid))
		return lut

	def _reconstructed(self, features):
		with T.no_grad():
			return self.reconstructor(T.Tensor(features[None])).data[0]

	def predict(self, image):
		p, r, shallow = orientation_forward(self.orientation, image)
		return decode_angles(p, r), shallow

	def end_to_end_adjust(self, image):
		"""(predicted TiltAngles, upright EquirectImage)."""
		angles, shallow = self.predict(image)
		features = np.asarray(self.features(image, shallow), dtype=np.float32)
		lut = self.lut_source(angles, EquirectGrid(features.shape[1], features.shape[2]))
		rotated = remap_array(features, lut.data, self.interp, self.threads)
		return angles, EquirectImage(self.reconstruct(rotated))


def analytic_lut(angles, grid):
	"""lut_source computing the exact InverseUpright table."""
	return generate_lut(angles, grid, Direction.INVERSE_UPRIGHT)
