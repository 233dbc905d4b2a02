"""Apply a Lut to images and feature maps.

Sampling wraps horizontally (longitude is periodic) and clamps
vertically (rows 0 and H - 1 sit next to the poles).  Weights are
computed in float64, results stored in float32.  Destination rows are
independent, so they can be spread over threads; the arithmetic per
pixel does not depend on the split and the output is bitwise the same.
"""

import dataclasses
import logging

import numpy as np

from .errors import DomainError
from .geometry import EquirectGrid
from .lut import generate_lut
from .stream import fanout

logger = logging.getLogger(__name__)

BILINEAR = 'bilinear'
NEAREST = 'nearest'


@dataclasses.dataclass(eq=False)
class EquirectImage:
	"""C x H x W float32 values on an equirectangular grid."""
	data: np.ndarray

	def __post_init__(self):
		data = np.asarray(self.data, dtype=np.float32)
		if data.ndim != 3 or data.shape[0] < 1:
			raise DomainError('image data must be C x H x W, got %r' % (data.shape,))
		EquirectGrid(data.shape[1], data.shape[2])
		if not np.all(np.isfinite(data)):
			raise DomainError('image contains non-finite values')
		self.data = data

	@property
	def channels(self):
		return self.data.shape[0]

	@property
	def grid(self):
		return EquirectGrid(self.data.shape[1], self.data.shape[2])

	@property
	def shape(self):
		return self.data.shape


def _sample_rows(source, lut_data, rows, interp):
	H, W = source.shape[-2:]
	xs = (lut_data[0, rows].astype(np.float64) + 1.0) * 0.5 * W - 0.5
	ys = (lut_data[1, rows].astype(np.float64) + 1.0) * 0.5 * H - 0.5
	if interp == NEAREST:
		xi = np.mod(np.floor(xs + 0.5).astype(np.intp), W)
		yi = np.clip(np.floor(ys + 0.5).astype(np.intp), 0, H - 1)
		return source[..., yi, xi]
	x0 = np.floor(xs)
	y0 = np.floor(ys)
	fx = xs - x0
	fy = ys - y0
	x0 = np.mod(x0.astype(np.intp), W)
	x1 = np.mod(x0 + 1, W)
	y1 = np.clip(y0.astype(np.intp) + 1, 0, H - 1)
	y0 = np.clip(y0.astype(np.intp), 0, H - 1)
	top = source[..., y0, x0] * (1.0 - fx) + source[..., y0, x1] * fx
	bottom = source[..., y1, x0] * (1.0 - fx) + source[..., y1, x1] * fx
	return (top * (1.0 - fy) + bottom * fy).astype(np.float32)


def remap_array(source, lut_data, interp=BILINEAR, threads=1):
	"""Gather `source` (..., H, W) through LUT data 2 x H x W."""
	source = np.asarray(source, dtype=np.float32)
	lut_data = np.asarray(lut_data)
	if lut_data.ndim != 3 or lut_data.shape[0] != 2 or lut_data.shape[1:] != source.shape[-2:]:
		raise DomainError('LUT %r does not match image %r' % (lut_data.shape, source.shape))
	if np.isnan(lut_data).any():
		raise DomainError('LUT contains NaN')
	if interp not in (BILINEAR, NEAREST):
		raise DomainError('interp must be bilinear or nearest, got %r' % (interp,))
	H = source.shape[-2]
	if threads is None or threads <= 1:
		return _sample_rows(source, lut_data, slice(0, H), interp)
	step = max(1, -(-H // (4 * threads)))
	bands = [slice(r, min(r + step, H)) for r in range(0, H, step)]
	parts = bands >> fanout(lambda rows: _sample_rows(source, lut_data, rows, interp), threads) >> list
	return np.concatenate(parts, axis=-2)


def remap(image, lut, interp=BILINEAR, threads=1):
	"""Realize `output(d) = input(lut(d))` on an EquirectImage."""
	return EquirectImage(remap_array(image.data, lut.data, interp, threads))


def rotate_image(image, angles, direction, interp=BILINEAR, threads=1):
	"""generate_lut followed by remap."""
	return remap(image, generate_lut(angles, image.grid, direction), interp, threads)
