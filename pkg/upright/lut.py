"""Remapping look-up tables.

A Lut is destination-indexed: entry (c, y, x) holds the normalized
source coordinate (channel 0 horizontal, channel 1 vertical) that output
pixel (x, y) reads from.  Normalized and pixel coordinates relate by

	x_pix = (x_norm + 1) / 2 * W - 0.5

so the identity table is a pair of uniform ramps:

	>>> lut = generate_lut(TiltAngles(0, 0), EquirectGrid(2, 4), Direction.FORWARD_TILT)
	>>> lut.data[0, 0].tolist(), lut.data[1, :, 0].tolist()
	([-0.75, -0.25, 0.25, 0.75], [-0.5, 0.5])

ForwardTilt tables turn an upright panorama into a tilted one (dataset
generation); InverseUpright tables undo the tilt (adjustment).
"""

import dataclasses
import enum
import functools
import itertools
import logging
import math

import numpy as np
from tqdm import tqdm

from .errors import DomainError, HeaderError, TruncatedPayload, ValueRangeError, FormatError
from .geometry import EquirectGrid, TiltAngles, pixel_to_sphere, rotation_from_tilt, sphere_to_pixel
from .stream import fanout

logger = logging.getLogger(__name__)

MAGIC = b'ULUT'
VERSION = 1
HEADER = np.dtype([('magic', 'S4'), ('version', 'u1'), ('direction', 'u1'),
                   ('height', '<u4'), ('width', '<u4'),
                   ('pitch', '<f4'), ('roll', '<f4')])

# the figure quoted for 181 x 181 tables of 256 x 512; its per-entry
# encoding is not known, so it is reported next to ours, not derived
PAPER_GRID_STORAGE = '4.65 GB'


class Direction(enum.IntEnum):
	FORWARD_TILT = 0
	INVERSE_UPRIGHT = 1

	@classmethod
	def parse(cls, text):
		names = {'fwd': cls.FORWARD_TILT, 'forward': cls.FORWARD_TILT,
		         'inv': cls.INVERSE_UPRIGHT, 'inverse': cls.INVERSE_UPRIGHT}
		try:
			return names[text.lower()]
		except KeyError:
			raise DomainError('direction must be fwd or inv, got %r' % text)


@dataclasses.dataclass(eq=False)
class Lut:
	direction: Direction
	data: np.ndarray
	pitch: float = math.nan
	roll: float = math.nan

	def __post_init__(self):
		self.direction = Direction(self.direction)
		data = np.array(self.data, dtype=np.float32)
		if data.ndim != 3 or data.shape[0] != 2:
			raise DomainError('LUT data must be 2 x H x W, got %r' % (data.shape,))
		EquirectGrid(data.shape[1], data.shape[2])
		bad = np.flatnonzero(~(np.abs(data) <= 1.0))
		if bad.size:
			raise DomainError('LUT value %r at index %s outside [-1, 1]'
			                  % (data.flat[bad[0]], np.unravel_index(bad[0], data.shape)))
		data.flags.writeable = False
		self.data = data

	@property
	def height(self):
		return self.data.shape[1]

	@property
	def width(self):
		return self.data.shape[2]

	@property
	def grid(self):
		return EquirectGrid(self.height, self.width)

	def __repr__(self):
		return '<Lut %s %dx%d (%g, %g) at %s>' % (self.direction.name, self.height, self.width,
		                                         self.pitch, self.roll, hex(id(self)))


#_____________________________________________________________________
# Analytic generation


@functools.lru_cache(maxsize=16)
def _pixel_directions(grid):
	v, u = np.indices(grid.shape)
	dirs = pixel_to_sphere(u, v, grid)
	dirs.flags.writeable = False
	return dirs


def normalize_coordinates(px, py, grid):
	"""Pixel coordinates (x wrapped into [0, W), y within [0, H-1]) to the
	normalized pair stored in a LUT.  x_norm is folded back into [-1, 1]
	when the source lies between the last pixel centre and the seam."""
	xn = 2.0 * (px + 0.5) / grid.width - 1.0
	xn = np.where(xn > 1.0, xn - 2.0, xn)
	yn = 2.0 * (py + 0.5) / grid.height - 1.0
	return np.stack([xn, yn])


def generate_lut(angles, grid, direction):
	"""Analytic LUT rotating by R(angles) (ForwardTilt) or its transpose
	(InverseUpright)."""
	direction = Direction(direction)
	R = rotation_from_tilt(angles)
	M = R if direction is Direction.FORWARD_TILT else R.T
	rotated = _pixel_directions(grid) @ M.T
	px, py = sphere_to_pixel(rotated, grid)
	return Lut(direction, normalize_coordinates(px, py, grid).astype(np.float32),
	           angles.pitch, angles.roll)


#_____________________________________________________________________
# Precomputed grids


def lattice(angle_min, angle_max, step):
	"""Angles angle_min, angle_min + step, ..., angle_max.

	>>> lattice(-1, 1, 1).tolist()
	[-1.0, 0.0, 1.0]
	"""
	if not step > 0:
		raise DomainError('step must be positive')
	if not -90.0 <= angle_min <= angle_max <= 90.0:
		raise DomainError('angle range must satisfy -90 <= min <= max <= 90')
	count = (angle_max - angle_min) / step
	if abs(count - round(count)) > 1e-9:
		raise DomainError('range [%g, %g] is not a whole number of %g steps'
		                  % (angle_min, angle_max, step))
	return angle_min + step * np.arange(int(round(count)) + 1, dtype=np.float64)


@dataclasses.dataclass(frozen=True)
class StorageReport:
	entries: int
	height: int
	width: int
	bytes_per_value: int = 4
	header_bytes: int = HEADER.itemsize

	@property
	def payload_bytes_per_entry(self):
		return 2 * self.height * self.width * self.bytes_per_value

	@property
	def payload_bytes(self):
		return self.entries * self.payload_bytes_per_entry

	@property
	def file_bytes(self):
		return self.entries * (self.payload_bytes_per_entry + self.header_bytes)

	@property
	def half_precision_bytes(self):
		return self.entries * 2 * self.height * self.width * 2

	def lines(self):
		gib = 2.0 ** 30
		return [
			'%d entries of 2x%dx%d' % (self.entries, self.height, self.width),
			'payload  %d B (%.1f GiB) at %d bytes/value'
			% (self.payload_bytes, self.payload_bytes / gib, self.bytes_per_value),
			'files    %d B with %d-byte headers' % (self.file_bytes, self.header_bytes),
			'two-byte hypothetical %d B (%.1f GiB)'
			% (self.half_precision_bytes, self.half_precision_bytes / gib),
			'published figure for 181x181 tables of 256x512: %s (encoding unknown, unexplained)'
			% PAPER_GRID_STORAGE,
		]


@dataclasses.dataclass(eq=False)
class LutGrid:
	angle_min: float
	angle_max: float
	step: float
	height: int
	width: int
	direction: Direction
	entries: dict

	@property
	def angles(self):
		return lattice(self.angle_min, self.angle_max, self.step)

	def index(self, angle):
		i = int(round((angle - self.angle_min) / self.step))
		if not 0 <= i < len(self.angles):
			raise DomainError('angle %g outside the grid' % angle)
		return i

	def lookup(self, angles):
		return self.entries[self.index(angles.pitch), self.index(angles.roll)]

	def storage(self, bytes_per_value=4):
		return StorageReport(len(self.entries), self.height, self.width, bytes_per_value)

	def __len__(self):
		return len(self.entries)


def iter_grid(angle_min, angle_max, step, grid, direction, threads=1):
	"""Yield ((pitch index, roll index), Lut) pitch-major, generating on
	`threads` threads without changing the order."""
	values = lattice(angle_min, angle_max, step)
	keys = list(itertools.product(range(len(values)), repeat=2))
	def make(key):
		i, j = key
		return key, generate_lut(TiltAngles(values[i], values[j]), grid, direction)
	return iter(keys >> fanout(make, threads))


def precompute_grid(angle_min, angle_max, step, grid, direction, threads=1):
	"""Fully populated LutGrid, with its storage report logged."""
	count = len(lattice(angle_min, angle_max, step)) ** 2
	entries = dict(tqdm(iter_grid(angle_min, angle_max, step, grid, direction, threads),
	                    total=count, desc='lut grid', unit='lut', disable=None))
	result = LutGrid(angle_min, angle_max, step, grid.height, grid.width, Direction(direction), entries)
	for line in result.storage().lines():
		logger.info('%s', line)
	return result


#_____________________________________________________________________
# Coarse generation followed by upsampling


def wrap_unit(x):
	"""Fold values into [-1, 1) with period 2."""
	return np.mod(x + 1.0, 2.0) - 1.0


def _lerp_axis(a, axis, factor, periodic, unwrap=False):
	# half-pixel-centre sampling; at non-periodic borders the two outermost
	# samples are extrapolated so linear fields are reproduced exactly
	a = np.moveaxis(a, axis, -1)
	n = a.shape[-1]
	s = (np.arange(n * factor) + 0.5) / factor - 0.5
	if periodic:
		a = np.concatenate([a[..., -1:], a, a[..., :1]], axis=-1)
		s = s + 1.0
		i0 = np.clip(np.floor(s).astype(np.intp), 0, n)
	else:
		i0 = np.clip(np.floor(s).astype(np.intp), 0, n - 2)
	if unwrap:
		a = np.unwrap(a, discont=1.0, axis=-1, period=2.0)
	w = s - i0
	out = a[..., i0] * (1.0 - w) + a[..., i0 + 1] * w
	return np.moveaxis(out, -1, axis)


def upsample_lut_data(data, factor, interp='bilinear'):
	"""Upsample 2 x h x w LUT data by an integer factor.  Channel 0 is
	unwrapped across the seam before each interpolation pass and folded
	back after it; channel 1 is clipped into [-1, 1]."""
	data = np.asarray(data, dtype=np.float64)
	if interp == 'nearest':
		return data.repeat(factor, axis=1).repeat(factor, axis=2)
	if interp != 'bilinear':
		raise DomainError('interp must be bilinear or nearest')
	x = wrap_unit(_lerp_axis(data[0], 1, factor, periodic=True, unwrap=True))
	x = wrap_unit(_lerp_axis(x, 0, factor, periodic=False, unwrap=True))
	y = _lerp_axis(data[1], 1, factor, periodic=True)
	y = np.clip(_lerp_axis(y, 0, factor, periodic=False), -1.0, 1.0)
	return np.stack([x, y])


def coarse_then_upsample(angles, coarse_grid, factor, interp='bilinear',
                         direction=Direction.INVERSE_UPRIGHT):
	if factor < 2:
		raise DomainError('factor must be at least 2')
	coarse = generate_lut(angles, coarse_grid, direction)
	data = upsample_lut_data(coarse.data, factor, interp)
	return Lut(direction, data.astype(np.float32), angles.pitch, angles.roll)


#_____________________________________________________________________
# Error measurement


@dataclasses.dataclass(frozen=True)
class LutErrorReport:
	mean_abs_error: float
	max_abs_error: float
	psnr_per_channel: tuple
	worst_pixel: tuple

	def lines(self):
		return ['mean |error| %.6g' % self.mean_abs_error,
		        'max  |error| %.6g at x=%d y=%d' % ((self.max_abs_error,) + self.worst_pixel),
		        'psnr x %.2f dB, y %.2f dB' % self.psnr_per_channel]


def lut_error(a, b):
	"""Compare two LUTs of equal size and direction.  PSNR uses the
	peak-to-peak range 2 of normalized coordinates and is +inf for equal
	channels."""
	if a.data.shape != b.data.shape or a.direction != b.direction:
		raise DomainError('cannot compare %r with %r' % (a, b))
	diff = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))
	worst = int(np.argmax(diff))
	_, y, x = np.unravel_index(worst, diff.shape)
	psnr = []
	for channel in diff:
		mse = float(np.mean(channel ** 2))
		psnr.append(math.inf if mse == 0 else 10.0 * math.log10(4.0 / mse))
	return LutErrorReport(float(diff.mean()), float(diff.flat[worst]), tuple(psnr), (int(x), int(y)))


#_____________________________________________________________________
# ULUT files


def save_lut(lut, path):
	header = np.zeros((), dtype=HEADER)
	header['magic'] = MAGIC
	header['version'] = VERSION
	header['direction'] = int(lut.direction)
	header['height'] = lut.height
	header['width'] = lut.width
	header['pitch'] = lut.pitch
	header['roll'] = lut.roll
	with open(path, 'wb') as f:
		f.write(header.tobytes())
		f.write(lut.data.astype('<f4').tobytes())


def decode_lut(raw, name='<bytes>'):
	if len(raw) < HEADER.itemsize:
		raise HeaderError('%s: header truncated' % name)
	header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
	if header['magic'] != MAGIC:
		raise HeaderError('%s: bad magic %r' % (name, bytes(header['magic'])))
	if header['version'] != VERSION:
		raise HeaderError('%s: unsupported version %d' % (name, header['version']))
	if header['direction'] not in (0, 1):
		raise HeaderError('%s: bad direction %d' % (name, header['direction']))
	h, w = int(header['height']), int(header['width'])
	try:
		EquirectGrid(h, w)
	except DomainError as e:
		raise HeaderError('%s: %s' % (name, e))
	size = 2 * h * w * 4
	payload = raw[HEADER.itemsize:]
	if len(payload) < size:
		raise TruncatedPayload('%s: payload has %d of %d bytes' % (name, len(payload), size))
	if len(payload) > size:
		raise FormatError('%s: %d trailing bytes' % (name, len(payload) - size))
	data = np.frombuffer(payload, dtype='<f4').astype(np.float32).reshape(2, h, w)
	bad = np.flatnonzero(~(np.abs(data) <= 1.0))
	if bad.size:
		index = tuple(int(i) for i in np.unravel_index(bad[0], data.shape))
		raise ValueRangeError('%s: value %r at index %s outside [-1, 1]'
		                      % (name, float(data.flat[bad[0]]), index), index=index)
	return Lut(Direction(int(header['direction'])), data, float(header['pitch']), float(header['roll']))


def load_lut(path):
	with open(path, 'rb') as f:
		return decode_lut(f.read(), str(path))
