"""Image files: 8-bit PPM through Pillow, and UIMG, a raw planar float32
format for feature maps and lossless round trips.

UIMG layout: b'UIMG', version u8 = 1, channels/height/width as u32
little-endian, then C x H x W float32 little-endian values, channel
planes in order, rows top to bottom.
"""

import logging
import pathlib

import numpy as np
from PIL import Image

from .errors import FormatError, HeaderError, TruncatedPayload

logger = logging.getLogger(__name__)

UIMG_MAGIC = b'UIMG'
UIMG_VERSION = 1
UIMG_HEADER = np.dtype([('magic', 'S4'), ('version', 'u1'),
                        ('channels', '<u4'), ('height', '<u4'), ('width', '<u4')])


def read_ppm(path):
	"""C x H x W float32 in [0, 1]."""
	try:
		with Image.open(path) as img:
			img = img.convert('RGB') if img.mode not in ('RGB', 'L') else img
			pixels = np.asarray(img, dtype=np.uint8)
	except (OSError, SyntaxError) as e:
		raise FormatError('%s: %s' % (path, e))
	if pixels.ndim == 2:
		pixels = pixels[..., None]
	return np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float32) / np.float32(255)


def write_ppm(data, path):
	data = np.asarray(data)
	pixels = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
	if pixels.shape[2] == 1:
		Image.fromarray(pixels[..., 0], 'L').save(path, format='PPM')
	elif pixels.shape[2] == 3:
		Image.fromarray(pixels, 'RGB').save(path, format='PPM')
	else:
		raise FormatError('PPM holds 1 or 3 channels, got %d' % pixels.shape[2])


def write_uimg(data, path):
	data = np.asarray(data, dtype=np.float32)
	header = np.zeros((), dtype=UIMG_HEADER)
	header['magic'] = UIMG_MAGIC
	header['version'] = UIMG_VERSION
	header['channels'], header['height'], header['width'] = data.shape
	with open(path, 'wb') as f:
		f.write(header.tobytes())
		f.write(data.astype('<f4').tobytes())


def read_uimg(path):
	raw = pathlib.Path(path).read_bytes()
	if len(raw) < UIMG_HEADER.itemsize:
		raise HeaderError('%s: header truncated' % path)
	header = np.frombuffer(raw, dtype=UIMG_HEADER, count=1)[0]
	if header['magic'] != UIMG_MAGIC or header['version'] != UIMG_VERSION:
		raise HeaderError('%s: not a version %d UIMG file' % (path, UIMG_VERSION))
	shape = (int(header['channels']), int(header['height']), int(header['width']))
	size = 4 * shape[0] * shape[1] * shape[2]
	payload = raw[UIMG_HEADER.itemsize:]
	if len(payload) != size:
		raise TruncatedPayload('%s: payload has %d of %d bytes' % (path, len(payload), size))
	data = np.frombuffer(payload, dtype='<f4').astype(np.float32).reshape(shape)
	if not np.all(np.isfinite(data)):
		raise FormatError('%s: non-finite values' % path)
	return data


def read_image(path):
	if pathlib.Path(path).suffix.lower() == '.uimg':
		return read_uimg(path)
	return read_ppm(path)


def write_image(data, path):
	if pathlib.Path(path).suffix.lower() == '.uimg':
		write_uimg(data, path)
	else:
		write_ppm(data, path)
	logger.debug('wrote %s', path)
