"""Synthetic panoramas and tilted training records.

Upright panoramas are drawn procedurally (the horizon is always the
equator), tilted by angles from the whole-degree lattice with a
ForwardTilt LUT, and paired with the InverseUpright LUT that undoes the
tilt.  Each record draws from its own seed sequence, so a dataset is the
same whatever the number of threads that built it.

On disk a dataset is a directory of images and ULUT files plus
manifest.jsonl, one JSON object per record.
"""

import dataclasses
import json
import logging
import os

import numpy as np
from scipy import special
from tqdm import tqdm

from .errors import DomainError, FormatError
from .geometry import EquirectGrid, TiltAngles
from .imageio import read_image, write_image
from .lut import Direction, generate_lut, lattice, load_lut, save_lut
from .remap import BILINEAR, EquirectImage, rotate_image
from .stream import fanout

logger = logging.getLogger(__name__)

HORIZON = 'horizon'
BOXES = 'boxes'
STRIPES = 'stripes'
STYLES = (HORIZON, BOXES, STRIPES)

SPLITS = ('train', 'val', 'test')
SPLIT_PERCENT = (70, 15, 15)

MANIFEST = 'manifest.jsonl'


#_____________________________________________________________________
# Panoramas


def _lat_lon(grid):
	v, u = np.indices(grid.shape, dtype=np.float64)
	phi = 2.0 * np.pi * (u + 0.5) / grid.width - np.pi
	theta = np.pi / 2.0 - np.pi * (v + 0.5) / grid.height
	return theta, phi


def _edge(distance, width):
	"""Smooth step from 0 to 1 across about `width` around distance 0."""
	return special.expit(distance / width)


def _horizon(rng, theta, pixel, channels):
	# every channel is a non-decreasing function of latitude, sky above ground
	sky = rng.uniform(0.6, 0.95, channels)
	ground = rng.uniform(0.05, 0.35, channels)
	sky_slope = rng.uniform(0.0, 0.05, channels)
	ground_slope = rng.uniform(0.0, 0.05, channels)
	s = _edge(theta, pixel)
	t = theta[None]
	upper = sky[:, None, None] + sky_slope[:, None, None] * t
	lower = ground[:, None, None] + ground_slope[:, None, None] * t
	return lower + (upper - lower) * s[None]


def _boxes(rng, theta, phi, pixel, channels, image):
	for _ in range(rng.integers(3, 7)):
		centre = rng.uniform(-np.pi, np.pi)
		half = rng.uniform(0.1, 0.35)
		top = rng.uniform(0.1, 0.6)
		bottom = rng.uniform(-1.0, -0.3)
		colour = rng.uniform(0.1, 0.9, channels)
		d = np.abs(np.mod(phi - centre + np.pi, 2.0 * np.pi) - np.pi)
		mask = _edge(half - d, pixel) * _edge(top - theta, pixel) * _edge(theta - bottom, pixel)
		image = image + (colour[:, None, None] - image) * mask[None]
	return image


def _stripes(rng, theta, phi, channels, image):
	count = rng.integers(6, 20)
	offset = rng.uniform(0.0, 2.0 * np.pi)
	amplitude = rng.uniform(0.08, 0.2, channels)
	# fade towards the poles, where longitude is undefined
	wave = np.sin(count * phi + offset) * np.cos(theta) ** 2
	return image + amplitude[:, None, None] * wave[None]


def synth_panorama(seed, grid, style, channels=3):
	"""Deterministic upright panorama for `seed`."""
	if style not in STYLES:
		raise DomainError('style must be one of %s, got %r' % (', '.join(STYLES), style))
	rng = np.random.default_rng(seed)
	theta, phi = _lat_lon(grid)
	pixel = np.pi / grid.height
	image = _horizon(rng, theta, pixel, channels)
	if style == BOXES:
		image = _boxes(rng, theta, phi, pixel, channels, image)
	elif style == STRIPES:
		image = _stripes(rng, theta, phi, channels, image)
	return EquirectImage(np.clip(image, 0.0, 1.0).astype(np.float32))


#_____________________________________________________________________
# Records


@dataclasses.dataclass(eq=False)
class DatasetRecord:
	nonupright: EquirectImage
	angles: TiltAngles
	truth_lut: object
	upright: EquirectImage
	index: int = 0
	style: str = HORIZON
	split: str = 'train'

	def __repr__(self):
		return '<DatasetRecord %d %s %s (%g, %g)>' % (self.index, self.style, self.split,
		                                             self.angles.pitch, self.angles.roll)


def make_record(upright, angles, feature_grid=None, **fields):
	"""Tilt `upright` by `angles`; the truth LUT lives on `feature_grid`
	(the image grid by default)."""
	feature_grid = feature_grid or upright.grid
	return DatasetRecord(rotate_image(upright, angles, Direction.FORWARD_TILT, BILINEAR),
	                     angles,
	                     generate_lut(angles, feature_grid, Direction.INVERSE_UPRIGHT),
	                     upright, **fields)


@dataclasses.dataclass
class Splits:
	train: list
	val: list
	test: list

	def named(self):
		return [(name, getattr(self, name)) for name in SPLITS]

	def all(self):
		return self.train + self.val + self.test

	def __len__(self):
		return len(self.train) + len(self.val) + len(self.test)


def split_counts(n, percent=SPLIT_PERCENT):
	"""
	>>> split_counts(100)
	(70, 15, 15)
	"""
	val = n * percent[1] // 100
	test = n * percent[2] // 100
	return (n - val - test, val, test)


def assign_splits(styles, counts):
	"""Split labels for records with the given styles.  Records are dealt
	style by style to the split furthest behind its share, so each style
	is spread over the splits in proportion and the totals are exact."""
	n = len(styles)
	order = sorted(range(n), key=lambda i: (STYLES.index(styles[i]), i))
	assigned = [0, 0, 0]
	labels = [None] * n
	for dealt, i in enumerate(order, 1):
		deficit = [counts[k] * dealt / n - assigned[k] for k in range(3)]
		k = max(range(3), key=lambda k: (deficit[k] if assigned[k] < counts[k] else -np.inf, -k))
		assigned[k] += 1
		labels[i] = SPLITS[k]
	return labels


def build_dataset(n, angle_min=-90.0, angle_max=90.0, step=1.0, seed=0,
                  grid=EquirectGrid(64, 128), feature_grid=None, channels=3, threads=1):
	"""n records split 70/15/15, stratified by style."""
	if n < 10:
		raise DomainError('need at least 10 records to fill every split and style, got %d' % n)
	values = lattice(angle_min, angle_max, step)
	styles = [STYLES[i % len(STYLES)] for i in range(n)]
	labels = assign_splits(styles, split_counts(n))

	def make(index):
		rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
		image_seed = int(rng.integers(2 ** 32))
		angles = TiltAngles(float(rng.choice(values)), float(rng.choice(values)))
		upright = synth_panorama(image_seed, grid, styles[index], channels)
		return make_record(upright, angles, feature_grid,
		                   index=index, style=styles[index], split=labels[index])

	records = list(tqdm(range(n) >> fanout(make, threads), total=n,
	                    desc='dataset', unit='record', disable=None))
	splits = Splits(*([r for r in records if r.split == name] for name in SPLITS))
	logger.info('built %d records (%d/%d/%d) at %s, angles [%g, %g] step %g',
	            n, len(splits.train), len(splits.val), len(splits.test), grid, angle_min, angle_max, step)
	return splits


#_____________________________________________________________________
# Directory format


def save_dataset(splits, directory, suffix='.ppm'):
	os.makedirs(directory, exist_ok=True)
	with open(os.path.join(directory, MANIFEST), 'w', encoding='utf-8') as manifest:
		for record in splits.all():
			stem = '%05d' % record.index
			entry = {'id': record.index, 'split': record.split, 'style': record.style,
			         'pitch': record.angles.pitch, 'roll': record.angles.roll,
			         'upright': stem + '_upright' + suffix,
			         'nonupright': stem + '_tilted' + suffix,
			         'lut': stem + '.ulut'}
			write_image(record.upright.data, os.path.join(directory, entry['upright']))
			write_image(record.nonupright.data, os.path.join(directory, entry['nonupright']))
			save_lut(record.truth_lut, os.path.join(directory, entry['lut']))
			manifest.write(json.dumps(entry, sort_keys=True) + '\n')
	logger.info('wrote %d records to %s', len(splits), directory)


def load_dataset(directory):
	path = os.path.join(directory, MANIFEST)
	if not os.path.exists(path):
		raise FormatError('%s: no %s' % (directory, MANIFEST))
	groups = {name: [] for name in SPLITS}
	with open(path, encoding='utf-8') as manifest:
		for lineno, line in enumerate(manifest, 1):
			if not line.strip():
				continue
			try:
				entry = json.loads(line)
				record = DatasetRecord(
					EquirectImage(read_image(os.path.join(directory, entry['nonupright']))),
					TiltAngles(float(entry['pitch']), float(entry['roll'])),
					load_lut(os.path.join(directory, entry['lut'])),
					EquirectImage(read_image(os.path.join(directory, entry['upright']))),
					int(entry['id']), entry['style'], entry['split'])
				groups[record.split].append(record)
			except (ValueError, KeyError, TypeError, OSError) as e:
				raise FormatError('%s line %d: %s' % (path, lineno, e))
	logger.info('loaded %d records from %s', sum(len(g) for g in groups.values()), directory)
	return Splits(groups['train'], groups['val'], groups['test'])
