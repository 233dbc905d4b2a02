"""Accuracy tables, image quality, throughput and storage reports.

Reports come out two ways: aligned text for people (`lines()`) and one
JSON object per line for machines (`record()`).

	>>> accuracy_table([0.5, 1.5, 3.5, 10]).percentages
	(25.0, 50.0, 50.0, 75.0, 75.0, 100.0)
"""

import dataclasses
import json
import logging
import math
import os
import platform
import sys
import time

import numpy as np
from skimage.metrics import structural_similarity
from tqdm import tqdm

from .dataset import HORIZON, synth_panorama
from .errors import DomainError
from .geometry import TiltAngles, angle_error
from .lut import Direction, StorageReport, lattice
from .remap import BILINEAR, remap, rotate_image
from .stream import fanout, map

logger = logging.getLogger(__name__)

THRESHOLDS = (1, 2, 3, 4, 5, 12)
WARMUP_FRAMES = 3

# published figures, quoted next to ours and never derived from them
PUBLISHED_GPU_SECONDS = 0.012
PUBLISHED_FPS = 11
PUBLISHED_MODEL_SIZE = '429.6 MB'


def format_table(headers, rows):
	"""Right-aligned plain-text table."""
	cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
	widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
	return ['  '.join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]


def to_json(record):
	return json.dumps(record, sort_keys=True)


#_____________________________________________________________________
# Accuracy


@dataclasses.dataclass(frozen=True)
class AccuracyTable:
	thresholds: tuple
	percentages: tuple
	count: int

	def lines(self):
		return format_table(['%g deg' % t for t in self.thresholds] + ['n'],
		                    [['%.2f%%' % p for p in self.percentages] + [self.count]])

	def record(self):
		return {'report': 'accuracy', 'count': self.count,
		        'thresholds': list(self.thresholds), 'percentages': list(self.percentages)}


def accuracy_table(errors, thresholds=THRESHOLDS):
	"""Percentage of angular errors (degrees) within each threshold."""
	errors = np.asarray(errors, dtype=np.float64)
	if errors.size == 0:
		raise DomainError('no errors to tabulate')
	return AccuracyTable(tuple(thresholds),
	                     tuple(100.0 * np.count_nonzero(errors <= t) / errors.size for t in thresholds),
	                     int(errors.size))


def constant_baseline(angle_min, angle_max, step, threshold=12.0, samples=100000, seed=0):
	"""Percentage of lattice tilts a constant (0, 0) prediction gets within
	`threshold` degrees of, by Monte Carlo."""
	values = np.radians(lattice(angle_min, angle_max, step))
	rng = np.random.default_rng(seed)
	pitch = rng.choice(values, samples)
	roll = rng.choice(values, samples)
	# z component of R(pitch, roll) applied to the zenith
	cos_error = np.cos(roll) * np.cos(pitch)
	errors = np.degrees(np.arccos(np.clip(cos_error, -1.0, 1.0)))
	return 100.0 * np.count_nonzero(errors <= threshold) / samples


#_____________________________________________________________________
# Image quality


def _pair(a, b):
	a = np.asarray(a, dtype=np.float64)
	b = np.asarray(b, dtype=np.float64)
	if a.shape != b.shape:
		raise DomainError('cannot compare images of shape %s and %s' % (a.shape, b.shape))
	return a, b


def psnr(a, b, peak=1.0):
	"""PSNR in dB; +inf for identical images."""
	a, b = _pair(a, b)
	mse = float(np.mean((a - b) ** 2))
	return math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)


def ssim(a, b, window=11, k1=0.01, k2=0.03):
	"""Gaussian-weighted (sigma 1.5) SSIM of two images in [0, 1], either
	H x W or C x H x W, averaged over valid windows and channels."""
	a, b = _pair(a, b)
	return float(structural_similarity(a, b, win_size=window, K1=k1, K2=k2, data_range=1.0,
	                                   gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
	                                   channel_axis=0 if a.ndim == 3 else None))


#_____________________________________________________________________
# Evaluation over a dataset


@dataclasses.dataclass
class EvalSummary:
	accuracy: AccuracyTable
	quality: dict
	mean_error: float

	def lines(self):
		lines = ['angle error: mean %.3f deg over %d records' % (self.mean_error, self.accuracy.count)]
		lines += self.accuracy.lines()
		lines += format_table(['output', 'psnr dB', 'ssim'],
		                      [[name, '%.3f' % p, '%.4f' % s] for name, (p, s) in self.quality.items()])
		return lines

	def records(self):
		yield self.accuracy.record()
		for name, (p, s) in self.quality.items():
			yield {'report': 'quality', 'output': name, 'psnr': p, 'ssim': s}


def evaluate(records, predictor=None, pipeline=None, threads=1):
	"""Angle accuracy and upright image quality on DatasetRecords.

	`predictor(image)` returns TiltAngles; without one the pipeline's
	orientation net predicts.  Quality is measured for the analytic
	remap with the predicted angles and, given a pipeline with trained
	networks, for the generated-LUT remap and the reconstruction.
	"""
	if not records:
		raise DomainError('no records to evaluate')
	if predictor is None:
		if pipeline is None:
			raise DomainError('evaluate needs a predictor or a pipeline')
		predictor = lambda image: pipeline.predict(image)[0]
	learned = pipeline is not None and pipeline.lutformer is not None
	if learned:
		grid = pipeline.lutformer.config.lut_grid
		mismatched = sum(r.nonupright.grid != grid for r in records)
		if mismatched:
			raise DomainError('%d records are not %s, the generated LUT size' % (mismatched, grid))

	def one(record):
		angles = predictor(record.nonupright)
		outputs = {'analytic': rotate_image(record.nonupright, angles, Direction.INVERSE_UPRIGHT)}
		if learned:
			outputs['generated_lut'] = remap(record.nonupright, pipeline.lutformer.generate(angles))
			outputs['reconstructed'] = pipeline.end_to_end_adjust(record.nonupright)[1]
		scores = {name: (psnr(out.data, record.upright.data), ssim(out.data, record.upright.data))
		          for name, out in outputs.items()}
		return angle_error(angles, record.angles), scores

	results = list(tqdm(records >> fanout(one, threads), total=len(records),
	                    desc='eval', unit='record', disable=None))
	errors = [e for e, _ in results]
	quality = {}
	for name in results[0][1]:
		values = [scores[name] for _, scores in results]
		quality[name] = (float(np.mean([p for p, _ in values])), float(np.mean([s for _, s in values])))
	summary = EvalSummary(accuracy_table(errors), quality, float(np.mean(errors)))
	for line in summary.lines():
		logger.info('%s', line)
	return summary


#_____________________________________________________________________
# Throughput


def hardware_metadata():
	return {'platform': platform.platform(), 'processor': platform.processor() or platform.machine(),
	        'cpus': os.cpu_count(), 'python': sys.version.split()[0], 'numpy': np.__version__}


@dataclasses.dataclass
class LatencyReport:
	pipeline: str
	grid: str
	frames: int
	threads: int
	mean: float
	p50: float
	p95: float
	hardware: dict
	outputs: list = dataclasses.field(default_factory=list, repr=False)

	@property
	def fps(self):
		return 1.0 / self.mean if self.mean > 0 else math.inf

	def lines(self):
		return format_table(['pipeline', 'grid', 'frames', 'threads', 'mean s', 'p50 s', 'p95 s', 'fps'],
		                    [[self.pipeline, self.grid, self.frames, self.threads, '%.4f' % self.mean,
		                      '%.4f' % self.p50, '%.4f' % self.p95, '%.1f' % self.fps]]) + [
			'hardware: %s' % ', '.join('%s=%s' % kv for kv in sorted(self.hardware.items())),
			'published: %.3f s per frame on a GPU, about %d fps' % (PUBLISHED_GPU_SECONDS, PUBLISHED_FPS),
		]

	def record(self):
		return {'report': 'latency', 'pipeline': self.pipeline, 'grid': self.grid,
		        'frames': self.frames, 'threads': self.threads, 'mean': self.mean,
		        'p50': self.p50, 'p95': self.p95, 'fps': self.fps, 'hardware': self.hardware}


def time_frames(work, frames, warmup=WARMUP_FRAMES):
	"""Per-frame seconds of work(frame) and the outputs; the first
	`warmup` frames are run and discarded."""
	for frame in frames[:warmup]:
		work(frame)
	def timed(frame):
		start = time.perf_counter()
		out = work(frame)
		return time.perf_counter() - start, out
	results = frames[warmup:] >> map(timed) >> list
	return [t for t, _ in results], [out for _, out in results]


def bench_throughput(pipeline, grid, n_frames=20, threads=1, seed=0, model=None, keep_outputs=False):
	"""Latency of 'analytic' adjustment (LUT generation and bilinear
	remap) or of the 'e2e' network pipeline (`model`, an UprightPipeline).
	Frames are synthesized before timing starts."""
	if n_frames < 10:
		raise DomainError('need at least 10 frames, got %d' % n_frames)
	if pipeline not in ('analytic', 'e2e'):
		raise DomainError('pipeline must be analytic or e2e, got %r' % (pipeline,))
	rng = np.random.default_rng(seed)
	base = synth_panorama(seed, grid, HORIZON)
	frames = [(base, TiltAngles(float(rng.integers(-90, 91)), float(rng.integers(-90, 91))))
	          for _ in range(n_frames + WARMUP_FRAMES)]
	if pipeline == 'analytic':
		def work(frame):
			image, angles = frame
			return rotate_image(image, angles, Direction.INVERSE_UPRIGHT, BILINEAR, threads)
	else:
		if model is None:
			raise DomainError('the e2e benchmark needs a loaded pipeline')
		model.threads = threads
		def work(frame):
			return model.end_to_end_adjust(frame[0])[1]
	seconds, outputs = time_frames(work, frames)
	report = LatencyReport(pipeline, str(grid), n_frames, threads, float(np.mean(seconds)),
	                       float(np.percentile(seconds, 50)), float(np.percentile(seconds, 95)),
	                       hardware_metadata(), outputs if keep_outputs else [])
	for line in report.lines():
		logger.info('%s', line)
	return report


#_____________________________________________________________________
# Storage


@dataclasses.dataclass
class StorageSummary:
	grid: StorageReport
	checkpoints: dict

	def lines(self):
		lines = list(self.grid.lines())
		for path, size in sorted(self.checkpoints.items()):
			lines.append('checkpoint %s: %d B (%.1f MB)' % (path, size, size / 1e6))
		lines.append('published model footprint: %s' % PUBLISHED_MODEL_SIZE)
		return lines

	def record(self):
		return {'report': 'storage', 'entries': self.grid.entries, 'height': self.grid.height,
		        'width': self.grid.width, 'bytes_per_value': self.grid.bytes_per_value,
		        'payload_bytes': self.grid.payload_bytes, 'file_bytes': self.grid.file_bytes,
		        'checkpoints': self.checkpoints}


def storage_report(angle_min, angle_max, step, grid, bytes_per_value=4, checkpoints=()):
	"""Exact byte totals of a LUT grid and of checkpoint files, computed
	without generating anything."""
	entries = len(lattice(angle_min, angle_max, step)) ** 2
	summary = StorageSummary(StorageReport(entries, grid.height, grid.width, bytes_per_value),
	                         {str(path): os.path.getsize(path) for path in checkpoints})
	logger.warning('the published LUT grid size does not follow from %d tables of 2x%dx%d; '
	               'both are reported', entries, grid.height, grid.width)
	return summary
