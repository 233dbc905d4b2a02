#!/usr/bin/env python

import logging
import sys

import numpy as np

from upright.dataset import STYLES, make_record, synth_panorama
from upright.evalbench import format_table, psnr, ssim
from upright.geometry import EquirectGrid, TiltAngles
from upright.lut import Direction
from upright.remap import NEAREST, rotate_image
from upright.stream import apply, fanout

"""
Tilt synthetic panoramas by random angles, then straighten them again with
the analytic inverse LUT, and print how much of the image survives the two
resamplings.

	python example/adjust.py [N] [HxW]
"""

def trial(seed, grid):
	rng = np.random.default_rng(seed)
	angles = TiltAngles(*rng.integers(-90, 91, size=2).astype(float))
	style = STYLES[seed % len(STYLES)]
	record = make_record(synth_panorama(seed, grid, style), angles)
	bilinear = rotate_image(record.nonupright, angles, Direction.INVERSE_UPRIGHT)
	nearest = rotate_image(record.nonupright, angles, Direction.INVERSE_UPRIGHT, NEAREST)
	return (style, angles,
	        psnr(bilinear.data, record.upright.data), ssim(bilinear.data, record.upright.data),
	        psnr(nearest.data, record.upright.data))


def row(style, angles, bilinear_psnr, bilinear_ssim, nearest_psnr):
	return [style, '%+3.0f' % angles.pitch, '%+3.0f' % angles.roll,
	        '%.2f' % bilinear_psnr, '%.4f' % bilinear_ssim, '%.2f' % nearest_psnr]


if __name__ == '__main__':
	logging.basicConfig(level=logging.WARNING)
	n = int(sys.argv[1]) if len(sys.argv) > 1 else 6
	grid = EquirectGrid.parse(sys.argv[2]) if len(sys.argv) > 2 else EquirectGrid(128, 256)
	rows = range(n) >> fanout(lambda seed: trial(seed, grid), threads=4) >> apply(row) >> list
	for line in format_table(['style', 'pitch', 'roll', 'psnr dB', 'ssim', 'nearest dB'], rows):
		print(line)
