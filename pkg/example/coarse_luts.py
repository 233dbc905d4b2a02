#!/usr/bin/env python

import sys

import numpy as np

from upright.evalbench import format_table, storage_report
from upright.geometry import EquirectGrid, TiltAngles
from upright.lut import Direction, coarse_then_upsample, generate_lut, lut_error
from upright.stream import fanout

"""
How coarse can a LUT be?  Generate the exact table at the output size and
compare it with coarse tables blown up by bilinear and nearest upsampling,
then show what precomputing every whole-degree table would cost instead.

	python example/coarse_luts.py [HxW]
"""

def errors(angles, out, coarse):
	truth = generate_lut(angles, out, Direction.INVERSE_UPRIGHT)
	factor = out.height // coarse.height
	return [lut_error(coarse_then_upsample(angles, coarse, factor, interp), truth).mean_abs_error
	        for interp in ('bilinear', 'nearest')]


def table(out, samples=10, seed=0):
	rng = np.random.default_rng(seed)
	pairs = [TiltAngles(*p) for p in rng.uniform(-90, 90, size=(samples, 2))]
	rows = []
	h = 4
	while out.height // h >= 2:
		coarse = EquirectGrid(h, 2 * h)
		bilinear, nearest = np.mean(pairs >> fanout(lambda a: errors(a, out, coarse), threads=4) >> list, axis=0)
		rows.append([str(coarse), out.height // h, '%.5f' % bilinear, '%.5f' % nearest])
		h *= 2
	return rows


if __name__ == '__main__':
	out = EquirectGrid.parse(sys.argv[1]) if len(sys.argv) > 1 else EquirectGrid(256, 512)
	for line in format_table(['coarse', 'factor', 'bilinear', 'nearest'], table(out)):
		print(line)
	print()
	for line in storage_report(-90, 90, 1, out).lines():
		print(line)
