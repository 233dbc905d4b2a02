"""Upright adjustment of 360-degree equirectangular panoramas.

A tilted panorama is straightened by a remap through a look-up table
(LUT) of source coordinates.  The LUT comes either from known angles
(`upright.lut.generate_lut`) or from three small networks trained in
sequence: one predicts pitch and roll, one turns the angles into a LUT,
and one rebuilds the image from rotated shallow features
(`upright.models`).

	>>> from upright.geometry import EquirectGrid, TiltAngles
	>>> from upright.lut import Direction, generate_lut
	>>> generate_lut(TiltAngles(10, -5), EquirectGrid(8, 16), Direction.INVERSE_UPRIGHT).data.shape
	(2, 8, 16)
"""

__version__ = '0.1.0'
