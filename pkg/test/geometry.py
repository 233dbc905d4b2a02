#!/usr/bin/env python

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from upright.errors import DomainError
from upright.geometry import (EquirectGrid, TiltAngles, angle_error, orientation_vector,
                              pixel_to_sphere, rotation_from_tilt, sphere_to_pixel)


## The test data

rng = np.random.default_rng(2024)
random_angles = [TiltAngles(*pair) for pair in rng.uniform(-90, 90, size=(1000, 2))]


def scratch_rotation(pitch, roll):
	# written out element by element, independently of the module
	p, r = math.radians(pitch), math.radians(roll)
	Ry = [[math.cos(p), 0, math.sin(p)], [0, 1, 0], [-math.sin(p), 0, math.cos(p)]]
	Rx = [[1, 0, 0], [0, math.cos(r), -math.sin(r)], [0, math.sin(r), math.cos(r)]]
	return [[sum(Rx[i][k] * Ry[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


## Test cases

def test_identity_rotation_is_exact():
	assert (rotation_from_tilt(TiltAngles(0, 0)) == np.eye(3)).all()

def test_rotations_are_orthonormal():
	for angles in random_angles:
		R = rotation_from_tilt(angles)
		assert np.abs(R.T @ R - np.eye(3)).max() <= 1e-9
		assert abs(np.linalg.det(R) - 1) <= 1e-9

def test_rotation_matches_scratch_product():
	R = rotation_from_tilt(TiltAngles(30, 45))
	assert np.allclose(R, scratch_rotation(30, 45), atol=1e-12, rtol=0)

def test_orientation_vectors():
	assert np.allclose(orientation_vector(TiltAngles(0, 0)), [0, 0, 1])
	assert np.allclose(orientation_vector(TiltAngles(90, 0)), [1, 0, 0], atol=1e-12)
	assert np.allclose(orientation_vector(TiltAngles(30, 0)), [0.5, 0, math.sqrt(3) / 2], atol=1e-12)

@pytest.mark.parametrize('pitch', [-90, -45, -1, 0, 7, 60, 90])
def test_single_axis_tilt_angle(pitch):
	assert angle_error(TiltAngles(pitch, 0), TiltAngles(0, 0)) == pytest.approx(abs(pitch), abs=1e-6)

def test_angle_error_metric():
	a, b = TiltAngles(17, -42), TiltAngles(20, 20)
	assert angle_error(a, a) == pytest.approx(0, abs=1e-6)
	assert angle_error(a, b) == pytest.approx(angle_error(b, a))
	va = np.array(scratch_rotation(20, 20)) @ [0, 0, 1]
	expected = math.degrees(math.acos(va[2]))
	assert angle_error(b, TiltAngles(0, 0)) == pytest.approx(expected, abs=1e-9)

@pytest.mark.parametrize('pitch, roll', [(91, 0), (0, -90.5), (math.nan, 0), (0, math.inf)])
def test_tilt_angles_reject_out_of_range(pitch, roll):
	with pytest.raises(DomainError):
		TiltAngles(pitch, roll)

def test_grid_validation():
	assert EquirectGrid.parse('64x128') == EquirectGrid(64, 128)
	for h, w in [(1, 2), (4, 4), (8, 15)]:
		with pytest.raises(DomainError):
			EquirectGrid(h, w)
	with pytest.raises(DomainError):
		EquirectGrid.parse('64by128')

def test_pixel_to_sphere_closed_forms():
	grid = EquirectGrid(2, 4)
	# phi = 0 lies between columns 1 and 2; theta = 0 between rows 0 and 1
	assert np.allclose(pixel_to_sphere(1.5, 0.5, grid), [1, 0, 0])
	theta, phi = math.pi / 4, 2 * math.pi * 0.5 / 4 - math.pi
	expected = [math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), math.sin(theta)]
	assert np.allclose(pixel_to_sphere(0, 0, grid), expected, atol=1e-15)

def test_pixel_to_sphere_rejects_outside():
	grid = EquirectGrid(2, 4)
	for u, v in [(-1, 0), (4, 0), (0, 2)]:
		with pytest.raises(DomainError):
			pixel_to_sphere(u, v, grid)

@pytest.mark.parametrize('grid', [EquirectGrid(4, 8), EquirectGrid(64, 128)])
def test_projection_round_trip(grid):
	v, u = np.indices(grid.shape)
	px, py = sphere_to_pixel(pixel_to_sphere(u, v, grid), grid)
	assert np.abs(px - u).max() <= 1e-9
	assert np.abs(py - v).max() <= 1e-9

def test_random_directions_round_trip():
	grid = EquirectGrid(64, 128)
	d = rng.normal(size=(500, 3))
	d /= np.linalg.norm(d, axis=1, keepdims=True)
	px, py = sphere_to_pixel(d, grid)
	inside = (py > 0) & (py < grid.height - 1)
	back = pixel_to_sphere(px[inside], py[inside], grid)
	assert np.abs(back - d[inside]).max() <= 1e-9

def test_sphere_to_pixel_special_directions():
	grid = EquirectGrid(8, 16)
	px, py = sphere_to_pixel([1.0, 0.0, 0.0], grid)
	assert (px, py) == pytest.approx((7.5, 3.5))
	px, py = sphere_to_pixel([0.0, 0.0, 1.0], grid)
	assert px == 0 and py == 0
	with pytest.raises(DomainError):
		sphere_to_pixel([0.0, 0.0, 0.0], grid)


if __name__ == '__main__':
	pytest.main([__file__])
