"""Tilt angles, rotations and the equirectangular projection.

Conventions shared by every module:

	world axes      x forward, y left, z up
	pitch           rotation about the y axis
	roll            rotation about the x axis
	R(pitch, roll)  R_roll . R_pitch
	pixels          centres at integer coordinates, longitude
	                phi = 2 pi (u + 0.5) / W - pi, latitude
	                theta = pi / 2 - pi (v + 0.5) / H

Public interfaces take degrees; radians are used internally.

	>>> orientation_vector(TiltAngles(90, 0)).round(12) + 0.0
	array([1., 0., 0.])
	>>> round(angle_error(TiltAngles(30, 0), TiltAngles(0, 0)), 9)
	30.0
"""

import dataclasses
import math

import numpy as np

from .errors import DomainError

ZENITH = np.array([0.0, 0.0, 1.0])

# below this horizontal radius a direction counts as a pole
POLE_EPS = 1e-12


@dataclasses.dataclass(frozen=True)
class TiltAngles:
	"""Camera tilt (pitch, roll) in degrees, each within [-90, +90]."""
	pitch: float
	roll: float

	def __post_init__(self):
		for name in ('pitch', 'roll'):
			value = getattr(self, name)
			if not math.isfinite(value) or not -90.0 <= value <= 90.0:
				raise DomainError('%s must be finite and within [-90, 90], got %r' % (name, value))

	def swapped(self):
		return TiltAngles(self.roll, self.pitch)

	def __iter__(self):
		return iter((self.pitch, self.roll))


@dataclasses.dataclass(frozen=True)
class EquirectGrid:
	height: int
	width: int

	def __post_init__(self):
		if self.height < 2 or self.width != 2 * self.height:
			raise DomainError('equirectangular grid must be H x 2H with H >= 2, got %dx%d'
			                  % (self.height, self.width))

	@classmethod
	def of_height(cls, height):
		return cls(int(height), 2 * int(height))

	@classmethod
	def parse(cls, text):
		"""Parse 'HxW'.

		>>> EquirectGrid.parse('8x16')
		EquirectGrid(height=8, width=16)
		"""
		try:
			h, w = (int(part) for part in text.lower().split('x'))
		except ValueError:
			raise DomainError('size must look like HxW, got %r' % text)
		return cls(h, w)

	@property
	def shape(self):
		return (self.height, self.width)

	def scaled(self, factor):
		return EquirectGrid(self.height * factor, self.width * factor)

	def __str__(self):
		return '%dx%d' % (self.height, self.width)


def _pitch_matrix(radians):
	c, s = math.cos(radians), math.sin(radians)
	return np.array([[c, 0.0, s],
	                 [0.0, 1.0, 0.0],
	                 [-s, 0.0, c]])


def _roll_matrix(radians):
	c, s = math.cos(radians), math.sin(radians)
	return np.array([[1.0, 0.0, 0.0],
	                 [0.0, c, -s],
	                 [0.0, s, c]])


def rotation_from_tilt(angles):
	"""R = R_roll . R_pitch as a 3x3 float64 array; R(0, 0) is exactly I."""
	return _roll_matrix(math.radians(angles.roll)) @ _pitch_matrix(math.radians(angles.pitch))


def orientation_vector(angles):
	"""Image of the zenith under the camera rotation."""
	return rotation_from_tilt(angles) @ ZENITH


def angle_error(a, b):
	"""Angle in degrees between the orientation vectors of a and b."""
	dot = float(orientation_vector(a) @ orientation_vector(b))
	return math.degrees(math.acos(min(1.0, max(-1.0, dot))))


def pixel_to_sphere(u, v, grid):
	"""Unit direction of the pixel centre (u, v).  u and v may be arrays;
	the result has shape broadcast(u, v) + (3,)."""
	u = np.asarray(u, dtype=np.float64)
	v = np.asarray(v, dtype=np.float64)
	if np.any(u < 0) or np.any(u >= grid.width) or np.any(v < 0) or np.any(v >= grid.height):
		raise DomainError('pixel coordinates outside the %s grid' % grid)
	phi = 2.0 * np.pi * (u + 0.5) / grid.width - np.pi
	theta = np.pi / 2.0 - np.pi * (v + 0.5) / grid.height
	cos_theta = np.cos(theta)
	return np.stack(np.broadcast_arrays(cos_theta * np.cos(phi),
	                                    cos_theta * np.sin(phi),
	                                    np.sin(theta)), axis=-1)


def sphere_to_pixel(direction, grid):
	"""Continuous pixel coordinates (x, y) of a direction, the inverse of
	pixel_to_sphere.  x is wrapped into [0, W) and is 0 at the poles; y is
	clamped to [0, H - 1].  `direction` may be an array of shape (..., 3).
	"""
	d = np.asarray(direction, dtype=np.float64)
	norm = np.linalg.norm(d, axis=-1)
	if np.any(norm == 0):
		raise DomainError('zero vector has no direction')
	x, y, z = d[..., 0], d[..., 1], d[..., 2]
	radius = np.hypot(x, y)
	phi = np.arctan2(y, x)
	theta = np.arcsin(np.clip(z / norm, -1.0, 1.0))
	px = np.mod((phi + np.pi) * grid.width / (2.0 * np.pi) - 0.5, grid.width)
	# tiny negative arguments come back from mod as (nearly) W
	px = np.where(px >= grid.width - 1e-9, 0.0, px)
	px = np.where(radius <= POLE_EPS * norm, 0.0, px)
	py = np.clip((np.pi / 2.0 - theta) * grid.height / np.pi - 0.5, 0.0, grid.height - 1.0)
	return px, py
