#!/usr/bin/env python

import os
import re

from setuptools import setup

__dir__ = os.path.realpath(os.path.dirname(__file__))

with open(os.path.join(__dir__, 'upright', '__init__.py')) as f:
	version = re.search(r"^__version__ = '([^']+)'", f.read(), re.M).group(1)

classifiers = """
Development Status :: 3 - Alpha
Intended Audience :: Science/Research
License :: OSI Approved :: MIT License
Operating System :: OS Independent
Programming Language :: Python :: 3
Topic :: Multimedia :: Graphics
Topic :: Scientific/Engineering :: Image Processing
"""

__doc__ = """Upright adjustment of tilted 360-degree panoramas with look-up-table
remapping: analytic LUT generation and remapping, a small numpy
differentiation stack, the orientation / LUT-generation / reconstruction
networks trained on synthetic panoramas, and evaluation and throughput
reports.
"""

setup(
	name = 'upright',
	version = version,
	description = 'Upright adjustment of 360-degree panoramas through look-up tables',
	long_description = __doc__,
	keywords='panorama equirectangular upright adjustment look-up table remap rotation',
	platforms=['any'],
	classifiers=list(filter(None, classifiers.split("\n"))),
	packages = ['upright'],
	python_requires = '>=3.8',
	install_requires = ['numpy>=1.22', 'scipy', 'Pillow', 'scikit-image>=0.19', 'tqdm'],
	extras_require = {'test': ['pytest']},
	entry_points = {'console_scripts': ['upright = upright.cli:main']},
)
