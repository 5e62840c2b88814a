#!/usr/bin/env python3
#
#  Copyright (C) 2026 st-stickbreaking developers
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU Lesser General Public
#  License as published by the Free Software Foundation; either
#  version 2 of the License, or (at your option) any later version.
#
#  This library is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.	 See the GNU
#  Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public
#  License along with this library. If not, see <http://www.gnu.org/licenses/>.

import os
import re
import sys

try:
    from setuptools import setup, find_packages
except ImportError:
    print("st-stickbreaking requires setuptools in order to install. Install "
          "it using your package manager (usually python3-setuptools) or via "
          "pip (pip3 install setuptools).")
    sys.exit(1)

HERE = os.path.dirname(os.path.realpath(__file__))

#####################################################
#     Prepare package description from README       #
#####################################################
with open(os.path.join(HERE, 'README.rst')) as readme:
    long_description = readme.read()

#####################################################
#         Single-source the package version         #
#####################################################
with open(os.path.join(HERE, 'src', 'st_stickbreaking', '__init__.py')) as init:
    version = re.search(r'^__version__ = "([^"]+)"', init.read(), re.M).group(1)

#####################################################
#     Runtime dependencies from requirements        #
#####################################################
with open(os.path.join(HERE, 'requirements', 'runtime-requirements.txt')) as reqs:
    install_requires = [
        line.strip() for line in reqs
        if line.strip() and not line.startswith('#')
    ]

setup(
    name='st-stickbreaking',
    version=version,
    python_requires=">=3.8",
    description="Spatio-temporal stick-breaking mixture models: "
                "simulation, MCMC fitting and prediction.",
    long_description=long_description,
    long_description_content_type='text/x-rst; charset=UTF-8',
    author='st-stickbreaking developers',
    license='LGPL',
    classifiers=[
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GNU Lesser General Public License v2 or later (LGPLv2+)',
        'Operating System :: POSIX',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Topic :: Scientific/Engineering :: Mathematics'
    ],
    include_package_data=True,
    package_data={'st_stickbreaking': ['defaults.conf']},
    install_requires=install_requires,
    package_dir={'': 'src'},
    packages=find_packages(where='src'),
    entry_points={
        'console_scripts': [
            'stsb = st_stickbreaking.cli:main',
        ],
    },
    zip_safe=False
)  # eof setup()
