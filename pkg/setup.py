#!/usr/bin/env python

from setuptools import setup

setup(
    setup_requires=['pbr>=5.4'],
    pbr=True,
)
