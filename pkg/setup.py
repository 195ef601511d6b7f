# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Monolab: numerical laboratory for monotone dynamical systems."""

from setuptools import setup

setup(
    use_scm_version={'write_to': 'monolab/_version.py',
                     'fallback_version': '0.1.0'},
)
