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

__all__ = ['__version__', 'get_config']

try:
    from monolab._version import version as __version__
except ImportError:  # pragma: no cover
    __version__ = 'unknown'

from monolab.main import get_config  # noqa: E402
