# Copyright (c) 2026 The splatedit Authors
# SPDX-License-Identifier: Apache-2.0
"""Freezes real SH basis values from scipy for the splat-model tests.

Real basis, index l*l + l + m:
  m < 0: sqrt(2) * Im Y_l^|m|,  m = 0: Y_l^0,  m > 0: sqrt(2) * Re Y_l^m
with scipy's complex Y (Condon-Shortley phase included).
"""
import json
import sys

import numpy as np
from scipy.special import sph_harm_y

DEGREE = 4


def real_basis(direction):
    x, y, z = direction
    polar = np.arccos(np.clip(z, -1.0, 1.0))
    azimuth = np.arctan2(y, x)
    out = []
    for l in range(DEGREE + 1):
        for m in range(-l, l + 1):
            c = complex(sph_harm_y(l, abs(m), polar, azimuth))
            if m < 0:
                out.append(np.sqrt(2.0) * c.imag)
            elif m == 0:
                out.append(c.real)
            else:
                out.append(np.sqrt(2.0) * c.real)
    return out


def main(path):
    rng = np.random.default_rng(20261016)
    dirs = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]
    for v in rng.normal(size=(28, 3)):
        dirs.append(list(v / np.linalg.norm(v)))
    table = [{"dir": d, "basis": real_basis(d)} for d in dirs]
    with open(path, "w") as f:
        json.dump({"degree": DEGREE, "entries": table}, f, indent=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "sh_table.json")
