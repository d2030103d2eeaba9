"""The shell element against beam and plate closed forms.

A 32-element strip under uniform load, a cantilever with a tip load, an
Euler column, and a simply supported square plate in uniaxial compression
(buckling coefficient k = 4). Takes about half a minute, mostly JAX
compilation.
"""

import dataclasses

import numpy as np

from girderlab.model import default_girder_steel, generate_plate_model
from girderlab.solver import buckling_analysis, linear_solution

E, t, L, b = 200e9, 0.01, 1.0, 0.1
I = b * t**3 / 12
# nu = 0 removes the anticlastic plate effect so beam theory applies
beam = dataclasses.replace(default_girder_steel(), nu=0.0)


def midline(model, x):
    return np.abs(model.node_coords()[:, 0] - x) < 1e-9


m = generate_plate_model(L, b, t, 32, 1, material=beam, supports="strip", load="uniform",
                         load_value=1000.0 * L)
w = -linear_solution(m).reshape(-1, 6)[midline(m, L / 2), 2].mean()
print(f"strip midspan      {w:.6e} m   closed form {5 * 1000 * L**4 / (384 * E * I):.6e} m")

m = generate_plate_model(L, b, t, 16, 1, material=beam, supports="cantilever", load="tip",
                         load_value=100.0)
w = -linear_solution(m).reshape(-1, 6)[midline(m, L), 2].mean()
print(f"cantilever tip     {w:.6e} m   closed form {100 * L**3 / (3 * E * I):.6e} m")

m = generate_plate_model(L, b, t, 32, 1, material=beam, supports="column", load="axial",
                         load_value=1.0)
lam = buckling_analysis(m, 2).factors
print(f"Euler column       {lam[0]:.5e} N   closed form {np.pi**2 * E * I / L**2:.5e} N"
      f"   (2nd mode ratio {lam[1] / lam[0]:.3f}, theory 4)")

Dp = E * t**3 / (12 * (1 - 0.3**2))
m = generate_plate_model(1.0, 1.0, t, 16, 16, material=dataclasses.replace(beam, nu=0.3),
                         supports="ss_plate", load="axial", load_value=1.0)
k = buckling_analysis(m, 1).factors[0] / (np.pi**2 * Dp)
print(f"SS plate           k = {k:.4f}   theory 4")
