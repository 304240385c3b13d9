"""The free model: the self-consistent equation solved in closed form.

Without disorder the fixed point is a single point ``w_z`` of the upper
half-plane, the root of ``K w**2 + z w + 1 = 0`` picked by the branch that
keeps ``Im w > 0``. This script checks the closed form against the
population solver and shows where the free Green's function is real
(outside the band ``|E| <= 2 sqrt K``).

Run with ``python3 demos/01_free_fixed_point.py``.
"""
import math

import numpy as np

from treeanderson import DisorderLaw, EnergyPoint, IterationConfig, free_green, run_to_fixed_point

K = 2
edge = 2 * math.sqrt(K)

# %% Closed form across the spectrum
print(f"band edge 2 sqrt K = {edge:.4f}")
print(f"{'E':>6} {'Re w':>10} {'Im w':>10} {'|w|':>8} {'residual':>10}")
for E in np.linspace(-4, 4, 9):
    z = complex(E, 1e-9)
    w = complex(free_green(z, K))
    resid = abs(K * w * w + z * w + 1)
    print(f"{E:6.2f} {w.real:10.5f} {w.imag:10.2e} {abs(w):8.5f} {resid:10.1e}")

# |w| = 1/sqrt K inside the band, and w = -1/K at E = K + 1
print("|w_0| * sqrt K =", abs(free_green(1e-12j, K)) * math.sqrt(K))
print("w_{K+1} * K    =", free_green(complex(K + 1), K).real * K)

# %% The population solver at beta = 0 reproduces w exactly
for E in (0.0, 1.0, 3.5):
    cfg = IterationConfig(EnergyPoint(E, 1e-3, K), DisorderLaw.free(), pool_size=1000)
    pool, trace = run_to_fixed_point(cfg)
    dev = np.max(np.abs(pool.samples - free_green(cfg.z, K)))
    print(f"E={E}: status {trace.status}, max deviation {dev:.1e}")
