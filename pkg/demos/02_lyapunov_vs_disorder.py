"""Lyapunov exponent and the delocalization criterion at weak disorder.

The Lyapunov exponent ``lambda = E log|g|`` of the fixed-point law tends to
``log|w_E|`` as the disorder strength goes to zero. The criterion margin
``lambda + log K`` is positive in the bulk of the band (predicted extended
states) and changes sign near ``|E| = K + 1``.

Run with ``python3 demos/02_lyapunov_vs_disorder.py`` (about a minute).
"""
import math

from treeanderson import free_green, spectral_report
from treeanderson.spectra import criterion_margin

K = 2
small = dict(eta=1e-3, pool_size=20_000, n_blocks=8, burn_in=60, n_average=20, seed=1)

# %% Convergence to the free value as beta shrinks
for E in (0.0, 2.0):
    log_w = math.log(abs(free_green(complex(E, 1e-3), K)))
    print(f"E={E}: log|w| = {log_w:.5f}")
    for beta in (0.2, 0.1, 0.05):
        rep = spectral_report(E, beta, K=K, **small)
        lam = rep.lyapunov
        print(f"  beta={beta:<5} lambda = {lam.value:.5f} +- {lam.stderr:.1e}   "
              f"|lambda - log|w|| = {abs(lam.value - log_w):.1e}")

# %% Sign change of the criterion margin near E = K + 1
print("\ncriterion margin lambda + log K at beta = 0.05")
for E in (2.0, 2.5, 2.8, 3.0, 3.2, 3.5):
    rep = spectral_report(E, 0.05, K=K, **small)
    m = criterion_margin(rep.lyapunov, K)
    print(f"  E={E:3.1f}: {m.value:+.4f} +- {m.stderr:.1e}  -> {rep.phase_label}")
