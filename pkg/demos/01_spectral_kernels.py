"""From a continuous spectral density to a finite bath and its memory kernels.

An ohmic density with exponential cutoff is discretized into K modes. The
discrete noise kernel C2(s) then approaches the continuous one as K grows,
and a squeezed bath picks up the non-stationary term that makes C2 depend on
both times.
"""

import numpy as np

from necl import gle
from necl.spectral import MIDPOINT, ModeSet, SpectralDensity, discretize, integrate_J

beta = 1.0
J = SpectralDensity.ohmic(eta=0.5, omega_c=1.0)
print(f"total weight of J on [0, 10]: {integrate_J(J, 0.0, 10.0):.6f}")

s = np.linspace(0.0, 5.0, 26)
exact = gle.noise_kernel_continuous(J, s, beta, omega_max=10.0)
print("\nmax |C2_K - C2| on s in [0, 5] (midpoint cells):")
for K in (64, 256, 1024):
    modes = discretize(J, K, omega_max=10.0, scheme=MIDPOINT)
    err = np.max(np.abs(gle.noise_kernel(modes, s, 0.0, beta) - exact))
    print(f"  K={K:5d}  {err:.3e}")

modes = discretize(J, 64, omega_max=10.0)
print("\ndissipation kernel C1(s) at s = 0, 1, 2:", np.round(gle.dissipation_kernel(modes, np.array([0.0, 1.0, 2.0])), 6))

sq = modes.with_quench(r=np.log(2.0))
t = np.array([0.0, 1.0, 2.0])
print("\nsqueezed bath, r = ln 2: C2(t, t') is no longer a function of t - t'")
for a in t:
    row = [gle.noise_kernel(sq, a, b, beta, squeezed=True) for b in t]
    print("  " + "  ".join(f"{v:+.4f}" for v in row))

single = ModeSet.single(omega=1.3, c=0.4, L=0.5)
print("\ndisplaced single mode: mean force -F_d(t) at t = 0, 1, 2:", np.round(gle.mean_force(single, t), 6))
