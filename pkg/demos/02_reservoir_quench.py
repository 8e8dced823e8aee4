"""Thermal draws, squeezing and displacement of a bath before it is coupled.

Squeezing rescales x by e^r and p by e^-r; displacement shifts x by L. Both
inject energy into the reservoir. The energy each quench adds is recorded
per trajectory, and its ensemble mean has a closed form.
"""

import numpy as np

from necl.reservoir import ReservoirSpec, SwitchingProtocol, apply_quench, energy, quench_energy, sample_thermal
from necl.spectral import ModeSet

beta, n = 1.0, 200_000
modes = ModeSet([1.0, 1.0], [0.8, 1.5], [0.3, 0.2], r=[0.3, 0.0], L=[0.0, 0.6])
res = ReservoirSpec(beta, modes, SwitchingProtocol.constant(1.0, 0.0, 4.0), "demo")

pre = sample_thermal(res, streams=7, trajectories=n)
post = apply_quench(pre, modes)
print("mean mode energy before quench:", np.round(energy(pre, modes).mean(0), 4), "(equipartition: 1/beta = 1)")

dE_sq, dE_dp = quench_energy(pre, post, modes)
print("mean squeeze energy per mode:      ", np.round(dE_sq.mean(0), 4))
print("  closed form (cosh 2r - 1)/beta:  ", np.round((np.cosh(2 * modes.r) - 1) / beta, 4))
print("mean displacement energy per mode: ", np.round(dE_dp.mean(0), 4))
print("  closed form m w^2 L^2 / 2:       ", np.round(modes.m * modes.omega**2 * modes.L**2 / 2, 4))

ramp = SwitchingProtocol.ramp(1.0, 0.0, 4.0, 1.0)
print("\nramped switching chi(t) at t = 0, 0.5, 1, 3.5, 4:", ramp.value(np.array([0.0, 0.5, 1.0, 3.5, 4.0])))
