"""Exact quantum statistics on a truncated Fock space.

A harmonic system couples to one displaced and one squeezed single-mode
reservoir. Everything is dense linear algebra. That includes the two-point
measurement generating function, the fluctuation theorem with inverted quench
parameters and the split of entropy production into correlations and
reservoir relative entropies.
"""

from necl import qexact
from necl.microdyn import THERMAL, SystemSpec
from necl.reservoir import ReservoirSpec, SwitchingProtocol
from necl.spectral import ModeSet

tau = 2.0
sw = SwitchingProtocol.constant(1.0, 0.0, tau)
model = qexact.QuantumModel(
    SystemSpec(omega=1.0, initial=THERMAL, beta=2.0),
    (
        ReservoirSpec(2.0, ModeSet.single(omega=1.2, c=0.3), sw, "displaced"),
        ReservoirSpec(4.0, ModeSet.single(omega=0.9, c=0.25), sw, "squeezed"),
    ),
    tau=tau,
    system_cutoff=12,
    mode_cutoff=12,
    alphas=(0.3, 0.0),
    squeezes=(0.0, 0.2),
)
dm = qexact.DenseModel(model)
print(f"Hilbert space dimension {dm.space.dim}")
print(f"M(0) = {qexact.tpem_mgf(dm, 0.0, (0.0, 0.0)):.12f}")

th = qexact.average_thermodynamics(dm)
print(f"\nheat per reservoir {th.Q}, system energy change {th.delta_E_S:.6f}")
print(f"entropy production {th.sigma:.6f} = correlations {th.mutual_information:.6f} + reservoir relative entropies {sum(th.D):.6f}")
print(f"split residual {th.split_residual:.1e}")

grid = [(0.0, (0.0, 0.0)), (-0.5, (-0.3, -0.2)), (0.2, (0.1, -0.4))]
ft = qexact.quantum_ft_check(model, grid)
print(f"\nfluctuation theorem with (-alpha*, -r*): max residual {ft.max_residual:.1e}")
print(f"with the wrong sign (alpha*, r*):        max residual {ft.max_control_residual:.1e}")
