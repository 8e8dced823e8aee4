"""Green's functions on the contour that carries the counting field.

The counting field lifts the backward branch to height hbar*lambda. The
Green's function on every branch pair follows from one formula. Its Keldysh
components reduce to the classical kernels as hbar goes to 0, and at
lambda = 0 they satisfy the fluctuation-dissipation relation.
"""

import math

from necl.contour import (
    EXPECTED_REMAINDER_ORDER,
    MATSUBARA,
    MINUS,
    PLUS,
    ContourPoint,
    GfParams,
    classical_limit_check,
    component,
    fdr_residual,
    gf,
    keldysh_rotate,
    squeezed_rotated,
    symmetry_residuals,
)

p = GfParams(omega=1.3, beta=0.8, lam=0.4, hbar=0.7, tau=2.0)
print("G^{+,-}(0.9, 0.2) =", component(PLUS, MINUS, 0.9, 0.2, p))
start = gf(ContourPoint(MINUS, 0.0), ContourPoint(PLUS, 1.0), p)
end = gf(ContourPoint(MATSUBARA, -p.hbar * p.beta), ContourPoint(PLUS, 1.0), p)
print(f"KMS: |G(start, z') - G(end, z')| = {abs(start - end):.1e}")

print("\nrotated components at lambda = 0.4:")
for k, v in keldysh_rotate(0.3, 1.1, p).items():
    print(f"  G^{{{k}}} = {complex(v):.6f}")

p0 = GfParams(1.3, 0.8, 0.0, 0.7, tau=2.0)
print(f"\nFDR residual at lambda = 0: {abs(fdr_residual(0.3, 1.1, p0)):.1e}")
print(f"probability conservation at lambda = 0: {abs(symmetry_residuals(p0).probability):.1e}")
print(f"periodic protocol tau = 2 pi / omega: {abs(symmetry_residuals(GfParams(1.3, 0.8, 0.4, 0.7, tau=2 * math.pi / 1.3)).periodic):.1e}")

print("\nsmall-hbar remainders (fitted order vs expected):")
for comp in EXPECTED_REMAINDER_ORDER:
    rep = classical_limit_check(comp, 0.3, 1.1, 0.4, 0.8, omega=1.3)
    print(f"  {comp}: {rep.fitted_order:.3f} vs {rep.expected_order}")

print("\nsqueezed mode, hbar = 1e-3: q,q component against the classical squeezed kernel")
w, b, h, t, t2 = 1.3, 0.8, 1e-3, 0.3, 1.1
for r in (0.05, 0.025):
    qq = squeezed_rotated(t, t2, GfParams(w, b, 0.0, h, r=r))["q,q"]
    classical = math.exp(-2 * r) / (w**2 * b) * (math.cos(w * (t - t2)) + math.expm1(4 * r) * math.cos(w * t) * math.cos(w * t2))
    print(f"  r = {r}: mismatch {abs(h * qq / (1j * w) - classical):.2e}")
