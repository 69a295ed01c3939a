"""
Equidim

Equilibrium measures, Lyapunov exponents and Hausdorff-dimension bounds
for holomorphic endomorphisms of P^1 and P^2.
"""
