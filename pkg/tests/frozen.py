"""Reference values computed once by the independent oracles and frozen here.

``test_frozen_values_reproduce`` recomputes each from its oracle.
"""

# P(Z_20 > 0) for offspring pgf ((1+s)/2)**2, iterated from s = 0
GW_SURVIVAL_BINARY_HALF_20 = 0.15380708720383784

# C_N = 2 C_{N-1} / (1 + C_{N-1}), C_1 = 2, in exact rationals
BINARY_UNIT_CEFF_30 = 1.0000000009313226

# C_20 / pi(root) with pi(root) = 2 on the unit binary tree
BINARY_UNIT_ESCAPE_20 = 0.500000476837613

# round-robin level-2 child counts for b = 2, N = 3 (9 children over 4 parents)
SPHERE_B2_LEVEL2_COUNTS = (3, 2, 2, 2)
