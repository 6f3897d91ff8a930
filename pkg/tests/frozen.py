"""Reference values computed outside the package and frozen here.

Each constant records how it was obtained so it can be regenerated.
"""

# mpmath.ncdf(0.44) at 30 digits
PHI_0_44 = 0.670031446339406327967660513308

# sum_{k=0}^{30} e^{-1}/k! * Phi(-k) with mpmath at 30 digits: P{W_1 + N_1 <= 0}
# for a unit Brownian motion plus a unit-intensity Poisson count of unit jumps
MERTON_CDF_AT_ZERO = 0.246573632622923115008803864324

# distinct k-step sums of the 57 integer points {0} u {sign patterns on the
# lines {i, i+1, i+3} mod 7}, by brute-force set enumeration with numpy
D7_DISTINCT_SUMS = {1: 57, 2: 995, 3: 8683}

# Printed table values: (bermudan h=T/3, extrapolation alpha=1, alpha=1/2)
MIN_PUT_SIGMA_04_AT_100 = (29.2172, 31.2058, 32.6757)
