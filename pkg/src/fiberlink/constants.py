"""Physical constants and defaults shared by every module.

All values are SI. Anything that a scenario or command can override has a
default here and nowhere else.
"""

C_LIGHT = 299_792_458.0          # m/s, exact
SECONDS_PER_DAY = 86_400.0

NU0_DEFAULT = 194.4e12           # Hz, 1542 nm ultra-stable laser
GATE_DEFAULT = 1.0               # s, dead-time-free counter gate
N_GROUP = 1.468                  # group index of standard single-mode fiber

# Effective thermal coefficient of optical path length (1/K). Calibrated so
# that 1 m of fiber with a 0.5 K peak-to-peak daily swing limits the
# stability to ~4.3e-19 at half a day.
KAPPA_DEFAULT = 1.1e-5

COUNTER_MAX_HZ = 55e6            # highest beat the frequency counters accept
MAD_TO_SIGMA = 1.4826            # Gaussian consistency factor for the MAD

# Expected ratio Mod-AVAR / AVAR at large averaging factor, keyed by the
# power-law exponent of S_y(f). Reference only: Lambda-mode counter data are
# reported as measured and never rescaled with this table.
MOD_TO_ALLAN_VARIANCE_RATIO = {0: 0.50, -1: 0.67, -2: 0.82}
