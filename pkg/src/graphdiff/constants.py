"""Physical constants shared by every module (SI units, CODATA 2018).

Keep all numeric constants here so that beam kinematics, the transit
integrator and the detector model agree to the last digit.
"""

PLANCK_H = 6.626070150e-34  # J s (exact)
HBAR = PLANCK_H / (2.0 * 3.141592653589793)
ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
ATOMIC_MASS_UNIT = 1.660539067e-27  # kg
VACUUM_PERMITTIVITY = 8.854187813e-12  # F/m
BOHR_RADIUS = 5.291772109e-11  # m

# Neutral atomic masses in u: 1H, 4He, 12C.
MASS_H = 1.007825032 * ATOMIC_MASS_UNIT
MASS_HE = 4.002603254 * ATOMIC_MASS_UNIT
MASS_C = 12.0 * ATOMIC_MASS_UNIT

ATOMIC_NUMBER = {"H": 1, "He": 2, "C": 6}

# e^2 / (4 pi eps0), in J m
COULOMB_E2 = ELEMENTARY_CHARGE**2 / (4.0 * 3.141592653589793 * VACUUM_PERMITTIVITY)

EV = ELEMENTARY_CHARGE  # J per eV
FWHM_TO_SIGMA = 1.0 / 2.354820045

GRAPHENE_LATTICE_CONSTANT = 246e-12  # m
