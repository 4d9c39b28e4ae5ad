"""Independent reference computations for the tests.

Constants are typed in here from CODATA 2018 rather than imported from the
package, and geometry is done with explicit vectors instead of the
package's Loeschian shortcut.
"""

import math

H_PLANCK = 6.62607015e-34
E_CHARGE = 1.602176634e-19
AMU = 1.66053906660e-27
M_H = 1.00782503223 * AMU
M_HE = 4.00260325413 * AMU
A_GRAPHENE = 246e-12


def mass(species):
    return {"H": M_H, "He": M_HE}[species]


def wavelength(species, energy_ev):
    return H_PLANCK / math.sqrt(2 * mass(species) * energy_ev * E_CHARGE)


def g1_magnitude(a=A_GRAPHENE):
    return 4 * math.pi / (math.sqrt(3) * a)


def angle(species, energy_ev, ratio, a=A_GRAPHENE):
    return math.asin(ratio * g1_magnitude(a) * wavelength(species, energy_ev) / (2 * math.pi))


def ring_census(max_ratio, a=A_GRAPHENE):
    """Distinct |G| values by brute force over explicit reciprocal vectors."""
    # reciprocal vectors of a hexagonal lattice, 60 degrees apart
    g = g1_magnitude(a)
    b1 = (g, 0.0)
    b2 = (g * 0.5, g * math.sqrt(3) / 2)
    mags = []
    n = int(2 * max_ratio) + 2
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            if i == 0 and j == 0:
                continue
            x = i * b1[0] + j * b2[0]
            y = i * b1[1] + j * b2[1]
            r = math.hypot(x, y) / g
            if r <= max_ratio + 1e-9:
                mags.append(r)
    mags.sort()
    distinct = []
    for m in mags:
        if not distinct or m - distinct[-1][0] > 1e-9:
            distinct.append([m, 1])
        else:
            distinct[-1][1] += 1
    return distinct


def transverse_coherence(species, energy_ev, L=0.790, s1=500e-6):
    return 2 * L * wavelength(species, energy_ev) / s1


def longitudinal_over_lambda(energy_ev, fwhm_ev):
    # l_l / lambda = lambda / d_lambda = 2E / dE
    return 2 * energy_ev / fwhm_ev
