import csv
import io
import math

import numpy as np
import pytest

from graphdiff.beamline import Beam
from graphdiff.transit import (
    ANGSTROM,
    FIG1_ENERGIES,
    SCAN_COLUMNS,
    Coherence,
    DecoherenceCriterion,
    IntegrationError,
    NoTransmission,
    PotentialModel,
    StoppingPoint,
    StoppingTable,
    Supercell,
    TransitConfig,
    decoherence_check,
    default_stopping_table,
    electronic_loss,
    energy_scan,
    free_flight_time,
    interaction_time,
    momentum_transfer,
    scan_to_csv,
    simulate_transit,
)

import oracles

# ZBL universal potential, written out independently
_K_E2 = 8.9875517923e9 * (1.602176634e-19) ** 2
_BOHR = 5.29177210903e-11


def zbl(r, z1, z2=6):
    a = 0.88534 * _BOHR / (z1**0.23 + z2**0.23)
    x = r / a
    phi = (
        0.18175 * np.exp(-3.19980 * x)
        + 0.50986 * np.exp(-0.94229 * x)
        + 0.28022 * np.exp(-0.40290 * x)
        + 0.02817 * np.exp(-0.20162 * x)
    )
    return z1 * z2 * _K_E2 / r * phi


@pytest.fixture(scope="module")
def he500():
    return simulate_transit(Beam.of("He", 500))


@pytest.fixture(scope="module")
def scan_he():
    return energy_scan("He")


def test_zbl_matches_reference_inside_cutoff():
    pair = PotentialModel().pair(2)
    r = np.linspace(0.3, 4.4, 50) * ANGSTROM
    v, dv = pair.energy_and_derivative(r)
    rc = 4.5 * ANGSTROM
    h = 1e-16
    dref = (zbl(rc + h, 2) - zbl(rc - h, 2)) / (2 * h)
    ref = zbl(r, 2) - zbl(rc, 2) - (r - rc) * dref  # shifted-force form
    np.testing.assert_allclose(v, ref, rtol=1e-6)


def test_shifted_force_vanishes_at_cutoff():
    pair = PotentialModel().pair(1)
    v, dv = pair.energy_and_derivative(np.array([4.5 * ANGSTROM, 5.0 * ANGSTROM]))
    assert np.allclose(v, 0, atol=1e-30)
    assert np.allclose(dv, 0, atol=1e-20)


def test_pair_derivative_is_consistent():
    pair = PotentialModel().pair(2)
    r = np.linspace(0.5, 4.0, 20) * ANGSTROM
    h = 1e-15
    v, dv = pair.energy_and_derivative(r)
    fd = (pair.energy_and_derivative(r + h)[0] - pair.energy_and_derivative(r - h)[0]) / (2 * h)
    np.testing.assert_allclose(dv, fd, rtol=1e-5)


def test_user_table_reproduces_tabulated_potential():
    r = np.linspace(0.2, 5.0, 400) * ANGSTROM
    tab = PotentialModel("user-table", {"r": r, "V": zbl(r, 2)})
    zb = PotentialModel()
    x = np.linspace(0.5, 4.0, 30) * ANGSTROM
    np.testing.assert_allclose(
        tab.pair(2).energy_and_derivative(x)[0], zb.pair(2).energy_and_derivative(x)[0], rtol=1e-4
    )


def test_unknown_potential_kind():
    with pytest.raises(ValueError):
        PotentialModel("lennard-jones")


def test_supercell_geometry():
    cell = Supercell()
    pos = cell.positions
    assert pos.shape == (72, 3)
    d = np.hypot(pos[:, 0], pos[:, 1])
    bond = 246e-12 / math.sqrt(3)
    # the origin is a hexagon centre: six atoms at one bond length, none closer
    assert np.sum(np.isclose(d, bond, rtol=1e-9, atol=0)) == 6
    assert d.min() == pytest.approx(bond)
    assert np.all(pos[:, 2] == 0)


def test_energy_conservation(he500):
    assert he500.transmitted and not he500.reflected
    assert he500.energy_drift < 1e-4


def test_interaction_time_bounds(he500):
    t = interaction_time(he500)
    assert t == pytest.approx(he500.interaction_time)
    assert t >= free_flight_time(Beam.of("He", 500))
    assert t * 1e15 >= 2.19
    v = math.sqrt(2 * 500 * oracles.E_CHARGE / oracles.M_HE)
    assert free_flight_time(Beam.of("He", 500)) == pytest.approx(3.4e-10 / v)


def test_hexagon_centre_impact_is_symmetric(he500):
    assert len(he500.nearest) == 6
    # the six kicks cancel; each atom still recoils
    assert he500.delta_p_net < 1e-6 * he500.delta_p_per_atom
    assert momentum_transfer(he500, per_atom=True) > 1e-24
    assert np.all(np.abs(he500.projectile_dp) < 1e-30)


def test_momentum_balance_off_centre():
    res = simulate_transit(Beam.of("He", 120), cfg=TransitConfig.displaced(0.4 * ANGSTROM))
    tr = res.trajectory
    carbons = tr.carbon_momentum[-1, :, :2].sum(0)
    np.testing.assert_allclose(carbons + res.projectile_dp, 0, atol=1e-6 * np.abs(res.projectile_dp).max())
    assert res.delta_p_net > 1e-24


def test_timestep_halving_converges():
    b = Beam.of("He", 250)
    a = simulate_transit(b)
    h = simulate_transit(b, cfg=TransitConfig(timestep=7.5e-18))
    assert h.delta_p_per_atom == pytest.approx(a.delta_p_per_atom, rel=1e-2)
    assert h.interaction_time == pytest.approx(a.interaction_time, rel=1e-3)


def test_coarse_timestep_raises():
    with pytest.raises(IntegrationError):
        simulate_transit(Beam.of("He", 1500), cfg=TransitConfig(timestep=1e-15))


def test_slow_projectile_reflects():
    res = simulate_transit(Beam.of("He", 2.0))
    assert res.reflected and not res.transmitted
    assert math.isnan(res.interaction_time)
    with pytest.raises(NoTransmission):
        interaction_time(res)


def test_interaction_time_decreases_over_scan(scan_he):
    t = [r["interaction_time_fs"] for r in scan_he]
    assert [r["energy_eV"] for r in scan_he] == list(FIG1_ENERGIES)
    assert all(x > y for x, y in zip(t, t[1:]))


def test_per_atom_kick_trends(scan_he):
    dp = [r["delta_p_per_atom"] for r in scan_he]
    assert all(x > y for x, y in zip(dp, dp[1:]))
    h = energy_scan("H", [120, 500, 1500])
    for row in h:
        he = [r for r in scan_he if r["energy_eV"] == row["energy_eV"]][0]
        assert row["delta_p_per_atom"] < he["delta_p_per_atom"]


def test_scan_parallel_matches_serial():
    a = energy_scan("H", [250, 1000], workers=1)
    b = energy_scan("H", [1000, 250], workers=2)
    assert scan_to_csv(a) == scan_to_csv(b)


def test_scan_csv_columns(scan_he):
    rows = list(csv.reader(io.StringIO(scan_to_csv(scan_he))))
    assert tuple(rows[0]) == SCAN_COLUMNS
    assert len(rows) == 8


def test_decoherence_threshold_is_strict():
    crit = DecoherenceCriterion()
    assert decoherence_check(2.0e-23) is Coherence.COHERENT
    assert decoherence_check(2.1e-23) is Coherence.DECOHERING
    assert decoherence_check(0.0) is Coherence.COHERENT
    with pytest.raises(ValueError):
        decoherence_check(-1.0)
    assert crit.rms_speed == pytest.approx(2.1e-23 / (12 * oracles.AMU), rel=1e-9)
    with pytest.raises(ValueError):
        DecoherenceCriterion(0.0)


def test_stopping_anchors():
    assert electronic_loss(Beam.of("H", 1500)) == 16.0
    he = {e: electronic_loss(Beam.of("He", e)) for e in FIG1_ENERGIES}
    assert min(he, key=he.get) == 250.0
    # clamped outside the table
    assert electronic_loss(Beam.of("He", 10)) == electronic_loss(Beam.of("He", 30))


def test_stopping_interpolates_linearly():
    tab = StoppingTable((StoppingPoint(Beam.of("H", 1).species, 100, 1.0), StoppingPoint(Beam.of("H", 1).species, 300, 5.0)))
    assert electronic_loss(Beam.of("H", 200), tab) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        electronic_loss(Beam.of("He", 200), tab)


def test_stopping_csv_round_trip():
    tab = default_stopping_table()
    assert StoppingTable.from_csv(tab.to_csv()) == tab


def test_electronic_loss_reported_not_applied():
    b = Beam.of("H", 1500)
    with_loss = simulate_transit(b, stopping=default_stopping_table())
    without = simulate_transit(b)
    assert with_loss.energy_loss_electronic == 16.0
    assert without.energy_loss_electronic == 0.0
    assert with_loss.delta_p_per_atom == without.delta_p_per_atom


def test_trajectory_csv(he500):
    lines = he500.trajectory.to_csv().splitlines()
    assert lines[0].startswith("t_fs,x_A,y_A,z_A,")
    assert len(lines) == len(he500.trajectory.t) + 1


def test_config_validation():
    with pytest.raises(ValueError):
        TransitConfig(timestep=0)
    with pytest.raises(ValueError):
        TransitConfig(start_height=1e-10)
