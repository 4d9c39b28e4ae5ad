import csv
import io
import json

import numpy as np
import pytest

from graphdiff import io as gio
from graphdiff.cli import VERIFY_COLUMNS, build_parser, main
from graphdiff.image import DetectorImage

SMALL_SYNTH = [
    "--set", "synth.width=1024",
    "--set", "synth.height=1024",
    "--set", "synth.pixel_pitch=80 um",
    "--set", "synth.reference_region=8 8 40 40",
    "--set", "analyze.reference_region=8 8 40 40",
]  # fmt: skip


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parser_lists_commands():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"budget", "transit", "synth", "analyze", "verify"}


@pytest.mark.parametrize("species,energy,lam", [("He", 706, 540.4), ("H", 963, 922.0)])
def test_budget(capsys, species, energy, lam):
    code, out, _ = run(capsys, "budget", "--set", f"beam.species={species}", "--set", f"beam.energy={energy} eV")
    assert code == 0
    rep = json.loads(out)
    assert rep["lambda_fm"] == pytest.approx(lam, rel=1e-4)
    assert rep["coherence"]["phi_mrad"] == pytest.approx(0.886, abs=5e-4)
    assert rep["ring_angles_mrad"] == sorted(rep["ring_angles_mrad"])


@pytest.mark.parametrize(
    "argv",
    [
        ["budget"],  # no energy
        ["budget", "--set", "beam.energy=706"],
        ["budget", "--set", "beam.energi=706 eV"],
        ["budget", "--set", "beam.species=Ne", "--set", "beam.energy=706 eV"],
        ["budget", "-c", "/nonexistent/run.ini"],
        ["synth", "--set", "beam.energy=706 eV"],  # no output
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "config error" in err


def test_config_file_from_env(capsys, tmp_path, monkeypatch):
    ini = tmp_path / "run.ini"
    ini.write_text("[beam]\nspecies = He\nenergy = 706 eV\n")
    monkeypatch.setenv("GRAPHDIFF_CONFIG", str(ini))
    code, out, _ = run(capsys, "budget")
    assert code == 0 and json.loads(out)["energy_eV"] == 706.0


def test_transit_scan(capsys, tmp_path):
    out = tmp_path / "scan.csv"
    code, _, _ = run(capsys, "transit", "--set", "beam.energy=706 eV", "-o", str(out), "--trajectory-dir", str(tmp_path / "traj"))
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert len(rows) == 7
    assert [float(r["energy_eV"]) for r in rows] == [30, 60, 120, 250, 500, 1000, 1500]
    assert len(list((tmp_path / "traj").iterdir())) == 7
    assert gio.provenance_path(out).exists()


def test_transit_is_byte_identical(capsys, tmp_path):
    args = ["transit", "--set", "transit.species=He H", "--set", "transit.energies=100 1000 eV"]
    run(capsys, *args, "-o", str(tmp_path / "a.csv"))
    run(capsys, *args, "-o", str(tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    pa, pb = (gio.provenance_path(tmp_path / n).read_bytes() for n in ("a.csv", "b.csv"))
    assert pa == pb


@pytest.fixture(scope="module")
def synth_frames(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    base = ["--set", "beam.energy=706 eV", "--set", "run.seed=4", *SMALL_SYNTH]
    assert main(["synth", *base, "--set", "synth.frames=3", "-o", str(d / "he.pgm")]) == 0
    assert main(["synth", *base, "-o", str(d / "single.pgm")]) == 0
    return d, base


def test_synth_outputs(synth_frames):
    d, _ = synth_frames
    names = {p.name for p in d.iterdir()}
    for stem in ("he_000", "he_001", "he_002", "single"):
        assert {f"{stem}.pgm", f"{stem}.mask.pgm", f"{stem}.json", f"{stem}.pgm.provenance.json"} <= names
    a, b = gio.read_image(d / "he_000.pgm"), gio.read_image(d / "he_001.pgm")
    assert a.meta["seed"] == 4 and b.meta["seed"] == 5
    assert not np.array_equal(a.data, b.data)


def test_synth_brightest_ring_radius(synth_frames):
    # first ring of He 706 eV sits at D tan(2.536 mrad) = 1.844 mm
    from helpers import radial_peak_px

    d, _ = synth_frames
    img = gio.read_image(d / "single.pgm")
    c = img.meta["beam_center_px"]
    r = radial_peak_px(img, c, 1.844e-3 / img.pixel_pitch) * img.pixel_pitch
    assert r == pytest.approx(1.844e-3, abs=0.5 * img.pixel_pitch)


def test_synth_is_byte_identical(capsys, synth_frames, tmp_path):
    d, base = synth_frames
    run(capsys, "synth", *base, "-o", str(tmp_path / "single.pgm"))
    for name in ("single.pgm", "single.json", "single.mask.pgm", "single.pgm.provenance.json"):
        assert (tmp_path / name).read_bytes() == (d / name).read_bytes()


def test_analyze_three_frames_and_verify(capsys, synth_frames, tmp_path):
    d, _ = synth_frames
    frames = [str(d / f"he_{i:03d}.pgm") for i in range(3)]
    prefix = str(tmp_path / "he706")
    code, out, _ = run(capsys, "analyze", *SMALL_SYNTH, *frames, "-o", prefix)  # beam comes from the sidecar
    assert code == 0 and "He nominal 706 eV" in out
    rep = gio.read_json(prefix + ".assignment.json")
    assert rep["n_frames"] == 3
    assert rep["assignment"]["fitted_energy_eV"] == pytest.approx(706, rel=0.01)
    prov = gio.read_json(prefix + ".assignment.json.provenance.json")
    assert [i["path"] for i in prov["inputs"]] == [f"he_{i:03d}.pgm" for i in range(3)]
    trace = (tmp_path / "he706.trace.csv").read_text()
    assert trace.startswith("angle_mrad,")

    code, out, _ = run(capsys, "verify", prefix + ".assignment.json")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == VERIFY_COLUMNS
    assert {r[0] for r in rows[1:]} == {"point"}  # one energy: no line fits


def test_analyze_blank_image_exit_4(capsys, tmp_path):
    path = tmp_path / "blank.pgm"
    gio.write_pgm(path, DetectorImage(np.full((256, 256), 50.0), pixel_pitch=80e-6))
    code, _, err = run(capsys, "analyze", "--set", "beam.energy=706 eV", str(path), "-o", str(tmp_path / "x"))
    assert code == 4 and "insufficient" in err
    assert not (tmp_path / "x.assignment.json").exists()


def test_analyze_zero_frame_exit_4(capsys, tmp_path):
    path = tmp_path / "zero.pgm"
    gio.write_pgm(path, DetectorImage(np.zeros((256, 256)), pixel_pitch=80e-6))
    code, _, _ = run(capsys, "analyze", "--set", "beam.energy=706 eV", str(path), "-o", str(tmp_path / "x"))
    assert code == 4


def test_analyze_bad_distortion_exit_2(capsys, synth_frames, tmp_path):
    d, _ = synth_frames
    code, _, _ = run(
        capsys, "analyze", *SMALL_SYNTH, "--set", "analyze.distortion_c1=-3", "--set", "analyze.distortion_norm=37.5 mm",
        str(d / "single.pgm"), "-o", str(tmp_path / "x"),
    )  # fmt: skip
    assert code == 2


def test_analyze_missing_input_exit_2(capsys, tmp_path):
    code, _, _ = run(capsys, "analyze", "--set", "beam.energy=706 eV", str(tmp_path / "nope.pgm"), "-o", str(tmp_path / "x"))
    assert code == 2


def test_verify_without_peaks_exit_4(capsys, tmp_path):
    from graphdiff.imgproc import PeakAssignment

    empty = PeakAssignment([], 540.4, 706.0, "He", 706.0)
    p = tmp_path / "empty.json"
    gio.write_json(p, empty.to_dict())
    code, _, err = run(capsys, "verify", str(p))
    assert code == 4 and "insufficient" in err


def test_verify_malformed_assignment_exit_2(capsys, tmp_path):
    p = tmp_path / "bad.json"
    gio.write_json(p, {"peaks": []})
    code, _, _ = run(capsys, "verify", str(p))
    assert code == 2
