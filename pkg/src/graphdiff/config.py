"""INI run configuration with unit-suffixed values.

Every dimensioned value carries its unit (``energy = 706 eV``,
``s1 = 500 um``); dimensionless values must not. Unknown sections and
keys are rejected so that typos fail loudly instead of silently falling
back to defaults.
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass

ENV_VAR = "GRAPHDIFF_CONFIG"

ANGSTROM = 1e-10

UNITS = {
    "energy": {"eV": 1.0, "keV": 1e3, "meV": 1e-3},
    "length": {
        "m": 1.0,
        "cm": 1e-2,
        "mm": 1e-3,
        "um": 1e-6,
        "µm": 1e-6,
        "nm": 1e-9,
        "pm": 1e-12,
        "fm": 1e-15,
        "A": ANGSTROM,
        "Å": ANGSTROM,
        "angstrom": ANGSTROM,
    },
    "time": {"s": 1.0, "fs": 1e-15, "as": 1e-18},
    "angle": {"rad": 1.0, "mrad": 1e-3, "urad": 1e-6, "deg": 3.141592653589793 / 180},
    "area": {"m2": 1.0, "m^2": 1.0, "A2": ANGSTROM**2, "A^2": ANGSTROM**2, "angstrom^2": ANGSTROM**2},
    "momentum": {"kg*m/s": 1.0, "kg m/s": 1.0},
}

# kind: a UNITS key for dimensioned floats, or float/int/bool/str/list kinds.
# Dimensioned lists are spelled "<kind>[]".
SCHEMA = {
    "run": {"seed": ("int", "0")},
    "beam": {
        "species": ("str", "He"),
        "energy": ("energy", None),
        "energy_fwhm": ("energy", None),
    },
    "geometry": {
        "s0": ("length", "1 mm"),
        "s1": ("length", "500 um"),
        "s2": ("length", "200 um"),
        "L": ("length", "790 mm"),
        "detector_distance": ("length", "727 mm"),
        "detector_diameter": ("length", "75 mm"),
    },
    "lattice": {
        "a": ("length", "246 pm"),
        "max_ratio": ("float", "8"),
    },
    "transit": {
        "species": ("str[]", None),  # defaults to the beam species
        "energies": ("energy[]", "30 60 120 250 500 1000 1500 eV"),
        "timestep": ("time", "15 as"),
        "start_height": ("length", "6 A"),
        "interaction_halfwidth": ("length", "1.7 A"),
        "impact_point": ("float[]", "0 0"),
        "supercell": ("int", "6"),
        "potential": ("str", "screened-coulomb"),
        "potential_table": ("str", None),
        "cutoff": ("length", "4.5 A"),
        "energy_tolerance": ("float", "1e-4"),
        "stopping_table": ("str", None),
        "p0": ("momentum", "2.1e-23 kg*m/s"),
        "workers": ("int", "1"),
    },
    "synth": {
        "ring_width_sigma": ("angle", None),
        "damping_alpha": ("area", "0 m2"),
        "amplitude_scale": ("float", "400"),
        "background_level": ("float", "150"),
        "background_spread": ("angle", "10 mrad"),
        "background_floor": ("float", "20"),
        "central_level": ("float", "5000"),
        "beam_block": ("str", "default"),
        "center_x": ("length", "0 m"),
        "center_y": ("length", "0 m"),
        "width": ("int", "2048"),
        "height": ("int", "2048"),
        "pixel_pitch": ("length", "40 um"),
        "gain": ("float", "1"),
        "reference_level": ("float", "1000"),
        "reference_region": ("int[]", "16 16 80 80"),
        "distortion_c1": ("float", "0"),
        "distortion_c2": ("float", "0"),
        "distortion_norm": ("length", "1 m"),
        "noise": ("bool", "true"),
        "frames": ("int", "1"),
    },
    "analyze": {
        "dark_level": ("float", "0"),
        "reference_region": ("str", "16 16 80 80"),
        "rescale_target": ("float", "1000"),
        "distortion_c1": ("float", "0"),
        "distortion_c2": ("float", "0"),
        "distortion_norm": ("length", "1 m"),
        "n_inner_rings": ("int", "3"),
        "bin_width": ("angle", "0.1 mrad"),
        "min_prominence": ("float", "3"),
        "smooth_window": ("int", "3"),
        "tolerance": ("angle", "0.2 mrad"),
        "max_ratio": ("float", "12"),
        "refine": ("bool", "true"),
    },
}


class ConfigError(ValueError):
    pass


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_quantity(text: str, kind: str) -> float:
    """``"706 eV"`` -> 706.0 in SI (eV for energies)."""
    m = re.fullmatch(rf"\s*({_NUM})\s*(.*?)\s*", text)
    if not m:
        raise ConfigError(f"cannot parse {text!r} as a {kind}")
    value, unit = float(m.group(1)), m.group(2)
    return value * _unit(unit, kind, text)


def _unit(unit: str, kind: str, text: str) -> float:
    if not unit:
        raise ConfigError(f"{text!r}: {kind} values need a unit ({', '.join(UNITS[kind])})")
    try:
        return UNITS[kind][unit]
    except KeyError:
        raise ConfigError(f"{text!r}: unknown {kind} unit {unit!r}") from None


def parse_value(text: str, kind: str):
    text = text.strip()
    if kind == "str":
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{text!r} is not a boolean")
    if kind in ("int", "float"):
        try:
            return int(text) if kind == "int" else float(text)
        except ValueError:
            raise ConfigError(f"{text!r} is not a plain {kind} (dimensionless values take no unit)") from None
    if kind.endswith("[]"):
        base = kind[:-2]
        parts = text.replace(",", " ").split()
        if base == "str":
            return parts
        if base in UNITS:
            # one trailing unit shared by the whole list
            if not parts or re.fullmatch(_NUM, parts[-1]):
                raise ConfigError(f"{text!r}: a list of {base} values needs a unit")
            scale = _unit(parts[-1], base, text)
            return [parse_value(p, "float") * scale for p in parts[:-1]]
        return [parse_value(p, base) for p in parts]
    return parse_quantity(text, kind)


@dataclass
class RunConfig:
    values: dict  # section -> key -> parsed value (None when unset)
    text: str  # canonical text used for hashing

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def require(self, section: str, key: str):
        v = self.values[section][key]
        if v is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return v

    # builders --------------------------------------------------------------

    def beam(self, energy_required: bool = True):
        from .beamline import Beam, Species

        b = self.values["beam"]
        try:
            sp = Species.parse(b["species"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if b["energy"] is None:
            if energy_required:
                raise ConfigError("missing required key [beam] energy")
            return None
        try:
            return Beam.of(sp, b["energy"], b["energy_fwhm"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def geometry(self):
        from .beamline import BeamlineGeometry

        try:
            return BeamlineGeometry(**self.values["geometry"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def lattice(self):
        from .lattice import DirectLattice

        try:
            return DirectLattice(self.values["lattice"]["a"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def pattern(self, frame: int = 0):
        from .synth import DEFAULT_BEAM_BLOCK, PatternParams

        s = self.values["synth"]
        block = s["beam_block"].strip()
        if block.lower() == "default":
            poly = DEFAULT_BEAM_BLOCK
        elif block.lower() in ("none", "off"):
            poly = None
        else:
            coords = parse_value(block, "length[]")
            if len(coords) < 6 or len(coords) % 2:
                raise ConfigError("[synth] beam_block needs at least three x y vertex pairs")
            poly = tuple(zip(coords[0::2], coords[1::2]))
        region = s["reference_region"]
        if len(region) != 4:
            raise ConfigError("[synth] reference_region needs x0 y0 x1 y1")
        try:
            return PatternParams(
                ring_width_sigma=s["ring_width_sigma"],
                damping_alpha=s["damping_alpha"],
                amplitude_scale=s["amplitude_scale"],
                background_level=s["background_level"],
                background_spread=s["background_spread"],
                background_floor=s["background_floor"],
                central_level=s["central_level"],
                beam_block=poly,
                noise_seed=self.seed + frame if s["noise"] else None,
                center=(s["center_x"], s["center_y"]),
                image_size=(s["width"], s["height"]),
                pixel_pitch=s["pixel_pitch"],
                gain=s["gain"],
                reference_level=s["reference_level"],
                reference_region=tuple(region),
                distortion=(s["distortion_c1"], s["distortion_c2"]),
                distortion_norm=s["distortion_norm"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def analyze_params(self):
        from .pipeline import AnalyzeParams

        a = self.values["analyze"]
        region = a["reference_region"].strip()
        if region.lower() in ("none", "off"):
            region = None
        else:
            region = tuple(parse_value(region, "int[]"))
            if len(region) != 4:
                raise ConfigError("[analyze] reference_region needs x0 y0 x1 y1 or none")
        try:
            return AnalyzeParams(
                dark_level=a["dark_level"],
                reference_region=region,
                rescale_target=a["rescale_target"],
                distortion=(a["distortion_c1"], a["distortion_c2"]),
                distortion_norm=a["distortion_norm"],
                n_inner_rings=a["n_inner_rings"],
                bin_width=a["bin_width"],
                min_prominence=a["min_prominence"],
                smooth_window=a["smooth_window"],
                tolerance_mrad=a["tolerance"] * 1e3,
                max_ratio=a["max_ratio"],
                refine=a["refine"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def transit_setup(self):
        """(species list, energies, Supercell, PotentialModel, TransitConfig, StoppingTable, criterion)."""
        from pathlib import Path

        from .beamline import Species
        from .transit import (
            DecoherenceCriterion,
            PotentialModel,
            StoppingTable,
            Supercell,
            TransitConfig,
            default_stopping_table,
        )

        t = self.values["transit"]
        species = t["species"] or [self.values["beam"]["species"]]
        try:
            species = [Species.parse(s) for s in species]
            ip = t["impact_point"]
            if len(ip) != 2:
                raise ConfigError("[transit] impact_point needs two fractional coordinates")
            cfg = TransitConfig(
                impact_point=tuple(ip),
                start_height=t["start_height"],
                timestep=t["timestep"],
                interaction_halfwidth=t["interaction_halfwidth"],
                energy_tolerance=t["energy_tolerance"],
            )
            cell = Supercell(t["supercell"], t["supercell"], self.lattice())
            params = {}
            if t["potential"] == "user-table":
                if not t["potential_table"]:
                    raise ConfigError("[transit] potential = user-table needs potential_table")
                params = _read_potential_table(t["potential_table"])
            pot = PotentialModel(t["potential"], params, t["cutoff"])
            if t["stopping_table"]:
                stopping = StoppingTable.from_csv(Path(t["stopping_table"]).read_text())
            else:
                stopping = default_stopping_table()
            crit = DecoherenceCriterion(t["p0"])
        except (ValueError, OSError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        energies = t["energies"]
        if not energies or min(energies) <= 0:
            raise ConfigError("[transit] energies must be a non-empty list of positive energies")
        return species, energies, cell, pot, cfg, stopping, crit


def _read_potential_table(path) -> dict:
    """CSV with columns r_angstrom, V_eV -> arrays in metres and joules."""
    import csv

    from .constants import EV

    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        r = [float(row["r_angstrom"]) * ANGSTROM for row in rows]
        v = [float(row["V_eV"]) * EV for row in rows]
    except KeyError as exc:
        raise ConfigError(f"potential table needs columns r_angstrom, V_eV (missing {exc})") from None
    if len(r) < 4:
        raise ConfigError("potential table needs at least 4 points")
    return {"r": r, "V": v}


def _raw_defaults() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def load_config(text: str = "", overrides=()) -> RunConfig:
    """Parse INI text, apply ``section.key=value`` overrides, validate everything."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive ("L")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = _raw_defaults()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key [{sec}] {key}")
            raw[sec][key] = val
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not section.key=value")
        lhs, val = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        if key not in SCHEMA[sec]:
            raise ConfigError(f"unknown key [{sec}] {key}")
        raw[sec][key] = val.strip()

    values: dict = {}
    lines = []
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        lines.append(f"[{sec}]")
        for key, (kind, _) in keys.items():
            txt = raw[sec][key]
            if txt is None or (kind != "str" and txt.strip() == ""):
                values[sec][key] = None
                continue
            try:
                values[sec][key] = parse_value(txt, kind)
            except ConfigError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None
            lines.append(f"{key} = {txt.strip()}")
    return RunConfig(values, "\n".join(lines) + "\n")


def read_config(path=None, overrides=()) -> RunConfig:
    """Config from ``path``, else from ``$GRAPHDIFF_CONFIG``, else all defaults."""
    path = path or os.environ.get(ENV_VAR)
    text = ""
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return load_config(text, overrides)

