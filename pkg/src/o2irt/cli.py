"""Command-line entry point.

Every command writes its outputs under ``--out-dir`` together with a
``manifest.json`` that hashes inputs and outputs. Outputs contain no
timestamps and do not depend on ``--workers``, so repeated runs are
byte-identical.

Exit codes:
    0  success
    1  unexpected error
    2  configuration error (bad flag, config key or missing input file)
    3  scene or data file could not be parsed
    4  domain or validation error (bad geometry, no direct path, ...)

Any flag can also be set through an environment variable named
``O2IRT_`` plus the flag name in upper case with dashes as underscores,
e.g. ``O2IRT_MAX_BOUNCES=2``. Command-line flags win over the environment,
which wins over the config file's ``run`` section.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .calibration import (
    CalibrationGrid,
    CalibrationParams,
    DirectPathObservation,
    calibrate,
    forward_observations,
    jitter_sensitivity,
    observe_direct_path,
)
from .channel import (
    LspRow,
    ModelVariant,
    PathGainModel,
    compare_lsps,
    lsp_rows,
    simulate,
    synthesize_padp,
)
from .constants import DELAY_LIMIT_NS, DYNAMIC_RANGE_DB, MAX_BOUNCES
from .errors import ConfigError, DirectPathNotFound, DomainError, O2IError, SceneParseError, ValidationError
from .scene import (
    LayerStack,
    Scene,
    ShoeboxSpec,
    StackRole,
    config_to_dict,
    load_config,
    load_scene,
    make_synthetic_scene,
    parse_config,
    save_cloud,
    shoebox_links,
    survey_links,
)
from .slab_em import FilmParameters, apply_films, loss_curve

log = logging.getLogger("o2irt")

ENV_PREFIX = "O2IRT_"
EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_PARSE, EXIT_DOMAIN = 0, 1, 2, 3, 4

# flags that change how work is scheduled but never what is computed
_NON_SEMANTIC = {"workers", "out_dir", "command", "func", "verbose"}


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


# ---------------------------------------------------------------- run config


@dataclass(frozen=True)
class RunConfig:
    """Resolved run settings: flags over environment over the config's run section."""

    scene_path: str | None
    links: tuple
    bands: tuple
    max_bounces: int = MAX_BOUNCES
    dynamic_range_db: float = DYNAMIC_RANGE_DB
    delay_limit_ns: float = DELAY_LIMIT_NS
    model_variants: tuple = (ModelVariant.FULL_FLOOR_PLAN,)
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.max_bounces <= MAX_BOUNCES:
            raise ConfigError(f"max_bounces must be in [0, {MAX_BOUNCES}], got {self.max_bounces}")
        if not self.delay_limit_ns > 0:
            raise ConfigError("delay_limit_ns must be > 0")
        if not self.dynamic_range_db > 0:
            raise ConfigError("dynamic_range_db must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def parse_band(text) -> float:
    """Band in Hz from '14.25' (GHz), '14.25GHz' or '14.25e9' (Hz)."""
    s = str(text).strip().lower()
    scale = 1.0
    if s.endswith("ghz"):
        s, scale = s[:-3], 1e9
    elif s.endswith("hz"):
        s = s[:-2]
    try:
        v = float(s) * scale
    except ValueError:
        raise ConfigError(f"bad band {text!r}") from None
    if v < 1e6:
        v *= 1e9
    if not v > 0:
        raise ConfigError(f"band must be positive, got {text!r}")
    return v


def _band_label(f: float) -> str:
    return f"{f / 1e9:g}"


def _curve_labels(bands) -> list[str]:
    """Column suffixes: whole GHz plus 'g' (4g, 14g) unless two bands collide."""
    short = [f"{int(f // 1e9)}g" for f in bands]
    if len(set(short)) == len(short):
        return short
    return [f"{_band_label(f)}ghz" for f in bands]


def _setting(args, name, run: dict, default, conv):
    v = getattr(args, name, None)
    if v is None:
        v = os.environ.get(ENV_PREFIX + name.upper())
    if v is None:
        v = run.get(name)
    if v is None:
        return default
    try:
        return conv(v)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {v!r}") from None


def _list_setting(args, name, run: dict, default, conv):
    v = getattr(args, name, None)
    if not v:
        env = os.environ.get(ENV_PREFIX + name.upper())
        v = env.split(",") if env else run.get(name)
    if not v:
        return tuple(default)
    if isinstance(v, (str, float, int)):
        v = [v]
    return tuple(conv(x) for x in v)


def _variants(items) -> tuple:
    out = []
    for x in items:
        if x == "all":
            out.extend(ModelVariant)
            continue
        try:
            out.append(ModelVariant(x))
        except ValueError:
            raise ConfigError(f"unknown model variant {x!r}") from None
    return tuple(dict.fromkeys(out))


def _load(args) -> tuple[Scene, RunConfig]:
    scene_path = _setting(args, "scene", {}, None, str)
    config_path = _setting(args, "config", {}, None, str)
    cfg = load_config(config_path)
    run = dict(cfg.run)
    if scene_path is None:
        scene_path = run.get("scene")
        if scene_path is not None and config_path is not None:
            scene_path = os.path.join(os.path.dirname(config_path), scene_path)
    bands = _list_setting(args, "band", run, cfg.bands, parse_band)
    rc = RunConfig(
        scene_path=scene_path,
        links=cfg.links,
        bands=bands,
        max_bounces=_setting(args, "max_bounces", run, MAX_BOUNCES, int),
        dynamic_range_db=_setting(args, "dynamic_range", run, DYNAMIC_RANGE_DB, float),
        delay_limit_ns=_setting(args, "delay_limit", run, DELAY_LIMIT_NS, float),
        model_variants=_variants(_list_setting(args, "variant", run, ("full_floor_plan",), str)),
        workers=_setting(args, "workers", run, 1, int),
        seed=_setting(args, "seed", run, 0, int),
    )
    if scene_path is None:
        raise ConfigError("no scene given (use --scene or run.scene in the config)")
    scene = load_scene(scene_path, cfg)
    cfg.materials.check_complete(bands)
    return scene, rc


# ------------------------------------------------------------------- outputs


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Outputs:
    """Collects files in memory, then writes them and the manifest in sorted order."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: dict[str, bytes] = {}

    def text(self, name: str, content: str) -> None:
        self.files[name] = content.encode("utf-8")

    def csv(self, name: str, header: Sequence[str], rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.text(name, buf.getvalue())

    def json(self, name: str, obj) -> None:
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")

    def jsonl(self, name: str, objs) -> None:
        self.text(name, "".join(json.dumps(o, sort_keys=True) + "\n" for o in objs))

    def write(self, command: str, args, inputs: Sequence[str]) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        for name in sorted(self.files):
            with open(os.path.join(self.out_dir, name), "wb") as fh:
                fh.write(self.files[name])
        manifest = {
            "command": command,
            "version": __version__,
            "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in _NON_SEMANTIC},
            "inputs": {p: _sha256_file(p) for p in sorted(set(inputs)) if p},
            "outputs": {n: hashlib.sha256(b).hexdigest() for n, b in sorted(self.files.items())},
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> tuple[Outputs, list]:
    """Write the synthetic shoebox scene, its config and optional synthetic observations."""
    spec = ShoeboxSpec(spacing=args.spacing)
    cloud = make_synthetic_scene(spec)
    links = survey_links(spec) if args.links == "survey" else shoebox_links(spec)
    cfg = parse_config(
        {
            "resolution_hint_m": cloud.resolution_hint,
            "links": [{"id": l.link_id, "tx_m": list(l.tx), "rx_m": list(l.rx)} for l in links],
        }
    )
    out = Outputs(args.out_dir)
    buf_path = os.path.join(args.out_dir, "scene.xyz")
    os.makedirs(args.out_dir, exist_ok=True)
    save_cloud(cloud, buf_path, header=f"synthetic shoebox, spacing {args.spacing} m")
    with open(buf_path, "rb") as fh:
        out.files["scene.xyz"] = fh.read()
    d = config_to_dict(cfg)
    d["run"] = {"scene": "scene.xyz"}
    out.text("config.yaml", yaml.safe_dump(d, sort_keys=True))
    if args.observations:
        params = CalibrationParams(args.triple_film_nm, args.double_film_nm, {4.65e9: args.canopy_4g, 14.25e9: args.canopy_14g})
        seed = _setting(args, "seed", {}, 0, int)
        scene = Scene(cloud, cfg)
        obs = forward_observations(scene, params, cfg.bands, noise_db=args.noise_db, seed=seed)
        _write_observations(out, "observations.csv", obs)
    return out, []


def _write_observations(out: Outputs, name: str, obs) -> None:
    out.csv(
        name,
        ("link_id", "band_ghz", "tau_ns", "phi_deg", "gain_db"),
        ((o.link_id, o.band_hz / 1e9, o.tau_ns, o.phi_deg, o.gain_db) for o in obs),
    )


def read_observations(path: str) -> list[DirectPathObservation]:
    """Parse an observations CSV (link_id, band_ghz, tau_ns, phi_deg, gain_db)."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ConfigError(f"observations file not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        need = {"link_id", "band_ghz", "tau_ns", "phi_deg", "gain_db"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise SceneParseError(f"header must contain {sorted(need)}", 1, path)
        obs = []
        for lineno, row in enumerate(reader, start=2):
            try:
                obs.append(
                    DirectPathObservation.from_measurement(
                        row["link_id"], float(row["band_ghz"]) * 1e9, float(row["tau_ns"]), float(row["phi_deg"]), float(row["gain_db"])
                    )
                )
            except (TypeError, ValueError) as exc:
                raise SceneParseError(f"bad row: {exc}", lineno, path) from None
    return obs


def _path_rows(lid, band, paths):
    for k, p in enumerate(paths):
        inter = ";".join(f"{i.kind.value}:{i.object_id}" for i in p.interactions)
        yield (lid, band / 1e9, k, p.n_bounces, p.delay_ns, p.aoa_deg, p.geometric_length, p.gain_db, inter)


def _path_json(lid, band, k, p):
    return {
        "link_id": lid,
        "band_ghz": band / 1e9,
        "index": k,
        "delay_ns": p.delay_ns,
        "aoa_deg": p.aoa_deg,
        "length_m": p.geometric_length,
        "gain_db": p.gain_db,
        "vertices": [list(v) for v in p.vertices],
        "interactions": [
            {
                "kind": i.kind.value,
                "object_id": i.object_id,
                "object_class": i.object_class.value,
                "point": list(i.point),
                "incidence_deg": math.degrees(i.incidence_angle),
                "q": i.fresnel_scale_q,
                "length_m": i.penetration_length_m,
                "from_front": i.from_front,
            }
            for i in p.interactions
        ],
    }


def _simulate_all(scene, rc):
    model = PathGainModel.from_scene(scene)
    for variant in rc.model_variants:
        for band in rc.bands:
            yield variant, band, simulate(scene, band, variant, rc.max_bounces, rc.workers, model)


def cmd_trace(args) -> tuple[Outputs, list]:
    scene, rc = _load(args)
    out = Outputs(args.out_dir)
    header = ("link_id", "band_ghz", "path_index", "n_bounces", "delay_ns", "aoa_deg", "length_m", "gain_db", "interactions")
    for variant, band, results in _simulate_all(scene, rc):
        stem = f"paths_{variant.value}_{_band_label(band)}ghz"
        out.csv(stem + ".csv", header, (row for lid, paths in results for row in _path_rows(lid, band, paths)))
        out.jsonl(stem + ".jsonl", (_path_json(lid, band, k, p) for lid, paths in results for k, p in enumerate(paths)))
    return out, [rc.scene_path, args.config]


def _stack_for_curves(name: str, cfg, film_nm):
    if name == "empty":
        return LayerStack((), StackRole.WINDOW_TRIPLE)
    try:
        role = StackRole(name)
    except ValueError:
        raise ConfigError(f"unknown stack {name!r}") from None
    stacks = dict(cfg.stacks)
    if role not in stacks:
        raise ConfigError(f"no stack configured for {name}")
    films = FilmParameters(cfg.film_thickness_m[StackRole.WINDOW_TRIPLE], cfg.film_thickness_m[StackRole.WINDOW_DOUBLE])
    if film_nm is not None:
        films = FilmParameters.from_nm(film_nm, film_nm)
    return apply_films(stacks, films)[role]


def cmd_curves(args) -> tuple[Outputs, list]:
    cfg = load_config(_setting(args, "config", {}, None, str))
    bands = _list_setting(args, "band", dict(cfg.run), cfg.bands, parse_band)
    cfg.materials.check_complete(bands)
    if not args.angle_step > 0 or not 0 <= args.angle_max < 90:
        raise DomainError("need angle_step > 0 and 0 <= angle_max < 90")
    stack = _stack_for_curves(args.stack, cfg, args.film_nm)
    n = int(math.floor(args.angle_max / args.angle_step + 1e-9)) + 1
    angles = np.array([round(k * args.angle_step, 12) for k in range(n)])
    curves = {f: loss_curve(stack, angles, f, cfg.materials) for f in bands}
    out = Outputs(args.out_dir)
    labels = _curve_labels(bands)
    out.csv(
        "curves.csv",
        ["angle_deg"] + [f"loss_db_{l}" for l in labels],
        ([float(a)] + [float(curves[f]["avg"][k]) for f in bands] for k, a in enumerate(angles)),
    )
    out.csv(
        "curves_polarization.csv",
        ["angle_deg"] + [f"loss_db_{l}_{p.lower()}" for l in labels for p in ("TE", "TM")],
        ([float(a)] + [float(curves[f][p][k]) for f in bands for p in ("TE", "TM")] for k, a in enumerate(angles)),
    )
    return out, [args.config]


def _grid_from_args(args) -> CalibrationGrid:
    def rng(text, default):
        if text is None:
            return default
        try:
            a, b, c = (float(x) for x in str(text).split(":"))
        except ValueError:
            raise ConfigError(f"grid must be start:stop:step, got {text!r}") from None
        return (a, b, c)

    return CalibrationGrid.from_ranges(rng(args.film_grid, (0.0, 100.0, 1.0)), rng(args.canopy_grid, (0.0, 5.0, 0.1)))


def cmd_calibrate(args) -> tuple[Outputs, list]:
    path = _setting(args, "observations", {}, None, str)
    if path is None:
        raise ConfigError("--observations is required")
    obs = read_observations(path)
    scene, rc = _load(args)
    obs = [o for o in obs if any(math.isclose(o.band_hz, b, rel_tol=1e-9) for b in rc.bands)]
    result = calibrate(obs, scene, _grid_from_args(args))
    out = Outputs(args.out_dir)
    out.json("calibration.json", result.to_dict())
    return out, [rc.scene_path, args.config, path]


_LSP_HEADER = ("link_id", "band_ghz", "incidence_deg", "pl_db", "ds_ns", "as_deg", "model_variant")


def read_lsp_csv(path: str) -> list[LspRow]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ConfigError(f"reference file not found: {path}") from None
    rows = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(_LSP_HEADER) <= set(reader.fieldnames):
            raise SceneParseError(f"header must contain {list(_LSP_HEADER)}", 1, path)
        for lineno, r in enumerate(reader, start=2):
            try:
                rows.append(
                    LspRow(r["link_id"], float(r["band_ghz"]) * 1e9, float(r["incidence_deg"]), float(r["pl_db"]), float(r["ds_ns"]), float(r["as_deg"]), r["model_variant"])
                )
            except ValueError as exc:
                raise SceneParseError(f"bad row: {exc}", lineno, path) from None
    return rows


def _lsp_line(r: LspRow):
    return (r.link_id, r.band_hz / 1e9, r.incidence_deg, r.pl_db, r.ds_ns, r.as_deg, r.model_variant)


def cmd_lsp(args) -> tuple[Outputs, list]:
    scene, rc = _load(args)
    rows = []
    for variant, band, results in _simulate_all(scene, rc):
        rows.extend(lsp_rows(results, band, variant, rc.dynamic_range_db, rc.delay_limit_ns))
    out = Outputs(args.out_dir)
    out.csv("lsp.csv", _LSP_HEADER, (_lsp_line(r) for r in rows))
    inputs = [rc.scene_path, args.config]
    ref_path = _setting(args, "reference", {}, None, str)
    if ref_path is not None:
        ref = read_lsp_csv(ref_path)
        comparison = {}
        for variant in rc.model_variants:
            sim_v = [r for r in rows if r.model_variant == variant.value]
            ref_v = [r for r in ref if r.model_variant in (variant.value, "")] or ref
            stats = compare_lsps(sim_v, ref_v)
            comparison[variant.value] = {
                _band_label(b): {m: dict(sorted(s.items())) for m, s in sorted(per.items())} for b, per in sorted(stats.items())
            }
        out.json("comparison.json", comparison)
        inputs.append(ref_path)
    return out, inputs


def cmd_padp(args) -> tuple[Outputs, list]:
    """PADP bins per link and band, plus the refined direct-path observations."""
    scene, rc = _load(args)
    out = Outputs(args.out_dir)
    bins, obs = [], []
    for variant, band, results in _simulate_all(scene, rc):
        for lid, paths in results:
            padp = synthesize_padp(paths, rc.delay_limit_ns)
            ii, jj = np.nonzero(np.isfinite(padp.power_db))
            for i, j in zip(ii.tolist(), jj.tolist()):
                bins.append((variant.value, lid, band / 1e9, float(padp.delays_ns[i]), float(padp.azimuths_deg[j]), float(padp.power_db[i, j])))
            if variant is rc.model_variants[0]:
                try:
                    obs.append(observe_direct_path(paths, band, lid))
                except DirectPathNotFound:
                    log.warning("link %s at %s GHz: direct path not found", lid, _band_label(band))
    out.csv("padp.csv", ("model_variant", "link_id", "band_ghz", "delay_ns", "azimuth_deg", "power_db"), bins)
    _write_observations(out, "observations.csv", obs)
    return out, [rc.scene_path, args.config]


def cmd_sensitivity(args) -> tuple[Outputs, list]:
    scene, rc = _load(args)
    links = [l for l in rc.links if args.link is None or l.link_id in args.link]
    if not links:
        raise ConfigError("no links selected")
    cfg = scene.config
    params = CalibrationParams(
        cfg.film_thickness_m[StackRole.WINDOW_TRIPLE] * 1e9,
        cfg.film_thickness_m[StackRole.WINDOW_DOUBLE] * 1e9,
        dict(cfg.canopy_loss_db_per_m),
    )
    reports = []
    for band in rc.bands:
        for link in links:
            r = jitter_sensitivity(link, scene, band, params, args.box, args.grid_n, rc.max_bounces)
            reports.append(r.to_dict())
    out = Outputs(args.out_dir)
    out.json("sensitivity.json", reports)
    return out, [rc.scene_path, args.config]


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scene", help="point-cloud scene file")
    common.add_argument("--config", help="YAML config (materials, stacks, links, run)")
    common.add_argument("--band", action="append", help="band in GHz or Hz; repeat for several")
    common.add_argument("--variant", action="append", help="full_floor_plan, exteriors_only, no_metal_film or all")
    common.add_argument("--max-bounces", type=int, dest="max_bounces")
    common.add_argument("--dynamic-range", type=float, dest="dynamic_range", help="dB below the strongest path kept for LSPs")
    common.add_argument("--delay-limit", type=float, dest="delay_limit", help="ns")
    common.add_argument("--out-dir", dest="out_dir", default=os.environ.get(ENV_PREFIX + "OUT_DIR", "out"))
    common.add_argument("--seed", type=int)
    common.add_argument("--reference", help="reference LSP CSV for comparison")
    common.add_argument("--workers", type=int, help="parallel link workers; never changes outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="o2irt", description="Point-cloud ray-optics O2I propagation simulator.")
    p.add_argument("--version", action="version", version=f"o2irt {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write the synthetic shoebox scene and config")
    s.add_argument("--spacing", type=float, default=0.1, help="wall point spacing in m")
    s.add_argument("--links", choices=("shoebox", "survey"), default="shoebox")
    s.add_argument("--observations", action="store_true", help="also write synthetic forward-model observations")
    s.add_argument("--noise-db", type=float, default=0.0, dest="noise_db")
    s.add_argument("--triple-film-nm", type=float, default=5.0, dest="triple_film_nm")
    s.add_argument("--double-film-nm", type=float, default=40.0, dest="double_film_nm")
    s.add_argument("--canopy-4g", type=float, default=1.1, dest="canopy_4g", help="dB/m at 4.65 GHz")
    s.add_argument("--canopy-14g", type=float, default=2.1, dest="canopy_14g", help="dB/m at 14.25 GHz")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("trace", parents=[common], help="trace and score all links")
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("curves", parents=[common], help="penetration loss versus incidence angle")
    s.add_argument("--stack", default="window_triple", help="stack role or 'empty'")
    s.add_argument("--film-nm", type=float, dest="film_nm", help="override the film thickness")
    s.add_argument("--angle-step", type=float, default=0.25, dest="angle_step")
    s.add_argument("--angle-max", type=float, default=89.0, dest="angle_max")
    s.set_defaults(func=cmd_curves)

    s = sub.add_parser("calibrate", parents=[common], help="fit film thicknesses and canopy loss")
    s.add_argument("--observations", help="observations CSV")
    s.add_argument("--film-grid", dest="film_grid", help="start:stop:step in nm")
    s.add_argument("--canopy-grid", dest="canopy_grid", help="start:stop:step in dB/m")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("lsp", parents=[common], help="path loss, delay spread and angular spread per link")
    s.set_defaults(func=cmd_lsp)

    s = sub.add_parser("padp", parents=[common], help="PADP bins and refined direct-path observations")
    s.set_defaults(func=cmd_padp)

    s = sub.add_parser("sensitivity", parents=[common], help="Tx/Rx position jitter study")
    s.add_argument("--link", action="append", help="link id; repeat for several, default all")
    s.add_argument("--box", type=float, default=0.2, help="jitter square side in m")
    s.add_argument("--grid-n", type=int, default=3, dest="grid_n", help="grid points per axis")
    s.set_defaults(func=cmd_sensitivity)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _ArgError as exc:
        print(f"o2irt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        out, inputs = args.func(args)
        out.write(args.command, args, [p for p in inputs if p])
    except ConfigError as exc:
        print(f"o2irt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SceneParseError as exc:
        print(f"o2irt: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DomainError, ValidationError, DirectPathNotFound) as exc:
        print(f"o2irt: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except O2IError as exc:
        print(f"o2irt: error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    except Exception as exc:  # noqa: BLE001
        print(f"o2irt: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
