"""Command-line driver.

Every command writes into ``--out`` and leaves a ``manifest.json`` recording
the resolved configuration, the seed and SHA-256 digests of its inputs.

Config files are TOML with one table per command (``[simulate]``,
``[prepare]``, ``[attack]``, ``[evaluate]``, ``[bbox]``) and an optional
``[spec]`` table overriding :class:`~sarreflect.imaging.SarSystemSpec`
fields. Command-line flags take precedence over the file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .attack import AttackParams, ConstraintViolation, adversarial_fn
from .bbox import (
    BBoxConfig,
    EmptyGroup,
    NoForeground,
    composite_image,
    localize_box,
    reference_rect,
    write_boxes_csv,
)
from .classify import (
    FoolingReport,
    SubprocessModel,
    fooling_rate,
    train_reference,
    write_matrix_csv,
)
from .data import (
    MalformedHeader,
    TruncatedData,
    UnknownClass,
    build_synthetic_dataset,
    default_targets,
    extended_target,
    load_dataset,
    load_mstar_class,
    save_dataset,
)
from .experiment import calibrated_spec, optimize_attack
from .geometry import AspectAngles
from .imaging import ComplexImage, OutOfSwath, SarSystemSpec, image_perturbation, write_cimg, \
    write_png
from .optimize import DEConfig, ObjectiveFailure

log = logging.getLogger("sarreflect")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration and manifest


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def resolve(args: argparse.Namespace, config: dict, defaults: dict) -> dict:
    """Merge defaults, the command's config table and explicit flags (in that order)."""
    table = config.get(args.command, {})
    unknown = set(table) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown [{args.command}] keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(table)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def spec_from_config(config: dict) -> SarSystemSpec:
    table = dict(config.get("spec", {}))
    if "ground_sample_distance" in table:
        table["ground_sample_distance"] = tuple(table["ground_sample_distance"])
    try:
        return SarSystemSpec(**table)
    except TypeError as exc:
        raise ConfigError(f"bad [spec] table: {exc}") from exc


def digest(path: Path) -> str:
    """SHA-256 of a file, or of a directory's relative paths and file contents."""
    h = hashlib.sha256()
    path = Path(path)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for f in files:
        if path.is_dir():
            h.update(str(f.relative_to(path)).encode() + b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()


def write_manifest(out: Path, command: str, resolved: dict, seed: int, inputs: Sequence) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": resolved,
        "inputs": {str(p): digest(Path(p)) for p in inputs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                  default=str) + "\n")


def _need(resolved: dict, *keys):
    for k in keys:
        if resolved.get(k) in (None, ""):
            raise ConfigError(f"missing required setting {k!r}")


def _dataset(path) -> "DatasetIndex":  # noqa: F821
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"dataset directory not found: {p}")
    index = load_dataset(p)
    if len(index) == 0:
        raise DataError(f"dataset {p} is empty")
    return index


def _split(path, name):
    p = Path(path)
    return _dataset(p / name) if (p / name).is_dir() else _dataset(p)


# ---------------------------------------------------------------------------
# commands


def _azimuths(resolved) -> list:
    grid = resolved.get("azimuth_grid")
    if grid:
        lo, hi, step = (float(v) for v in str(grid).split(":"))
        if step <= 0:
            raise ConfigError("azimuth_grid step must be positive")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [lo + i * step for i in range(n)]
    az = resolved.get("azimuth")
    if az is None:
        raise ConfigError("simulate needs azimuth or azimuth_grid")
    return [float(a) for a in (az if isinstance(az, (list, tuple)) else [az])]


def cmd_simulate(args, config, out: Path) -> None:
    resolved = resolve(args, config, {"params": None, "incidence": 75.0, "azimuth": None,
                                      "azimuth_grid": None, "tx_amplitude": None})
    spec = spec_from_config(config)
    if resolved["tx_amplitude"] is not None:
        spec = spec.replace(tx_amplitude=float(resolved["tx_amplitude"]))
    reflectors, inputs = [], []
    if resolved["params"]:
        path = Path(resolved["params"])
        if not path.is_file():
            raise DataError(f"params file not found: {path}")
        reflectors = AttackParams.from_text(path.read_text()).reflectors()
        inputs.append(path)
    for az in _azimuths(resolved):
        aspect = AspectAngles.from_degrees(float(resolved["incidence"]), az % 360.0)
        img = image_perturbation(reflectors, aspect, spec, workers=args.jobs)
        stem = f"perturbation_{float(resolved['incidence']):g}_{az:07.2f}"
        write_png(img.magnitude, out / f"{stem}.png")
        write_cimg(img, out / f"{stem}.cimg")
    write_manifest(out, "simulate", resolved, args.seed, inputs)


def cmd_prepare(args, config, out: Path) -> None:
    resolved = resolve(args, config, {"kind": "synthetic", "targets": "sparse",
                                      "clutter": 0.02, "incidence": 75.0, "azimuth_step": 1.0,
                                      "mstar_root": None, "classes": None})
    spec = spec_from_config(config)
    inputs = []
    if resolved["kind"] == "synthetic":
        step = float(resolved["azimuth_step"])
        if resolved["targets"] == "sparse":
            targets = default_targets(float(resolved["clutter"]))
        elif resolved["targets"] == "extended":
            targets = [extended_target(n, l, w, clutter_level=float(resolved["clutter"]), seed=i)
                       for i, (n, l, w) in enumerate([("long", 7.0, 3.0), ("wide", 5.0, 3.5)])]
        else:
            raise ConfigError(f"unknown synthetic target set {resolved['targets']!r}")
        inc = float(resolved["incidence"])
        save_dataset(build_synthetic_dataset(targets, spec, inc, step, seed=args.seed),
                     out / "train")
        save_dataset(build_synthetic_dataset(targets, spec, inc, step, 0.5 * step,
                                             seed=args.seed + 1), out / "test")
    elif resolved["kind"] == "mstar":
        _need(resolved, "mstar_root", "classes")
        from .data import DatasetIndex
        classes = resolved["classes"]
        classes = classes.split(",") if isinstance(classes, str) else list(classes)
        samples = []
        for c in classes:
            samples += load_mstar_class(c.strip(), resolved["mstar_root"])
        if not samples:
            raise DataError("no MSTAR chips found")
        save_dataset(DatasetIndex(samples), out / "train")
        inputs.append(Path(resolved["mstar_root"]))
    else:
        raise ConfigError(f"unknown dataset kind {resolved['kind']!r}")
    write_manifest(out, "prepare", resolved, args.seed, inputs)


def _reference_model(train, bin_width: float):
    return train_reference(train.samples, bin_width=float(bin_width))


def _model(resolved, train, key="model"):
    spec = str(resolved[key])
    if spec.startswith("reference"):
        _, _, width = spec.partition(":")
        return _reference_model(train, float(width) if width else 10.0)
    if spec.startswith("cmd:"):
        return SubprocessModel(spec[4:].split(), train.classes)
    raise ConfigError(f"unknown model {spec!r} (use reference[:bin_width] or cmd:<command>)")


def cmd_attack(args, config, out: Path) -> None:
    resolved = resolve(args, config, {
        "dataset": None, "class_label": None, "reflectors": 4, "model": "reference",
        "population_size": 40, "max_iterations": 60, "mutation_probability": 0.8,
        "recombination_probability": 0.9, "spacing": 10.0, "tolerance": 2.0})
    _need(resolved, "dataset", "class_label")
    spec0 = spec_from_config(config)
    train = _split(resolved["dataset"], "train")
    if resolved["class_label"] not in train.classes:
        raise DataError(f"class {resolved['class_label']!r} not in dataset")
    model = _model(resolved, train)
    spec = calibrated_spec(train, spec0)
    de = DEConfig(population_size=int(resolved["population_size"]),
                  max_iterations=int(resolved["max_iterations"]),
                  mutation_probability=float(resolved["mutation_probability"]),
                  recombination_probability=float(resolved["recombination_probability"]),
                  seed=args.seed)
    result = optimize_attack(model, train, resolved["class_label"], spec,
                             int(resolved["reflectors"]), de=de, spacing=float(resolved["spacing"]),
                             tolerance=float(resolved["tolerance"]), workers=args.jobs)
    (out / "params.txt").write_text(result.params.to_text())
    result.trace.to_csv(out / "trace.csv")
    subset = [s for s in train.samples if s.source_id in set(result.training_ids)]
    report = FoolingReport({result.class_label: fooling_rate(
        model, result.attack_fn(spec), subset, result.class_label)})
    report.to_csv(out / "fooling_train.csv")
    resolved["tx_amplitude"] = spec.tx_amplitude
    write_manifest(out, "attack", resolved, args.seed, [Path(resolved["dataset"])])


def _identity(sample):
    return sample.chip


def cmd_evaluate(args, config, out: Path) -> None:
    resolved = resolve(args, config, {"dataset": None, "params": None, "models": "reference",
                                      "surrogate": "reference"})
    _need(resolved, "dataset", "params")
    spec0 = spec_from_config(config)
    train = _split(resolved["dataset"], "train")
    test = _split(resolved["dataset"], "test")
    spec = calibrated_spec(train, spec0)
    items = resolved["params"]
    items = items if isinstance(items, (list, tuple)) else [items]
    attacks, inputs = {}, [Path(resolved["dataset"])]
    for item in items:
        label, sep, path = str(item).partition("=")
        if not sep:
            raise ConfigError(f"params entries look like CLASS=FILE or CLASS=none, got {item!r}")
        if label not in test.classes:
            raise DataError(f"class {label!r} not in dataset")
        if path == "none":
            attacks[label] = _identity
            continue
        p = Path(path)
        if not p.is_file():
            raise DataError(f"params file not found: {p}")
        inputs.append(p)
        attacks[label] = adversarial_fn(AttackParams.from_text(p.read_text()).reflectors(), spec)
    names = resolved["models"]
    names = names.split(",") if isinstance(names, str) else list(names)
    models = [_model({"model": n.strip()}, train) for n in names]
    row = np.zeros((1, len(models)))
    for j, (name, m) in enumerate(zip(names, models)):
        report = FoolingReport({lab: fooling_rate(m, atk, test.samples, lab)
                                for lab, atk in attacks.items()})
        suffix = "" if len(models) == 1 else f"_{j}"
        report.to_csv(out / f"fooling{suffix}.csv")
        row[0, j] = report.average_rate
    write_matrix_csv(row, [resolved["surrogate"]], [n.strip() for n in names],
                     out / "transfer.csv")
    write_manifest(out, "evaluate", resolved, args.seed, inputs)


def _overlay(chip: np.ndarray, rect, path: Path) -> None:
    from PIL import Image, ImageDraw

    from .imaging import log_magnitude_u8

    img = Image.fromarray(log_magnitude_u8(chip), mode="L").convert("RGB")
    ImageDraw.Draw(img).polygon([tuple(map(float, p)) for p in rect.corners()],
                                outline=(255, 0, 0))
    img.save(path, format="PNG", optimize=False)


def cmd_bbox(args, config, out: Path) -> None:
    resolved = resolve(args, config, {"dataset": None, "threshold": 0.7, "method": "coarse",
                                      "overlays": True})
    _need(resolved, "dataset")
    index = _split(resolved["dataset"], "train")
    cfg = BBoxConfig(threshold=float(resolved["threshold"]))
    rows = []
    (out / "overlays").mkdir(exist_ok=True)
    for c in index.classes:
        for inc in index.incidences(c):
            group = index.group(c, inc)
            ref = reference_rect(composite_image(group), cfg.threshold)
            for k, s in enumerate(group):
                box = localize_box(s.chip, s.azimuth, ref, cfg, method=resolved["method"])
                sid = s.source_id or f"{c}_{inc:g}_{k}"
                rows.append((sid, box))
                if resolved["overlays"]:
                    _overlay(s.chip, box, out / "overlays" / f"{sid}.png")
    write_boxes_csv(rows, out / "boxes.csv")
    write_manifest(out, "bbox", resolved, args.seed, [Path(resolved["dataset"])])


COMMANDS = {"simulate": cmd_simulate, "prepare": cmd_prepare, "attack": cmd_attack,
            "evaluate": cmd_evaluate, "bbox": cmd_bbox}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarreflect", description=__doc__.split("\n\n")[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker cap for library parallelism")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render reflector perturbations")
    s.add_argument("--params")
    s.add_argument("--incidence", type=float)
    s.add_argument("--azimuth", type=float, nargs="+")
    s.add_argument("--azimuth-grid", dest="azimuth_grid", help="start:stop:step in degrees")
    s.add_argument("--tx-amplitude", dest="tx_amplitude", type=float)

    s = sub.add_parser("prepare", help="build a synthetic dataset or ingest MSTAR chips")
    s.add_argument("--kind", choices=["synthetic", "mstar"])
    s.add_argument("--targets", choices=["sparse", "extended"])
    s.add_argument("--clutter", type=float)
    s.add_argument("--incidence", type=float)
    s.add_argument("--azimuth-step", dest="azimuth_step", type=float)
    s.add_argument("--mstar-root", dest="mstar_root")
    s.add_argument("--classes")

    s = sub.add_parser("attack", help="optimise a reflector layout for one class")
    s.add_argument("--dataset")
    s.add_argument("--class", dest="class_label")
    s.add_argument("--reflectors", type=int)
    s.add_argument("--model")
    s.add_argument("--population-size", dest="population_size", type=int)
    s.add_argument("--max-iterations", dest="max_iterations", type=int)
    s.add_argument("--mutation-probability", dest="mutation_probability", type=float)
    s.add_argument("--recombination-probability", dest="recombination_probability", type=float)
    s.add_argument("--spacing", type=float)
    s.add_argument("--tolerance", type=float)

    s = sub.add_parser("evaluate", help="fooling rates and transfer matrix")
    s.add_argument("--dataset")
    s.add_argument("--params", nargs="+", help="CLASS=FILE (or CLASS=none for no attack)")
    s.add_argument("--models", help="comma list of reference[:bin_width] or cmd:<command>")
    s.add_argument("--surrogate")

    s = sub.add_parser("bbox", help="estimate target boxes")
    s.add_argument("--dataset")
    s.add_argument("--threshold", type=float)
    s.add_argument("--method", choices=["exhaustive", "coarse"])
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        log.error("--jobs must be at least 1")
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        config = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, config, out)
    except (ConfigError, ConstraintViolation) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, MalformedHeader, TruncatedData, UnknownClass,
            EmptyGroup, NoForeground, OutOfSwath) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (ObjectiveFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
