"""Command-line runner: ``eqfree {simulate,cpi,cdr,probe,analytic,all,replay,show-config}``.

Each run writes its CSV files, the fully resolved ``config.ini`` and a
``manifest.json`` (config echo, seed, wall times, sha256 of every output,
package version).  ``eqfree replay <manifest>`` re-runs from the manifest
alone and reproduces the outputs bit for bit.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 failed acceptance check (only with ``--check``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments as ex
from .cdr import RenormalizationError
from .config import PRESETS, PRESETS_BY_COMMAND, ConfigError, RunConfig, load_config, preset_config
from .probe import ProbeError
from .sde import SimulationFault

log = logging.getLogger("eqfree")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
NUMERICAL_ERRORS = (SimulationFault, RenormalizationError, ProbeError, FloatingPointError)

STAGES = {
    "simulate": ex.run_simulate,
    "cpi": ex.run_cpi,
    "cdr": ex.run_cdr,
    "probe": ex.run_probe,
    "analytic": ex.run_analytic,
}


def version() -> str:
    try:
        return metadata.version("eqfree")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def resolve(command: str, preset: Optional[str], config_path: Optional[str], system: Optional[str],
            replicas: Optional[int], particles: Optional[int]) -> tuple[str, RunConfig]:
    """Apply defaults, preset, config file and flags in that order."""
    preset = preset or PRESETS_BY_COMMAND[command][0]
    if preset not in PRESETS_BY_COMMAND[command]:
        raise ConfigError(f"preset {preset!r} does not belong to '{command}'; "
                          f"choose from {list(PRESETS_BY_COMMAND[command])}")
    cfg = preset_config(preset)
    if config_path:
        try:
            cfg = load_config(config_path, cfg)
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
    flags = {}
    if system:
        cfg = cfg.override({"sde": {"model": system}})
    if replicas is not None:
        flags["replicas"] = replicas
    if particles is not None:
        flags["particles"] = particles
    if flags and command in ("simulate", "cpi", "cdr", "probe"):
        cfg = cfg.override({command: flags})
    try:
        cfg.sde.params()
    except ValueError as exc:
        raise ConfigError(f"invalid [sde] section: {exc}") from None
    return preset, cfg


def run_stage(command: str, preset: str, cfg: RunConfig, seed: int, out: Path,
              check: Optional[str] = None) -> tuple[int, dict]:
    """Run one stage into ``out`` and write its manifest; returns (exit code, manifest)."""
    out.mkdir(parents=True, exist_ok=True)
    kwargs = {}
    if command == "probe":
        kwargs["band"] = ex.PROBE_BANDS.get((cfg.sde.model, preset))
    config_file = out / "config.ini"
    try:
        config_file.write_text(cfg.to_ini())
        result = STAGES[command](cfg, seed, out, **kwargs)
    except BaseException:
        # the stage removes its own files; drop the config echo and an empty directory
        config_file.unlink(missing_ok=True)
        (out / "manifest.json").unlink(missing_ok=True)
        try:
            out.rmdir()
        except OSError:
            pass
        raise
    manifest = {
        "command": command,
        "preset": preset,
        "seed": seed,
        "version": version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config_file": config_file.name,
        "config": cfg.as_dict(),
        "wall_s": {command: result.wall_s},
        "summary": result.summary,
        "events": result.events,
        "checks": result.checks,
        "outputs": {p.name: sha256(p) for p in result.outputs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    code = EXIT_OK
    if check is not None:
        failed = [k for k, ok in result.checks.items() if not ok]
        for k, ok in result.checks.items():
            print(f"{'PASS' if ok else 'FAIL'} {command}:{preset}:{k}")
        code = EXIT_CHECK if failed else EXIT_OK
    return code, manifest


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _all(args) -> int:
    """Every preset of every stage into subdirectories of --out."""
    worst = EXIT_OK
    for command, presets in PRESETS_BY_COMMAND.items():
        systems = ("diffusive-x", "diffusive-xy") if command == "probe" else (None,)
        for preset in presets:
            for system in systems:
                name = preset if system is None else f"{preset}-{system}"
                _, cfg = resolve(command, preset, args.config, system, args.replicas, args.particles)
                log.info("running %s %s", command, name)
                code, manifest = run_stage(command, preset, cfg, args.seed, Path(args.out) / command / name,
                                           args.check)
                print(f"{command} {name}: {json.dumps(manifest['summary'], default=_json_default)}")
                worst = max(worst, code)
    return worst


def _replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    cfg = RunConfig().override(manifest["config"])
    out = Path(args.out)
    code, new = run_stage(manifest["command"], manifest["preset"], cfg, int(manifest["seed"]), out)
    same = all(new["outputs"].get(k) == v for k, v in manifest["outputs"].items())
    print(f"{'identical' if same else 'DIFFERENT'}: {len(manifest['outputs'])} output files")
    return code if same else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eqfree", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "all"):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every preset")
        p.add_argument("--config", help="INI file overriding the preset")
        p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
        p.add_argument("--out", default=f"runs/{name}", help="output directory")
        p.add_argument("--replicas", type=int, help="override the replica count of the stage")
        p.add_argument("--particles", type=int, help="override the particle count of the stage")
        if name != "all":
            p.add_argument("--preset", choices=PRESETS_BY_COMMAND[name],
                           help=f"default {PRESETS_BY_COMMAND[name][0]}")
        p.add_argument("--system", choices=("diffusive-x", "diffusive-xy"), help="micro model")
        p.add_argument("--check", nargs="?", const="all", metavar="WHAT",
                       help="exit 3 unless the stage's acceptance checks pass")
    r = sub.add_parser("replay", help="re-run from a manifest and compare output hashes")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    s = sub.add_parser("show-config", help="print the resolved configuration")
    s.add_argument("--preset", default="sim1", choices=sorted(PRESETS))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "show-config":
            print(preset_config(args.preset).to_ini(), end="")
            return EXIT_OK
        if args.command == "replay":
            return _replay(args)
        if args.command == "all":
            return _all(args)
        preset, cfg = resolve(args.command, args.preset, args.config, args.system,
                              args.replicas, args.particles)
        code, manifest = run_stage(args.command, preset, cfg, args.seed, Path(args.out), args.check)
        print(json.dumps(manifest["summary"], default=_json_default))
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # invalid parameter combinations surface from the dataclass validators
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
