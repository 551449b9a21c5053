"""Command-line interface: ``holoimg {dof,simulate,sweep,ris,presets}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import harness
from .channel import dof_estimate
from .config import ConfigError, build_scenarios, image_spec, preset_names, resolve_config
from .harness import CSV_COLUMNS, Mode, run_trials, sweep_truncation
from .ris import RISKind, cascade_gain_bound, frobenius_gain

log = logging.getLogger("holoimg")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
VALID_MODES = [m.value for m in Mode]


class UsageError(Exception):
    pass


def _modes(text: str) -> list[Mode]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise UsageError(f"empty mode list; valid modes: {', '.join(VALID_MODES)}")
    try:
        return [Mode(n) for n in names]
    except ValueError:
        bad = next(n for n in names if n not in VALID_MODES)
        raise UsageError(f"invalid mode {bad!r}; valid modes: {', '.join(VALID_MODES)}") from None


def _trunc_range(text: str) -> list[int]:
    """``a:b[:step]``, inclusive of ``b``."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise UsageError(f"bad truncation range {text!r}; expected a:b or a:b:step") from None
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3 or parts[2] < 1 or parts[0] > parts[1]:
        raise UsageError(f"bad truncation range {text!r}; expected a:b or a:b:step with a <= b, step >= 1")
    a, b, step = parts
    return list(range(a, b + 1, step))


def write_csv(rows, out: str | None) -> None:
    """Write metric rows; files are replaced atomically via a temp file in the same directory."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cmd_dof(args) -> int:
    for name in ("l_m", "s_m", "d_m", "wavelength_m"):
        if not getattr(args, name) > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    value = dof_estimate(args.l_m, args.s_m, args.d_m, args.wavelength_m)
    print(f"dof {value:.6f} rounded {round(value)}")
    return EXIT_OK


def _load(args, **overrides):
    cfg = resolve_config(args.config)
    scenarios = build_scenarios(cfg, **overrides)
    trials = args.trials if args.trials is not None else cfg.get("experiment", "trials", 100)
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    return cfg, scenarios, trials


def cmd_simulate(args) -> int:
    modes = _modes(args.mode) if args.mode else None
    cfg, scenarios, trials = _load(args, trunc=args.trunc, seed=args.seed)
    image = image_spec(cfg)
    rows = []
    for s in scenarios:
        for mode in modes or [s.mode]:
            rows.append(run_trials(replace(s, mode=mode), image, trials, timing=args.timing))
    write_csv(rows, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    modes = _modes(args.modes)
    R_list = _trunc_range(args.trunc_range)
    cfg, scenarios, trials = _load(args, seed=args.seed)
    image = image_spec(cfg)
    rows = []
    for s in scenarios:
        rows.extend(sweep_truncation(s, image, R_list, trials, modes, timing=args.timing))
    write_csv(rows, args.out)
    return EXIT_OK


def cmd_ris(args) -> int:
    cfg = resolve_config(args.config)
    if "ris" not in cfg.sections:
        raise UsageError(f"{cfg.source}: missing section [ris]")
    _, scenarios, trials = _load(args, trunc=args.trunc, seed=args.seed, ris_mode=args.ris_mode, eta=args.eta)
    image = image_spec(cfg)
    rows = []
    for s in scenarios:
        system = harness.build_system(s)
        g1 = frobenius_gain(system.links["G1"])
        g2 = frobenius_gain(system.links["G2"])
        gc = frobenius_gain(system.G_T)
        bound = cascade_gain_bound(system.links["G1"], system.links["G2"])
        refl = system.reflection
        err = system.reflection.unitarity_error()
        print(f"# {s.scenario_id} ris_mode={s.ris_mode.value} diagonal={refl.is_diagonal} "
              f"unitarity_error={err:.3e}", file=sys.stderr)
        print(f"# gain G1={g1:.17g} G2={g2:.17g} cascade={gc:.17g} bound={bound:.17g} "
              f"ratio={gc / bound:.17g}", file=sys.stderr)
        if s.ris_mode is RISKind.MATCHED and abs(gc - bound) > 1e-9 * bound:
            log.error("matched cascade gain deviates from the bound")
            return EXIT_RUNTIME
        modes = _modes(args.modes) if args.modes else [s.mode]
        if args.trunc_range:
            rows.extend(sweep_truncation(s, image, _trunc_range(args.trunc_range), trials, modes,
                                         timing=args.timing))
        else:
            for mode in modes:
                rows.append(run_trials(replace(s, mode=mode), image, trials, system, timing=args.timing))
    write_csv(rows, args.out)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holoimg", description="Near-field holographic imaging simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dof", help="channel degrees-of-freedom estimate")
    d.add_argument("--l-m", type=float, required=True, help="device side (m)")
    d.add_argument("--s-m", type=float, required=True, help="ROI side (m)")
    d.add_argument("--d-m", type=float, required=True, help="center distance (m)")
    d.add_argument("--wavelength-m", type=float, required=True)
    d.set_defaults(func=cmd_dof)

    def common(sp):
        sp.add_argument("--config", required=True, help="config file or preset name")
        sp.add_argument("--trials", type=int, help="Monte Carlo trials (default from config)")
        sp.add_argument("--seed", type=int, help="override [experiment] seed")
        sp.add_argument("--out", help="CSV output path (stdout if omitted)")
        sp.add_argument("--timing", action="store_true", help="fill wall_ms (breaks byte reproducibility)")

    s = sub.add_parser("simulate", help="one CSV row per mode")
    common(s)
    s.add_argument("--mode", help=f"comma-separated modes: {', '.join(VALID_MODES)}")
    s.add_argument("--trunc", type=int, help="truncation index R")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="rows for every (R, mode)")
    common(w)
    w.add_argument("--trunc-range", required=True, help="a:b[:step], inclusive")
    w.add_argument("--modes", required=True, help="comma-separated modes")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("ris", help="RIS-aided NLOS run with a channel gain report")
    common(r)
    r.add_argument("--ris-mode", choices=[k.value for k in RISKind])
    r.add_argument("--eta", type=complex, help="PEC reflection coefficient")
    r.add_argument("--trunc", type=int)
    r.add_argument("--trunc-range", help="sweep a:b[:step] instead of a single R")
    r.add_argument("--modes", help="comma-separated modes")
    r.set_defaults(func=cmd_ris)

    ls = sub.add_parser("presets", help="list bundled presets")
    ls.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"holoimg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"holoimg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
