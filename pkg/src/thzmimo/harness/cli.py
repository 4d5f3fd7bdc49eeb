"""Command-line entry point: ``thzmimo <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..absorption import MediumConditions, k_abs, load_line_catalog, load_sample_catalog
from ..errors import CatalogError, ConfigError, DomainError, NumericalError
from .config import ExperimentConfig, load_config, preset
from .sweeps import run_adc_ablation, run_ase_sweep, run_ber_sweep, run_nmse_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SWEEPS = {
    "nmse": run_nmse_sweep,
    "ase": run_ase_sweep,
    "ber": run_ber_sweep,
    "adc": run_adc_ablation,
}

log = logging.getLogger("thzmimo")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="TOML or JSON experiment block")
    p.add_argument("--preset", choices=("system1", "system2"), help="system dimensions preset")
    p.add_argument("--seed", type=int, help="64-bit master seed")
    p.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    p.add_argument("--workers", type=int, help="trial-level worker processes")


def build_parser():
    parser = _Parser(prog="thzmimo", description="THz hybrid MIMO Monte Carlo sweeps")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in SWEEPS.items():
        summary = (fn.__doc__ or f"{name} sweep").strip().splitlines()[0]
        _common(sub.add_parser(name, help=summary))
    v = sub.add_parser("validate-config", help="parse and validate a config, print it")
    v.add_argument("--config", type=Path, required=True)
    v.add_argument("--preset", choices=("system1", "system2"))
    a = sub.add_parser("absorption-sweep", help="tabulate k_abs over a frequency grid")
    a.add_argument("--fmin", type=float, default=0.1e12, help="start frequency in Hz")
    a.add_argument("--fmax", type=float, default=10e12, help="stop frequency in Hz")
    a.add_argument("--points", type=int, default=100)
    a.add_argument("--catalog", type=Path, help="line catalog CSV (default: bundled sample)")
    a.add_argument("--pressure", type=float, default=1.0, help="atm")
    a.add_argument("--temperature", type=float, default=296.0, help="K")
    a.add_argument("--out", type=Path)
    return parser


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        "seed": getattr(args, "seed", None),
        "n_trials": getattr(args, "trials", None),
        "workers": getattr(args, "workers", None),
    }
    if args.preset:
        overrides["system"] = preset(args.preset)
    return cfg.with_overrides(**overrides)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _absorption_sweep(args):
    if not (0 < args.fmin <= args.fmax) or args.points < 1:
        raise ConfigError("need 0 < fmin <= fmax and points >= 1")
    catalog = load_line_catalog(args.catalog) if args.catalog else load_sample_catalog()
    cond = MediumConditions(pressure=args.pressure, temperature=args.temperature)
    freqs = np.linspace(args.fmin, args.fmax, args.points)
    values = k_abs(catalog, cond, freqs)
    lines = ["f_hz,k_abs_per_m"] + [f"{f!r},{k!r}" for f, k in zip(freqs.tolist(), values.tolist())]
    _emit("\n".join(lines) + "\n", args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "absorption-sweep":
            _absorption_sweep(args)
        elif args.command == "validate-config":
            cfg = _resolve_config(args)
            print(f"ok: {cfg.name} ({cfg.n_trials} trials, SNR grid {list(cfg.snr_grid)})")
        else:
            cfg = _resolve_config(args)
            log.info("running %s sweep: %d trials, seed %d", args.command, cfg.n_trials, cfg.seed)
            table = SWEEPS[args.command](cfg)
            _emit(table.to_csv(), args.out)
            if args.out is not None:
                args.out.with_suffix(args.out.suffix + ".meta.json").write_text(
                    table.metadata_json() + "\n")
    except (ConfigError, CatalogError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
