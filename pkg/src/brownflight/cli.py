"""Command-line front end.

Subcommands: decompose | simulate | analyze | verify | oracle.
Exit codes: 0 success, 1 scientific check failed, 2 usage or
configuration error, 3 internal error.

Every output embeds the full run configuration and a format version;
rerunning a command with the same config reproduces its outputs byte
for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, whitney
from .config import FORMAT_VERSION, SimConfig, load_config
from .errors import ConfigurationError, DecompositionError, FitWindowError
from .flight import read_records_jsonl, run_campaign, write_records_jsonl
from .geometry import make_domain, r_omega
from .oracles import cube_survival, interval_survival_eigen, interval_survival_reflection, IntervalSurvivalQuery

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

PRESETS: dict[str, dict] = {
    # epsilon = 2^-5 would leave the default fit window under one decade
    # on the unit square, and koch generations below 6 put the layer in
    # the polygonal (sub-cutoff) regime at the epsilon these presets need
    "square-quick": {
        "domain": {"type": "square", "side": 1.0},
        "epsilon": 2.0**-6,
        "min_generation": -9,
        "n_flights": 20000,
        "master_seed": 20260808,
    },
    "square-full": {
        "domain": {"type": "square", "side": 1.0},
        "epsilon": 2.0**-6,
        "min_generation": -9,
        "n_flights": 100000,
        "master_seed": 20260808,
    },
    "koch-quick": {
        "domain": {"type": "koch_snowflake", "generation": 6, "side": 1.0},
        "epsilon": 2.0**-7,
        "min_generation": -10,
        "n_flights": 20000,
        "master_seed": 20260808,
    },
    "koch-full": {
        "domain": {"type": "koch_snowflake", "generation": 6, "side": 1.0},
        "epsilon": 2.0**-7,
        "min_generation": -10,
        "n_flights": 200000,
        "master_seed": 20260808,
    },
}


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _csv_header(config: SimConfig) -> list[str]:
    return [f"format_version={FORMAT_VERSION}", f"config={config.to_json()}"]


def _build(config: SimConfig):
    domain = make_domain(config.domain)
    decomposition = whitney.decompose(domain, config.min_generation)
    return domain, decomposition


def cmd_decompose(config: SimConfig) -> int:
    domain, dec = _build(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "cubes.csv", "w") as fh:
        whitney.write_cube_csv(dec, domain, fh, header_lines=_csv_header(config))

    counts = whitney.layer_counts(dec)
    lines = [f"# {h}" for h in _csv_header(config)] + ["generation,count"]
    lines += [f"{k},{counts[k]}" for k in sorted(counts)]
    _write_text(out / "layer_counts.csv", "\n".join(lines) + "\n")

    hyp = whitney.check_self_similarity_hypothesis(dec, domain)
    payload = {"format_version": FORMAT_VERSION, "config": config.to_dict(),
               "hypothesis": hyp.to_dict()}
    _write_text(out / "hypothesis.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")

    from .plots import save_layer_counts_figure

    save_layer_counts_figure(out / "layer_counts.png", counts, hyp.fitted_dimension,
                             config=config.to_dict())
    print(f"decompose: {dec.n_cubes} cubes over generations {dec.generations}; "
          f"layer-count fit d = {hyp.fitted_dimension:.4f} (spread {hyp.spread:.2f})")
    return EXIT_OK


def cmd_simulate(config: SimConfig) -> int:
    domain, dec = _build(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = run_campaign(domain, dec, config.epsilon, config.step_policy(),
                           config.n_flights, config.master_seed, workers=config.workers)
    with open(out / "flights.jsonl", "w") as fh:
        write_records_jsonl(fh, records, header={"config": config.to_dict()})
    d = domain.dimension
    lines = [f"# {h}" for h in _csv_header(config)]
    lines.append("flight_id," + ",".join(f"start_{i}" for i in range(d))
                 + ",start_generation,tau,displacement,censored")
    for r in records:
        gen = "" if r.start_cube is None else str(r.start_cube.generation)
        lines.append(f"{r.flight_id}," + ",".join(repr(float(v)) for v in r.start)
                     + f",{gen},{r.tau!r},{r.displacement!r},{int(r.censored)}")
    _write_text(out / "flights_summary.csv", "\n".join(lines) + "\n")
    n_cens = sum(r.censored for r in records)
    print(f"simulate: {len(records)} flights written ({n_cens} censored)")
    return EXIT_OK


def _analyze(config: SimConfig, records):
    domain, dec = _build(config)
    r_om = r_omega(domain, dec)
    curve = analysis.empirical_survival(records, epsilon=config.epsilon)
    windows = analysis.nested_windows(config.epsilon, r_om)
    fits = [analysis.fit_exponent(curve, w, seed=config.master_seed) for w in windows]
    # primary length window spans the full validity range of the length
    # law; on prefractals anything narrower than one lacunarity period
    # (factor 3) measures oscillation phase, not the exponent
    window_r = (4.0 * config.epsilon, r_om)
    beta = analysis.fit_length_exponent(records, config.epsilon, window_r,
                                        seed=config.master_seed)
    beta_narrow = analysis.fit_length_exponent(
        records, config.epsilon, (4.0 * config.epsilon, r_om / 4.0),
        seed=config.master_seed)
    dim = analysis.whitney_dimension(whitney.layer_counts(dec))
    hyp = whitney.check_self_similarity_hypothesis(dec, domain)
    report = analysis.theorem_report(
        domain, curve, fits, dim,
        decomposition=dec,
        r_omega_value=r_om,
        beta_fit=beta,
        hypothesis=hyp,
        tolerance_alpha=config.fit.get("tolerance_alpha"),
        tolerance_beta=config.fit.get("tolerance_beta"),
        target_dimension=config.fit.get("target_dimension"),
    )
    return report, curve, beta, beta_narrow


def cmd_analyze(records_path: Path, config: SimConfig) -> int:
    if not records_path.exists():
        raise ConfigurationError(f"records file not found: {records_path}")
    with open(records_path) as fh:
        _, records = read_records_jsonl(fh)
    report, curve, beta, beta_narrow = _analyze(config, records)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = [f"# {h}" for h in _csv_header(config)] + ["t,survival,stderr"]
    for t, s, e in zip(curve.grid, curve.survival, curve.stderr()):
        lines.append(f"{t!r},{s!r},{e!r}")
    _write_text(out / "survival.csv", "\n".join(lines) + "\n")

    fits_payload = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "alpha_fits": report.alpha_fits,
        "beta_fit": report.beta_fit,
        "beta_fit_narrow_window": beta_narrow.to_dict(),
        "dimension": report.measured_dimension,
    }
    _write_text(out / "fits.json", json.dumps(fits_payload, sort_keys=True, indent=2) + "\n")

    payload = {"format_version": FORMAT_VERSION, "config": config.to_dict(),
               "report": report.to_dict()}
    _write_text(out / "report.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    txt = "".join(f"# {h}\n" for h in _csv_header(config)) + report.to_text()
    _write_text(out / "report.txt", txt)

    from .plots import save_displacement_figure, save_survival_figure

    save_survival_figure(out / "survival.png", curve, report.alpha_fits,
                         report.target_alpha, diagnostic=report.diagnostic,
                         config=config.to_dict())
    save_displacement_figure(out / "displacement.png", records, config.epsilon,
                             report.beta_fit, report.target_beta, config=config.to_dict())

    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _oracle_self_test() -> None:
    xs = np.linspace(0.1, 0.9, 9)
    ts = np.geomspace(0.01, 4.0, 12)
    worst = 0.0
    for x in xs:
        for t in ts:
            q = IntervalSurvivalQuery(x=float(x), a=1.0, t=float(t))
            worst = max(worst, abs(interval_survival_reflection(q) - interval_survival_eigen(q, n_terms=256)))
    if worst > 1e-10:
        raise AssertionError(f"dual-series oracle mismatch: {worst:g}")


def cmd_verify(config: SimConfig) -> int:
    _oracle_self_test()
    print("oracle self-test: dual series agree to 1e-10")
    rc = cmd_decompose(config)
    if rc != EXIT_OK:
        return rc
    rc = cmd_simulate(config)
    if rc != EXIT_OK:
        return rc
    return cmd_analyze(Path(config.output_dir) / "flights.jsonl", config)


def cmd_oracle(args) -> int:
    a = args.side
    lines = ["x,a,t,reflection,eigen,cube_survival_d%d" % args.dim]
    for x_frac in (0.1, 0.25, 0.5):
        for t in np.geomspace(args.t_min, args.t_max, args.n_t):
            q = IntervalSurvivalQuery(x=x_frac * a, a=a, t=float(t))
            refl = interval_survival_reflection(q)
            eig = interval_survival_eigen(q, n_terms=256)
            cube = cube_survival(a, args.dim, float(t))
            lines.append(f"{x_frac*a!r},{a!r},{t!r},{refl!r},{eig!r},{cube!r}")
    text = "\n".join(lines) + "\n"
    if args.output:
        _write_text(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _config_from_args(args) -> SimConfig:
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigurationError(
                f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        base = dict(PRESETS[args.preset])
        cfg = SimConfig.from_dict(base)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        raise ConfigurationError("either --config or --preset is required")
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "output_dir", None) is not None:
        cfg.output_dir = args.output_dir
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="brownflight",
        description="Brownian flight statistics near rough domain boundaries")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=str, help="JSON config file")
        sp.add_argument("--preset", type=str, help=f"named preset: {', '.join(sorted(PRESETS))}")
        sp.add_argument("--seed", type=int, help="override master seed")
        sp.add_argument("--workers", type=int, help="override worker count")
        sp.add_argument("--output-dir", type=str, help="override output directory")

    common(sub.add_parser("decompose", help="build the Whitney decomposition and dump cubes"))
    common(sub.add_parser("simulate", help="run the flight campaign, write flights.jsonl"))
    sp = sub.add_parser("analyze", help="fit tail exponents and write the report")
    common(sp)
    sp.add_argument("--records", type=str, help="path to flights.jsonl (default: <output_dir>/flights.jsonl)")
    common(sub.add_parser("verify", help="decompose + simulate + analyze + oracle self-tests"))
    sp = sub.add_parser("oracle", help="print survival tables as CSV")
    sp.add_argument("--side", type=float, default=1.0)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--t-min", type=float, default=0.01)
    sp.add_argument("--t-max", type=float, default=4.0)
    sp.add_argument("--n-t", type=int, default=25)
    sp.add_argument("--output", type=str, default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle":
            return cmd_oracle(args)
        cfg = _config_from_args(args)
        if args.command == "decompose":
            return cmd_decompose(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "analyze":
            records = Path(args.records) if args.records else Path(cfg.output_dir) / "flights.jsonl"
            return cmd_analyze(records, cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except (ConfigurationError, DecompositionError, FitWindowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
