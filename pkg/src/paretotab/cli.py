"""Command-line front end.

Subcommands: ``estimate`` (point estimates per year/concept/method),
``scan`` (threshold-sensitivity scan), ``shares`` (top-share curves and
implied shares), ``simulate`` (Monte Carlo calibration), ``sampleframe``
(potential-tax-unit series).  Options may come from a flat ``key=value``
config file (``--config``), with command-line flags taking precedence.

Every output file embeds a header comment with the tool version and a hash
of the effective run manifest; given the same manifest (and seed), every
command writes byte-identical outputs.

Exit codes: 0 success, 1 fatal, 2 partial failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from paretotab import __version__
from paretotab.estimators import (
    EstimateResult,
    EstimationError,
    METHODS,
    TwConfig,
    ap_estimate,
    fp_estimate,
    ml_grouped,
    select_top_groups,
    tail_scan,
    tw_estimate,
)
from paretotab.pareto import implied_share, interpolate_share, share_curve_from_tabulation
from paretotab.sampleframe import (
    DemographicSeries,
    alt_units,
    fit_joint_share_regression,
    potential_units,
    read_demographics,
)
from paretotab.simulate import SimConfig, mc_study
from paretotab.svgplot import line_chart
from paretotab.tabulation import (
    CONCEPTS,
    TabulationError,
    Tabulation,
    cumulate,
    derive_capital,
    negative_total_thresholds,
    parse_tabulation,
    validate_totals,
)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# manifest and output plumbing
# ---------------------------------------------------------------------------

def _manifest(command: str, args: argparse.Namespace, keys: list[str]) -> dict[str, str]:
    entries = {"command": command}
    for key in keys:
        value = getattr(args, key)
        if isinstance(value, (list, tuple)):
            value = ";".join(str(v) for v in value)
        entries[key] = "" if value is None else str(value)
    return entries


def _manifest_hash(manifest: dict[str, str]) -> str:
    blob = "".join(f"{k}={manifest[k]}\n" for k in sorted(manifest))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _header(manifest: dict[str, str]) -> str:
    return f"paretotab {__version__} manifest={_manifest_hash(manifest)}"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header_comment: str, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# {header_comment}\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def _write_json(path: Path, manifest: dict[str, str], payload: dict) -> None:
    doc = {
        "tool": "paretotab",
        "version": __version__,
        "manifest_hash": _manifest_hash(manifest),
        **payload,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# shared input handling
# ---------------------------------------------------------------------------

def _parse_years(text: str | None) -> set[int] | None:
    if text is None or text == "all":
        return None
    years: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            years.update(range(int(lo), int(hi) + 1))
        elif part:
            years.add(int(part))
    return years


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_concepts(text: str) -> tuple[str, ...]:
    if text == "all":
        return CONCEPTS
    concepts = tuple(c.strip() for c in text.split(",") if c.strip())
    for c in concepts:
        if c not in CONCEPTS:
            raise _UsageError(f"unknown concept {c!r}; expected one of {CONCEPTS} or 'all'")
    return concepts


def _load_tabulations(args) -> list[Tabulation]:
    """Parse inputs, derive capital where possible, filter, sort."""
    concepts = _parse_concepts(args.concept)
    years = _parse_years(args.years)
    tabs = [parse_tabulation(p) for p in args.input]
    for t in tabs:
        report = validate_totals(t)
        if not report.passed:
            raise TabulationError(
                f"{t.year} {t.concept}: published totals disagree with column sums "
                f"beyond rounding: {report.failing_columns} "
                f"(count delta {report.count_delta}, income delta {report.income_delta})"
            )
    if "capital" in concepts:
        by_year = {}
        for t in tabs:
            by_year.setdefault(t.year, {})[t.concept] = t
        derived = []
        for year in sorted(by_year):
            pair = by_year[year]
            if "agi" in pair and "wages" in pair and "capital" not in pair:
                cap = derive_capital(pair["agi"], pair["wages"])
                negatives = [t for t in negative_total_thresholds(cap) if t is not None]
                if negatives:
                    print(
                        f"note: {year} capital has negative totals at thresholds "
                        f"{negatives}", file=sys.stderr
                    )
                derived.append(cap)
        tabs.extend(derived)
    tabs = [
        t
        for t in tabs
        if t.concept in concepts and (years is None or t.year in years)
    ]
    tabs.sort(key=lambda t: (t.year, CONCEPTS.index(t.concept)))
    if not tabs:
        raise TabulationError("no tabulations left after concept/year filtering")
    return tabs


def _load_demographics(args) -> DemographicSeries | None:
    return read_demographics(args.population_csv) if args.population_csv else None


def _population(tab: Tabulation, series: DemographicSeries | None, alt: bool, fit=None) -> int:
    if series is not None:
        if alt:
            return alt_units(series, tab.year)
        return potential_units(series, tab.year, fit=fit)
    if tab.population_n is not None:
        return tab.population_n
    raise ValueError(
        f"{tab.year} {tab.concept}: no population size available; pass "
        "--population-csv or set population_n in the metadata sidecar"
    )


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _run_method(tab: Tabulation, method: str, n: int, args) -> EstimateResult:
    cfg = TwConfig(top_fraction=args.top_fraction)
    if method == "tw":
        return tw_estimate(tab, n, cfg)
    if method == "ml":
        cv = cumulate(tab, drop_bottom=True)
        # one more group than the ratio estimator: same top-fraction range
        L = select_top_groups(cv, n, args.top_fraction) + 1
        thresholds = cv.thresholds[:L]
        if any(t is None for t in thresholds):
            raise EstimationError("tabulation has no thresholds; grouped likelihood needs them")
        counts = [cv.counts[0]] + [
            cv.counts[k] - cv.counts[k - 1] for k in range(1, L)
        ]
        return ml_grouped(thresholds, counts, L)
    if method == "fp":
        cv = cumulate(tab, drop_bottom=True)
        alpha = fp_estimate(cv, n, args.fp_fraction)
        return EstimateResult("fp", alpha, None, 2, 0, None)
    if method == "ap":
        p, q = _parse_floats(args.ap_fractiles)
        curve = share_curve_from_tabulation(tab, n)
        alpha = ap_estimate(curve, p, q)
        return EstimateResult("ap", alpha, None, 2, 0, None)
    raise _UsageError(f"unknown method {method!r}")


def cmd_estimate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "estimate",
        args,
        ["input", "concept", "years", "method", "top_fraction", "fp_fraction",
         "ap_fractiles", "population_csv", "alt_population", "out", "format"],
    )
    header = _header(manifest)
    methods = METHODS if args.method == "all" else (args.method,)
    tabs = _load_tabulations(args)
    series = _load_demographics(args)
    fit = None
    if series is not None and any(t.year < 1950 for t in tabs):
        fit = fit_joint_share_regression(series)

    rows = []
    failures = 0
    for tab in tabs:
        for method in methods:
            row = {"year": tab.year, "concept": tab.concept, "method": method}
            try:
                n = _population(tab, series, args.alt_population, fit)
                res = _run_method(tab, method, n, args)
                row.update(res.to_dict())
                row["warnings"] = "; ".join(res.warnings)
            except (EstimationError, TabulationError, ValueError) as exc:
                row["error"] = str(exc)
                failures += 1
            rows.append(row)

    formats = args.format.split(",")
    columns = ["year", "concept", "method", "alpha_hat", "se", "groups_used",
               "iterations", "objective", "warnings", "error"]
    if "csv" in formats:
        _write_csv(out / "estimates.csv", header, columns, rows)
    if "json" in formats:
        _write_json(out / "estimates.json", manifest, {"estimates": rows})
    done = len(rows) - failures
    print(f"estimate: {done}/{len(rows)} results -> {out}")
    if failures == len(rows):
        return EXIT_FATAL
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------

def cmd_scan(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "scan", args,
        ["input", "concept", "years", "population_csv", "alt_population", "out", "format"],
    )
    header = _header(manifest)
    tabs = _load_tabulations(args)
    series = _load_demographics(args)
    formats = args.format.split(",")
    any_success = False
    for tab in tabs:
        n = _population(tab, series, args.alt_population)
        points = tail_scan(tab, n)
        rows = [
            {
                "groups_used": p.groups_used,
                "threshold": p.threshold,
                "tail_fraction": p.tail_fraction,
                "alpha_hat": p.alpha_hat,
                "se": p.se,
                "error": p.error,
            }
            for p in points
        ]
        stem = f"scan_{tab.year}_{tab.concept}"
        if "csv" in formats:
            _write_csv(out / f"{stem}.csv", header,
                       ["groups_used", "threshold", "tail_fraction", "alpha_hat",
                        "se", "error"], rows)
        good = [p for p in points if p.alpha_hat is not None]
        if good:
            any_success = True
        if "svg" in formats and good:
            use_threshold = all(p.threshold is not None for p in good)
            xs = [float(p.threshold if use_threshold else p.tail_fraction) for p in good]
            alpha = [p.alpha_hat for p in good]
            upper = [p.alpha_hat + 1.96 * p.se for p in good]
            lower = [p.alpha_hat - 1.96 * p.se for p in good]
            svg = line_chart(
                [("alpha", xs, alpha), ("+1.96 se", xs, upper), ("-1.96 se", xs, lower)],
                title=f"Tail sensitivity, {tab.year} {tab.concept}",
                x_label="tail threshold" if use_threshold else "tail fraction",
                y_label="estimated exponent",
                log_x=True,
                header_comment=header,
            )
            (out / f"{stem}.svg").write_text(svg, encoding="utf-8")
        print(f"scan: {tab.year} {tab.concept}: {len(good)}/{len(points)} points -> {out}")
    return EXIT_OK if any_success else EXIT_FATAL


# ---------------------------------------------------------------------------
# shares
# ---------------------------------------------------------------------------

def cmd_shares(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "shares", args,
        ["input", "concept", "years", "population_csv", "alt_population",
         "implied_alpha", "implied_fractiles", "out", "format"],
    )
    header = _header(manifest)
    tabs = _load_tabulations(args)
    series = _load_demographics(args)
    formats = args.format.split(",")
    p_target, q_source = _parse_floats(args.implied_fractiles)
    implied_rows = []
    failures = 0
    for tab in tabs:
        try:
            n = _population(tab, series, args.alt_population)
            curve = share_curve_from_tabulation(tab, n)
        except (ValueError, EstimationError) as exc:
            print(f"shares: {tab.year} {tab.concept}: {exc}", file=sys.stderr)
            failures += 1
            continue
        stem = f"shares_{tab.year}_{tab.concept}"
        rows = [
            {"fractile": p, "share": s}
            for p, s in zip(curve.fractiles, curve.shares)
        ]
        if "csv" in formats:
            _write_csv(out / f"{stem}.csv", header, ["fractile", "share"], rows)
        if "svg" in formats:
            svg = line_chart(
                [(f"{tab.concept} {tab.year}", list(curve.fractiles), list(curve.shares))],
                title=f"Top income shares, {tab.year} {tab.concept}",
                x_label="top fractile",
                y_label="income share",
                log_x=True,
                log_y=True,
                header_comment=header,
            )
            (out / f"{stem}.svg").write_text(svg, encoding="utf-8")
        share_q = interpolate_share(curve, q_source)
        implied_rows.append(
            {
                "year": tab.year,
                "concept": tab.concept,
                "alpha": args.implied_alpha,
                "fractile_p": p_target,
                "fractile_q": q_source,
                "share_q": share_q,
                "implied_share_p": implied_share(share_q, q_source, p_target, args.implied_alpha),
                "actual_share_p": (
                    interpolate_share(curve, p_target)
                    if curve.fractiles[0] <= p_target <= curve.fractiles[-1]
                    else None
                ),
            }
        )
        print(f"shares: {tab.year} {tab.concept}: {len(rows)} points -> {out}")
    if implied_rows and "csv" in formats:
        _write_csv(
            out / "implied_shares.csv", header,
            ["year", "concept", "alpha", "fractile_p", "fractile_q", "share_q",
             "implied_share_p", "actual_share_p"],
            implied_rows,
        )
    if not implied_rows:
        return EXIT_FATAL
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "simulate", args,
        ["alpha", "n_draws", "replications", "seed", "method", "fractiles",
         "thresholds", "dump_replications", "out", "format"],
    )
    header = _header(manifest)
    cfg = SimConfig(
        alpha_true=args.alpha,
        n_draws=args.n_draws,
        replications=args.replications,
        seed=args.seed,
        # an explicit threshold grid takes precedence over the fractile default
        fractile_grid=None if args.thresholds else _parse_floats(args.fractiles),
        threshold_grid=_parse_floats(args.thresholds) if args.thresholds else None,
    )
    report = mc_study(cfg, method=args.method)
    formats = args.format.split(",")
    if "json" in formats:
        _write_json(out / "mc_report.json", manifest, {"report": report.to_dict()})
    if "csv" in formats:
        _write_csv(out / "mc_report.csv", header, list(report.to_dict()), [report.to_dict()])
    if args.dump_replications:
        _write_csv(
            out / "mc_replications.csv", header,
            ["replication", "alpha_hat", "se", "covered", "error"],
            [
                {
                    "replication": r.replication,
                    "alpha_hat": r.alpha_hat,
                    "se": r.se,
                    "covered": r.covered,
                    "error": r.error,
                }
                for r in report.records
            ],
        )
    print(
        f"simulate: method={report.method} mean={report.mean_alpha_hat:.5f} "
        f"coverage={report.ci_coverage_95:.3f} failures={report.failures} -> {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sampleframe
# ---------------------------------------------------------------------------

def cmd_sampleframe(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "sampleframe", args,
        ["population_csv", "years", "alt_population", "out", "format"],
    )
    if not args.population_csv:
        raise _UsageError("sampleframe requires --population-csv")
    series = read_demographics(args.population_csv)
    years = _parse_years(args.years) or set(series.years)
    fit = fit_joint_share_regression(series)
    print(
        f"sampleframe: joint-share regression R^2={fit.r_squared:.5f} "
        f"slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
        f"({len(fit.years_used)} years)"
    )
    rows = []
    failures = 0
    for year in sorted(years):
        row = {"year": year, "definition": "A-M" if args.alt_population else "A-J"}
        try:
            row["n"] = (
                alt_units(series, year)
                if args.alt_population
                else potential_units(series, year, fit=fit)
            )
        except ValueError as exc:
            row["error"] = str(exc)
            failures += 1
        rows.append(row)
    header = _header(manifest) + (
        f" | joint-share fit: r_squared={fit.r_squared!r} slope={fit.slope!r}"
        f" intercept={fit.intercept!r}"
    )
    _write_csv(out / "sampleframe.csv", header, ["year", "definition", "n", "error"], rows)
    print(f"sampleframe: {len(rows) - failures}/{len(rows)} years -> {out}")
    if failures == len(rows):
        return EXIT_FATAL
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common_io(sp, with_inputs=True):
    if with_inputs:
        sp.add_argument("--input", nargs="+", required=True, help="tabulation CSV file(s)")
        sp.add_argument("--concept", default="all",
                        help="comma list of concepts to keep, or 'all' (default)")
        sp.add_argument("--years", default=None,
                        help="year filter: '2019', '1950-1990', or comma list")
    sp.add_argument("--population-csv", default=None, dest="population_csv",
                    help="demographic series CSV for potential-tax-unit estimation")
    sp.add_argument("--alt-population", action="store_true", dest="alt_population",
                    help="use the adults-minus-married-couples lower bound")
    sp.add_argument("--out", required=True, help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="paretotab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"paretotab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("estimate", help="point estimates per year/concept/method")
    _add_common_io(sp)
    sp.add_argument("--method", default="all", choices=list(METHODS) + ["all"])
    sp.add_argument("--top-fraction", type=float, default=0.01, dest="top_fraction")
    sp.add_argument("--fp-fraction", type=float, default=0.005, dest="fp_fraction")
    sp.add_argument("--ap-fractiles", default="0.001,0.01", dest="ap_fractiles")
    sp.add_argument("--format", default="csv,json")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("scan", help="estimate at every admissible tail cutoff")
    _add_common_io(sp)
    sp.add_argument("--format", default="csv,svg")
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("shares", help="top-share curves and implied shares")
    _add_common_io(sp)
    sp.add_argument("--implied-alpha", type=float, default=1.5, dest="implied_alpha")
    sp.add_argument("--implied-fractiles", default="0.001,0.01", dest="implied_fractiles")
    sp.add_argument("--format", default="csv,svg")
    sp.set_defaults(func=cmd_shares)

    sp = sub.add_parser("simulate", help="Monte Carlo calibration study")
    sp.add_argument("--alpha", type=float, default=1.5)
    sp.add_argument("--n-draws", type=int, default=100_000, dest="n_draws")
    sp.add_argument("--replications", type=int, default=50)
    sp.add_argument("--seed", type=int, default=3)
    sp.add_argument("--method", default="tw", choices=["tw", "ml"])
    sp.add_argument("--fractiles", default="0.001,0.002,0.004,0.008,0.016",
                    help="fractile grid (set empty to use --thresholds)")
    sp.add_argument("--thresholds", default=None,
                    help="threshold grid, e.g. '1,2,4,8'")
    sp.add_argument("--dump-replications", action="store_true", dest="dump_replications")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="json,csv")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sampleframe", help="potential-tax-unit series")
    sp.add_argument("--years", default=None)
    _add_common_io(sp, with_inputs=False)
    sp.add_argument("--format", default="csv")
    sp.set_defaults(func=cmd_sampleframe)

    return parser


def _apply_config(argv: list[str], parser: _Parser) -> list[str]:
    """Fold --config key=value files into subcommand defaults."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise _UsageError("--config needs a file path")
    cfg_path = Path(argv[idx + 1])
    if not cfg_path.exists():
        raise _UsageError(f"config file {cfg_path} not found")
    overrides: dict[str, str] = {}
    for lineno, line in enumerate(cfg_path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"{cfg_path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    argv = argv[:idx] + argv[idx + 2 :]
    if not argv:
        raise _UsageError("config file given but no subcommand")
    command = argv[0]
    actions = {
        a.dest: a
        for sp in parser._subparsers._group_actions  # noqa: SLF001 - argparse internals
        for name, subp in sp.choices.items()
        if name == command
        for a in subp._actions
    }
    converted = {}
    for key, value in overrides.items():
        if key not in actions:
            raise _UsageError(f"config key {key!r} unknown for command {command!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            converted[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            converted[key] = value.split(";") if value else []
        elif action.type is not None:
            converted[key] = action.type(value)
        else:
            converted[key] = value
    for sp_action in parser._subparsers._group_actions:
        for name, subp in sp_action.choices.items():
            if name == command:
                subp.set_defaults(**converted)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"paretotab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TabulationError, EstimationError, ValueError, OSError) as exc:
        print(f"paretotab: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
