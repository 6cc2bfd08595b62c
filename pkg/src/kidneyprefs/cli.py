"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data or parse
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, ParseError
from .experiment import RUNS_FILE, simulate_from_config, summary_document, write_results
from .preferences import (
    DEFAULT_BLP_PARAMS,
    REFERENCE_BT_SCORES,
    BlpFitConfig,
    MvnParams,
    fit_blp,
    fit_bt,
    generate_bt_survey,
    generate_synthetic_survey,
)
from .report import emit_tables, read_runs, summarize
from .survey import read_survey, write_survey

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("kidneyprefs")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth_survey(args: argparse.Namespace) -> int:
    if args.n < 0:
        raise ConfigError("--n must be >= 0")
    rng = np.random.default_rng(args.seed)
    if args.model == "bt":
        scores = REFERENCE_BT_SCORES if args.scores is None else dict(zip(range(1, 9), args.scores))
        if len(scores) != 8 or any(s <= 0 for s in scores.values()):
            raise ConfigError("--scores needs 8 positive values")
        survey = generate_bt_survey(scores, args.n, rng)
    else:
        mu = DEFAULT_BLP_PARAMS.mu if args.mu is None else np.array(args.mu)
        if args.chol is not None:
            params = MvnParams.from_dict({"mu": list(mu), "chol": args.chol})
        elif args.sigma_diag is not None:
            if any(v < 0 for v in args.sigma_diag):
                raise ConfigError("--sigma-diag values must be >= 0")
            params = MvnParams(mu, np.diag(np.sqrt(args.sigma_diag)))
        else:
            params = MvnParams(mu, DEFAULT_BLP_PARAMS.chol)
        survey = generate_synthetic_survey(params, args.n, rng)
    write_survey(args.out, survey)
    print(f"wrote {args.out}: N={args.n} seed={args.seed}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    survey = read_survey(args.survey)
    if not len(survey):
        raise ParseError("survey has no respondents", str(args.survey))
    if args.model == "bt":
        scores = fit_bt(survey)
        doc = scores.to_dict()
        doc["fit"].update({"N": len(survey), "seed": args.seed})
        if scores.non_identifiable:
            log.warning("BT scores are not identifiable from this survey; pseudocounts applied")
        print(f"BT fit: {scores.iterations} MM iterations, non_identifiable={scores.non_identifiable}")
    else:
        fit = fit_blp(survey, BlpFitConfig(n_draws=args.draws, max_iter=args.max_iter, seed=args.seed,
                                          report_draws=args.report_draws))
        doc = fit.to_dict()
        print(
            f"BLP fit: {fit.iterations} iterations, avg log-likelihood {fit.log_likelihood:.6f} "
            f"(start {fit.init_log_likelihood:.6f}), converged={fit.converged}"
        )
    _write_json(Path(args.out), doc)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.results_dir = Path(args.out)
    if args.workers is not None:
        cfg.workers = args.workers
    records = simulate_from_config(cfg)
    echo = cfg.echo()
    if args.seed is not None:
        echo = {**echo, "seed": args.seed}
    write_results(records, cfg.conditions, cfg.results_dir, echo)
    doc = summary_document(records, cfg.conditions, echo)
    for name, c in doc["conditions"].items():
        rank = c["average_rank"]
        med = "n/a" if rank is None else f"{rank['median']:.3f}"
        prop = "n/a" if c["proportion_matched"] is None else f"{c['proportion_matched']:.3f}"
        print(f"{name:14s} runs={c['runs']:3d} median_rank={med} proportion_matched={prop}")
    print(f"wrote {cfg.results_dir}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    runs_path = Path(args.runs)
    if runs_path.is_dir():
        runs_path = runs_path / RUNS_FILE
    records = read_runs(runs_path)
    out = Path(args.out) if args.out else runs_path.parent
    for p in emit_tables(summarize(records), out):
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="kidneyprefs", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-survey", parents=[common], help="write a synthetic pairwise survey")
    p.add_argument("--model", choices=("blp", "bt"), default="blp")
    p.add_argument("--n", type=int, default=500, help="number of respondents")
    p.add_argument("--mu", type=float, nargs=3, metavar=("AGE", "DRINK", "HEALTH"))
    p.add_argument("--sigma-diag", type=float, nargs=3, metavar="VAR", help="diagonal covariance")
    p.add_argument("--chol", type=float, nargs=6, metavar="L", help="row-major lower-triangular Cholesky")
    p.add_argument("--scores", type=float, nargs=8, metavar="S", help="BT scores for --model bt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_survey)

    p = sub.add_parser("fit", parents=[common], help="fit BT scores or a BLP distribution")
    p.add_argument("survey")
    p.add_argument("--model", choices=("bt", "blp"), required=True)
    p.add_argument("--draws", type=int, default=500, help="simulation draws R (blp)")
    p.add_argument("--report-draws", type=int, default=200,
                   help="independent draws for the reported log-likelihood (blp, 0 to skip)")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config's master seed")
    p.add_argument("--out", help="override results_dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="rebuild summary tables from runs.csv")
    p.add_argument("--runs", required=True, help="runs.csv or a results directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
