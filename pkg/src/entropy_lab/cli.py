"""Command-line interface: ``entropy-lab <command> [flags]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import COMMANDS, ExperimentConfig, load_config, merge
from .errors import NumericalError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="JSON config file; flags override its values")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="write the report here instead of stdout")
    g.add_argument("--format", choices=("json", "csv"))
    g.add_argument("--timings", action="store_true",
                   help="record wall-clock runtime (reports are then not byte-reproducible)")
    m = common.add_argument_group("model")
    m.add_argument("--d", type=int, help="rank of the free group")
    m.add_argument("--p", type=_floats, help="walk masses: d symmetric values or 2d values")
    m.add_argument("--uniform", action="store_true", help="use the uniform walk")
    m.add_argument("--lambda", dest="lam", type=_floats, help="entropy weights (default depends on command)")
    m.add_argument("--f", help="divergence: kl, reverse_kl, chi2, hellinger2, linear")
    m.add_argument("--a", type=_floats, help="Abel parameter(s) in (0, 1), comma-separated")
    m.add_argument("--depth", type=int)
    m.add_argument("--paths", type=int)
    m.add_argument("--samples", type=int)
    m.add_argument("--sigma", type=float)
    m.add_argument("--radius", type=int)
    m.add_argument("--eps", type=float)
    m.add_argument("--tol", type=float)
    m.add_argument("--n", dest="n_list", type=_ints, help="walk lengths for kv, comma-separated")
    m.add_argument("--k", type=int, help="lattice dimension for amenable")
    m.add_argument("--walk", choices=("lazy", "simple"))

    parser = _Parser(prog="entropy-lab", description="Furstenberg f-entropy experiments on free groups.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    given = vars(args)
    overrides = {k: v for k, v in given.items() if k not in ("config", "a")}
    a = given.get("a")
    if a is not None:
        if len(a) == 1:
            overrides["a"] = a[0]
        overrides["a_list"] = a
    path = given.get("config")
    base = load_config(path) if path else ExperimentConfig(command=args.command)
    return merge(base, overrides)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    from .experiments import run

    try:
        cfg = _config(args)
        text = run(cfg).render(cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
