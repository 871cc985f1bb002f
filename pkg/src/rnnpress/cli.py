"""``rnnpress`` command line.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.
"""

import argparse
import json
import sys

from . import linalg
from .compress import RankPolicy, compress_model
from .errors import ArgumentError, LoadError, NumericalError, StateError
from .inference import compare, random_sequences
from .model import Architecture, atomic_write, generate_random, load, param_count, save

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _dump(obj):
    print(json.dumps(obj, sort_keys=True, indent=2))


def _load(path):
    try:
        return load(path)
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc.strerror or exc}") from exc


def cmd_generate(args):
    try:
        arch = Architecture(args.cell, args.inputs, args.layers, args.outputs)
    except ArgumentError as exc:
        raise UsageError(str(exc)) from exc
    model = generate_random(arch, args.seed)
    save(model, args.output)
    print(f"params: {param_count(model)}")


def cmd_compress(args):
    try:
        policy = RankPolicy(tau=args.tau) if args.ranks is None else RankPolicy(explicit_ranks=args.ranks)
    except ArgumentError as exc:
        raise UsageError(str(exc)) from exc
    model = _load(args.input)
    if model.compressed:
        raise StateError(f"{args.input} is already compressed")
    if policy.explicit_ranks is not None:
        sizes = model.arch.layer_sizes
        if len(policy.explicit_ranks) != len(sizes) or any(
            r > n for r, n in zip(policy.explicit_ranks, sizes)
        ):
            raise UsageError(f"ranks {list(policy.explicit_ranks)} do not fit layer sizes {list(sizes)}")
    compressed, report = compress_model(model, policy)
    save(compressed, args.output)
    text = report.to_json() + "\n"
    if args.report:
        atomic_write(args.report, [text.encode("utf-8")])
    sys.stdout.write(text)


def cmd_inspect(args):
    model = _load(args.input)
    info = model.arch.to_json()
    info["ranks"] = model.ranks if model.compressed else None
    info["params"] = param_count(model)
    _dump(info)


def cmd_spectra(args):
    model = _load(args.input)
    layers = []
    for i, layer in enumerate(model.layers, start=1):
        sigma = linalg.svd(layer.recurrent_matrix()).sigma
        layers.append({"index": i, "sigma": sigma.tolist()})
    _dump({"layers": layers})


def cmd_params(args):
    print(f"params: {param_count(_load(args.input))}")


def cmd_eval(args):
    if args.seqs < 1 or args.len < 1:
        raise UsageError("--seqs and --len must be positive")
    a = _load(args.reference)
    b = _load(args.candidate)
    seqs = random_sequences(args.seqs, args.len, a.arch.input_dim, args.seed)
    _dump(compare(a, b, seqs).to_dict())


def build_parser():
    parser = _Parser(prog="rnnpress", description="Joint low-rank compression of recurrent models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a seeded random model")
    p.add_argument("--cell", choices=["lstm", "rnn"], required=True)
    p.add_argument("--inputs", type=int, required=True)
    p.add_argument("--layers", type=_int_list, required=True, help="comma-separated layer sizes")
    p.add_argument("--outputs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compress", help="factor every hidden layer")
    p.add_argument("input")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--tau", type=float, help="explained-variance threshold in (0, 1]")
    group.add_argument("--ranks", type=_int_list, help="comma-separated per-layer ranks")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("inspect", help="print the architecture as JSON")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("spectra", help="print per-layer singular values of W_h")
    p.add_argument("input")
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("params", help="print the stored parameter count")
    p.add_argument("input")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("eval", help="output divergence of two models on random sequences")
    p.add_argument("reference")
    p.add_argument("candidate")
    p.add_argument("--seqs", type=int, default=10)
    p.add_argument("--len", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"rnnpress: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LoadError, StateError, ArgumentError, OSError) as exc:
        print(f"rnnpress: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"rnnpress: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
