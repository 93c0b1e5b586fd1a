"""Command-line application factory."""

from __future__ import annotations

import argparse
import logging
import os
from collections.abc import Callable, Sequence
from typing import Any

from pydantic import ValidationError

from cdfgnn.cli import commands
from cdfgnn.config import Settings, load_settings
from cdfgnn.domain.errors import CdfgnnError, DataError, ProtocolError, UsageError
from cdfgnn.logging_config import configure_logging, get_logging_config

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, Settings], int]

ENV_PREFIX = "CDFGNN_"

# argparse dest -> (settings group, field)
SETTING_FLAGS: dict[str, tuple[str, str]] = {
    "hosts": ("partition", "hosts"),
    "gpus_per_host": ("partition", "gpus_per_host"),
    "alpha": ("partition", "alpha"),
    "beta": ("partition", "beta"),
    "gamma": ("partition", "gamma"),
    "edge_order_seed": ("partition", "edge_order_seed"),
    "epochs": ("train", "epochs"),
    "lr": ("train", "lr"),
    "optimizer": ("train", "optimizer"),
    "hidden": ("train", "hidden"),
    "layers": ("train", "layers"),
    "precision": ("train", "precision"),
    "seed": ("train", "seed"),
    "loss_reduction": ("train", "loss_reduction"),
    "param_sync": ("train", "param_sync"),
    "self_loops": ("train", "self_loops"),
    "cache": ("cache", "enabled"),
    "eps_init": ("cache", "eps_init"),
    "eps_fixed": ("cache", "eps_fixed"),
    "scatter_mode": ("cache", "scatter_mode"),
    "quant": ("quant", "enabled"),
    "bits": ("quant", "bits"),
    "bits_forward": ("quant", "bits_forward"),
    "bits_backward": ("quant", "bits_backward"),
    "barrier_timeout": ("runtime", "barrier_timeout"),
    "jitter_seed": ("runtime", "jitter_seed"),
}


def _on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _flag(parser: argparse.ArgumentParser, flag: str, help_text: str = "", **kwargs: Any) -> None:
    """
    Option that falls back to CDFGNN_<FLAG> in the environment.

    The environment value goes through the option's `type` like a typed
    argument; a set variable also satisfies `required`.
    """
    env_name = ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper()
    env_value = os.environ.get(env_name)
    if env_value is not None:
        if kwargs.get("action") == "store_true":
            kwargs["default"] = env_value.lower() in ("on", "true", "1", "yes")
        else:
            kwargs["default"] = env_value
        kwargs["required"] = False
    label = f"{help_text} (env {env_name})" if help_text else f"env {env_name}"
    parser.add_argument(flag, help=label, **kwargs)


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--graph", "edge-list file")
    _flag(parser, "--features", "binary feature file")
    _flag(parser, "--labels", "label/mask file")


def _add_partition_flags(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--hosts", "number of hosts", type=int)
    _flag(parser, "--gpus-per-host", "workers per host", type=int)
    _flag(parser, "--p", "total workers (one host unless --hosts is given)", type=int)
    _flag(parser, "--alpha", "edge-balance weight", type=float)
    _flag(parser, "--beta", "vertex-balance weight", type=float)
    _flag(parser, "--gamma", "host-locality weight", type=float)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--epochs", "training iterations", type=int)
    _flag(parser, "--lr", "learning rate", type=float)
    _flag(parser, "--optimizer", choices=["adam", "sgd"])
    _flag(parser, "--hidden", "hidden dimension", type=int)
    _flag(parser, "--layers", "number of GCN layers", type=int)
    _flag(parser, "--precision", choices=["float64", "float32"])
    _flag(parser, "--seed", "weight init seed", type=int)
    _flag(parser, "--loss-reduction", choices=["mean", "sum"])
    _flag(parser, "--param-sync", choices=["end", "per_layer"])
    _flag(parser, "--self-loops", type=_on_off, metavar="on|off")
    _flag(parser, "--metrics-out", "metrics CSV")
    _flag(parser, "--summary-out", "JSON summary (default: metrics path with .json)")


def _add_runtime_flags(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--plan", "plan directory (partitions on the fly when absent)")
    _flag(parser, "--cache", "adaptive vertex cache", type=_on_off, metavar="on|off")
    _flag(parser, "--eps-init", "initial cache threshold", type=float)
    _flag(parser, "--eps-fixed", "pin the cache threshold", type=float)
    _flag(parser, "--scatter-mode", choices=["delta", "full"])
    _flag(parser, "--quant", "quantize payloads", type=_on_off, metavar="on|off")
    _flag(parser, "--bits", "quantization width", type=int)
    _flag(parser, "--bits-forward", type=int)
    _flag(parser, "--bits-backward", type=int)
    _flag(parser, "--barrier-timeout", "seconds", type=float)
    _flag(parser, "--jitter-seed", "inject scheduling noise", type=int)
    _flag(
        parser,
        "--no-wall-clock",
        "write wall_s as 0 for reproducible metrics files",
        action="store_true",
    )


def create_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="cdfgnn",
        description="Desk-scale simulator of cached, quantized distributed full-batch GCN training",
    )
    _flag(parser, "--config", "key=value file")
    _flag(parser, "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-graph", help="generate a power-law graph with planted labels")
    _flag(gen, "--n", "vertex count", type=int, required=True)
    _flag(gen, "--m", "edges per new vertex", type=int, default=3)
    _flag(gen, "--classes", type=int, default=4)
    _flag(gen, "--dim", type=int, default=32)
    _flag(gen, "--noise", type=float, default=0.1)
    _flag(gen, "--seed", type=int, default=0)
    _flag(gen, "--out-prefix", "output prefix for .edges/.feat/.labels")
    gen.set_defaults(handler=commands.cmd_gen_graph, required_paths=["out_prefix"])

    part = sub.add_parser("partition", help="vertex-cut partition an edge list")
    _flag(part, "--graph", "edge-list file")
    _add_partition_flags(part)
    _flag(part, "--seed", "edge stream order", dest="edge_order_seed", type=int)
    _flag(part, "--out", "plan directory")
    part.set_defaults(handler=commands.cmd_partition, required_paths=["graph", "out"])

    train = sub.add_parser("train", help="train on the simulated cluster")
    _add_dataset_flags(train)
    _add_partition_flags(train)
    _add_train_flags(train)
    _add_runtime_flags(train)
    _flag(
        train,
        "--compare-exact",
        "also train without cache/quantization and report reductions",
        action="store_true",
    )
    train.set_defaults(
        handler=commands.cmd_train,
        required_paths=["graph", "features", "labels", "metrics_out"],
    )

    oracle = sub.add_parser("oracle-train", help="train the single-device reference")
    _add_dataset_flags(oracle)
    _add_train_flags(oracle)
    oracle.set_defaults(
        handler=commands.cmd_oracle_train,
        required_paths=["graph", "features", "labels", "metrics_out"],
    )

    compare = sub.add_parser("compare", help="compare two metrics CSVs (B against A)")
    compare.add_argument("run_a")
    compare.add_argument("run_b")
    _flag(compare, "--out", "write the JSON report here too")
    compare.set_defaults(handler=commands.cmd_compare, required_paths=[])

    ablation = sub.add_parser("ablation", help="baseline/cache/quant/cache+quant on one plan")
    _add_dataset_flags(ablation)
    _add_partition_flags(ablation)
    _add_train_flags(ablation)
    _add_runtime_flags(ablation)
    _flag(ablation, "--out", "write the JSON table here too")
    ablation.set_defaults(
        handler=commands.cmd_ablation,
        required_paths=["graph", "features", "labels"],
    )
    return parser


def settings_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Nested settings dict from the flags that were given."""
    overrides: dict[str, Any] = {}
    values = vars(args)
    for dest, (group, field) in SETTING_FLAGS.items():
        if values.get(dest) is not None:
            overrides.setdefault(group, {})[field] = values[dest]

    workers = values.get("p")
    if workers is not None:
        hosts = values.get("hosts") or 1
        if workers % hosts:
            raise UsageError(f"--p {workers} is not a multiple of --hosts {hosts}")
        overrides.setdefault("partition", {}).update(hosts=hosts, gpus_per_host=workers // hosts)
    if values.get("no_wall_clock"):
        overrides["metrics_wall_clock"] = False
    if values.get("log_level") is not None:
        overrides["log_level"] = values["log_level"]
    return overrides


def _check_paths(args: argparse.Namespace) -> None:
    missing = [name for name in args.required_paths if getattr(args, name, None) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def run(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, configure logging and dispatch to a command.

    Returns:
        Exit status: 0 ok, 2 usage, 3 data error, 4 protocol or internal error
    """
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        _check_paths(args)
        settings = load_settings(args.config, **settings_overrides(args))
    except ValidationError as exc:
        configure_logging(get_logging_config("INFO"))
        logger.error("invalid settings: %s", exc)
        return UsageError.exit_code
    except CdfgnnError as exc:
        configure_logging(get_logging_config("INFO"))
        logger.error("%s", exc)
        return exc.exit_code

    configure_logging(get_logging_config(settings.log_level))
    handler: Handler = args.handler
    try:
        return handler(args, settings)
    except CdfgnnError as exc:
        context = exc.context if isinstance(exc, ProtocolError) else {}
        logger.error("%s failed: %s", args.command, exc, extra=context)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s failed: cannot access %s", args.command, exc.filename or exc)
        return DataError.exit_code
    except Exception:
        logger.exception("%s failed with an internal error", args.command)
        return ProtocolError.exit_code
