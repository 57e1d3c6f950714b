"""Command line entry point: `l1contract {solve,dual,kernel,verify,sweep}`.

Exit codes: 0 all checks pass, 1 a verification failed, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import config as cf
from . import harness
from .errors import ConfigError


def _load(config_path, preset, out, seed, threads) -> cf.RunConfig:
    if config_path is None and preset is None:
        raise ConfigError("give --config or --preset")
    if config_path is not None:
        cfg = cf.parse_config(config_path)
        if preset is not None and preset != cfg.name:
            raise ConfigError("--preset conflicts with the preset named in the config file")
    else:
        cfg = cf.from_preset(preset)
    overrides = {}
    if out is not None:
        overrides["out"] = str(out)
    if seed is not None:
        overrides["seed"] = seed
    if threads is not None:
        overrides["threads"] = threads
    if overrides:
        cfg = cf.build_config({**cfg.echo, **overrides})
    return cfg


def _common(fn):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path),
                  help="TOML run configuration.")
    @click.option("--preset", type=click.Choice(sorted(cf.PRESETS)), help="Run a named preset without a file.")
    @click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
    @click.option("--seed", type=int, help="Seed for randomized test functions.")
    @click.option("--threads", type=int, help="Worker threads for independent checks.")
    @functools.wraps(fn)
    def wrapper(config_path, preset, out, seed, threads, **kwargs):
        try:
            cfg = _load(config_path, preset, out, seed, threads)
        except ConfigError as exc:
            record = {"exit_code": harness.EXIT_CONFIG, "kind": "configuration", "type": type(exc).__name__,
                      "message": str(exc)}
            issues = getattr(exc, "issues", None)
            if issues:
                record["issues"] = [{"field": i.field, "message": i.message, "line": i.line} for i in issues]
            click.echo(json.dumps(record, sort_keys=True), err=True)
            sys.exit(harness.EXIT_CONFIG)
        result = fn(cfg, **kwargs)
        for r in result.reports:
            click.echo(r.line())
        failure = result.manifest.get("failure")
        if failure:
            click.echo(json.dumps(failure, sort_keys=True), err=True)
        click.echo(f"status={result.manifest['status']} exit={result.exit_code} out={cfg.out}")
        sys.exit(result.exit_code)
    return wrapper


@click.group()
def main():
    """Monotone schemes and L1-contraction checks for degenerate convection-diffusion equations."""


@main.command()
@_common
def solve(cfg):
    """Solve the configured pair and write trajectories and plot data."""
    return harness.execute(cfg, "solve")


@main.command()
@_common
def dual(cfg):
    """Solve the dual equation and write its exponential-bound certificate."""
    return harness.execute(cfg, "dual")


@main.command()
@_common
def kernel(cfg):
    """Spectral heat kernel against its closed form (alpha = 1, 2) or its mass."""
    return harness.execute(cfg, "kernel")


@main.command()
@_common
def verify(cfg):
    """Run every configured check and write the report table."""
    return harness.execute(cfg, "verify")


@main.command()
@click.option("--n", "n_list", type=int, multiple=True, help="Grid sizes (repeatable); defaults to the config's sweep.")
@_common
def sweep(cfg, n_list):
    """Primary check over ascending grid sizes with successive violation ratios."""
    return harness.execute(cfg, "sweep", n_list=list(n_list) or None)


if __name__ == "__main__":
    main()
