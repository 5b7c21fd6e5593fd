import argparse
import logging
import logging.handlers
import os
import sys
from pathlib import Path

import numpy
import scipy
import sentry_sdk
from rich import print

from levitrap import __version__ as levitrap_version
from levitrap.core.errors import ConfigError, LevitrapError
from levitrap.logging import init_logger
from levitrap.packages.runner.config import load_config
from levitrap.packages.runner.report import emit_report
from levitrap.packages.runner.runner import run_scenarios
from levitrap.settings import OUTPUT_DIR_ENV, read_settings, settings, write_default_settings

log = logging.getLogger("levitrap")

EXIT_SUCCESS = 0
EXIT_CONFIG_ERROR = 1
EXIT_SCENARIO_FAILURES = 2


class CLIFlags(argparse.Namespace):
    version: bool
    command: str | None
    config: str
    preset: str | None
    out: Path | None
    seed: int | None
    threads: int | None
    path: Path
    disable_rich: bool
    debug: bool


def parse_cli_flags(arguments: list[str]) -> CLIFlags:
    parser = argparse.ArgumentParser(
        prog="levitrap",
        description="Sympathetic cooling of a levitated nanoparticle by trapped ions",
    )
    parser.add_argument("--version", "-V", action="store_true", help="Display the version")
    parser.add_argument("--disable-rich", action="store_true", help="Disable rich log format")
    parser.add_argument("--debug", action="store_true", help="Enable debug logs")
    commands = parser.add_subparsers(dest="command")

    run = commands.add_parser("run", help="Run the scenarios of a configuration file")
    run.add_argument("config", help="Path to a configuration file or name of a bundled preset")
    run.add_argument(
        "--preset", help="Bundled preset the configuration is merged over", default=None
    )
    run.add_argument(
        "--out",
        type=Path,
        default=None,
        help=f"Output directory, overrides {OUTPUT_DIR_ENV} and the configuration",
    )
    run.add_argument("--seed", type=int, default=None, help="Seed of every scenario")
    run.add_argument("--threads", type=int, default=None, help="Worker threads")

    init = commands.add_parser("init", help="Write a configuration template")
    init.add_argument(
        "path", type=Path, nargs="?", default=Path("levitrap.yml"), help="Where to write it"
    )
    args = parser.parse_args(arguments, namespace=CLIFlags())
    if not args.version and args.command is None:
        parser.print_help()
        sys.exit(EXIT_CONFIG_ERROR)
    return args


def write_template(path: Path):
    if path.exists():
        print(f"[red]{path} already exists, not overwriting it.[/red]")
        sys.exit(EXIT_CONFIG_ERROR)
    write_default_settings(path)
    print(f"[green]A new configuration file has been written at [blue]{path}[/blue].[/green]")
    print("[yellow]Adjust the system and scenarios, then use [bold]levitrap run[/bold].[/yellow]")
    sys.exit(EXIT_SUCCESS)


def print_welcome():
    print("[green]{0:-^50}[/green]".format(" levitrap "))
    print("[blue]{0:^50}[/blue]".format("Nanoparticle and ions in a two-tone Paul trap"))
    print("")
    print(" [red]{0:<20}[/red] [yellow]{1:>10}[/yellow]".format("Version:", levitrap_version))
    print(" [red]{0:<20}[/red] [yellow]{1:>10}[/yellow]".format("NumPy:", numpy.__version__))
    print(" [red]{0:<20}[/red] [yellow]{1:>10}[/yellow]".format("SciPy:", scipy.__version__))
    print("")


def init_sentry():
    if settings.sentry_dsn:
        sentry_sdk.init(
            dsn=settings.sentry_dsn,
            environment=settings.sentry_environment,
            release=levitrap_version,
        )
        log.info("Sentry initialized.")


def main():
    cli_flags = parse_cli_flags(sys.argv[1:])
    if cli_flags.version:
        print(f"levitrap - {levitrap_version}")
        sys.exit(EXIT_SUCCESS)
    if cli_flags.command == "init":
        write_template(cli_flags.path)

    try:
        config = load_config(cli_flags.config, cli_flags.preset)
    except ConfigError as e:
        print(f"[red]Error parsing config file: {e}[/red]")
        sys.exit(EXIT_CONFIG_ERROR)
    except LevitrapError as e:
        print(f"[red]The configured system is invalid: {e}[/red]")
        sys.exit(EXIT_CONFIG_ERROR)

    read_settings(config.runtime)
    if cli_flags.out is not None:
        settings.output_dir = cli_flags.out
    if cli_flags.threads is not None:
        settings.threads = cli_flags.threads
    if cli_flags.seed is not None:
        settings.seed = cli_flags.seed

    print_welcome()
    queue_listener: logging.handlers.QueueListener | None = None
    exit_code = EXIT_SUCCESS
    try:
        queue_listener = init_logger(cli_flags.disable_rich, cli_flags.debug, settings.log_file)
        init_sentry()
        if os.environ.get(OUTPUT_DIR_ENV) and cli_flags.out is None:
            log.info(f"Output directory taken from {OUTPUT_DIR_ENV}")
        manifest = run_scenarios(
            config,
            output_dir=settings.output_dir,
            threads=settings.threads,
            seed=cli_flags.seed,
        )
        print(emit_report(manifest))
        if manifest.failed:
            exit_code = EXIT_SCENARIO_FAILURES
    except KeyboardInterrupt:
        log.warning("Interrupted, outputs may be incomplete.")
        exit_code = EXIT_SCENARIO_FAILURES
    except Exception:
        log.critical("Unhandled exception.", exc_info=True)
        exit_code = EXIT_SCENARIO_FAILURES
    finally:
        if queue_listener:
            queue_listener.stop()
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
