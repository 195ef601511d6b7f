# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Monolab CLI functions."""

import logging
import stat
from configparser import ConfigParser
from pathlib import Path
from typing import (Callable, Dict, List, NamedTuple, Optional, TypeVar,
                    Union, get_type_hints)

import click
from typing_extensions import Literal

import monolab.config as mconfig
import monolab.logging as mlogging
from monolab.experiments import run_experiment
from monolab.fixtures import listing
from monolab.order import ContractViolation

MONOLAB_HOME = Path.home() / '.monolab'
MONOLAB_CONFIG_PATH = MONOLAB_HOME / 'config.ini'
SECTION = 'monolab'

# Only read write permissions for the current user
CONFIG_FILE_PERMISSIONS = stat.S_IRUSR | stat.S_IWUSR

EXIT_VIOLATIONS = 2

T = TypeVar('T')
TOrEmptyString = Union[Literal[''], T]

logger = logging.getLogger(__name__)


class _ClickContext(NamedTuple):
    user_config: ConfigParser


@click.group()
@click.pass_context
def cli(ctx) -> None:
    """Monotone dynamics laboratory."""
    user_config = ConfigParser()
    if MONOLAB_CONFIG_PATH.exists():
        user_config.read(MONOLAB_CONFIG_PATH)
    if SECTION not in user_config:
        user_config[SECTION] = {}
    ctx.obj = _ClickContext(user_config=user_config)


class Config(NamedTuple):
    """User-specific configuration."""

    log_dir: Optional[Path] = None
    threads: Optional[int] = None


def get_config() -> Config:
    """Return the user's config, or the defaults when there is none."""
    if not MONOLAB_CONFIG_PATH.exists():
        return Config()

    user_config = ConfigParser()
    user_config.read(MONOLAB_CONFIG_PATH)
    if SECTION not in user_config:
        return Config()

    config: Dict[str, Union[int, Path]] = {}

    # Values of the section are strings. Cast them by type hint
    type_hints = get_type_hints(Config)
    for key, value in user_config[SECTION].items():
        target_type = type_hints.get(key)
        if target_type == Optional[Path]:
            config[key] = Path(value).expanduser()
        elif target_type == Optional[int]:
            config[key] = int(value)
        else:
            raise TypeError(f'Unknown config key {key} in '
                            f'{MONOLAB_CONFIG_PATH}.')

    return Config(**config)  # type: ignore


def _get_default_value_from_ctx(key: str, default: TOrEmptyString = '',
                                is_dir: bool = False) \
        -> Callable[[], TOrEmptyString]:
    def fn() -> TOrEmptyString:
        obj: _ClickContext = click.get_current_context().obj
        value = obj.user_config[SECTION].get(key, default)
        if value and is_dir:
            path = Path(value).expanduser().absolute()
            path.mkdir(parents=True, exist_ok=True)
            return str(path)
        return value

    return fn


@cli.command('configure')
@click.option(
    '--log-dir', '-l', type=click.Path(file_okay=False),
    help='Local directory to store logs.', prompt='Local log directory',
    default=_get_default_value_from_ctx(key='log_dir',
                                        default=str(MONOLAB_HOME / 'logs'),
                                        is_dir=True)
)
@click.option(
    '--threads', '-t', type=str, help='Default number of worker threads.',
    prompt='Default number of threads',
    default=_get_default_value_from_ctx(key='threads', default='1')
)
@click.pass_obj
def configure(obj: _ClickContext, **kwargs) -> None:
    """Configure the log directory and the default thread count."""
    config = obj.user_config[SECTION]

    if kwargs.keys() != set(Config._fields):
        raise ValueError('Keyword arguments and configuration fields do not '
                         'match.')
    if kwargs['threads'] and not str(kwargs['threads']).isdigit():
        raise click.BadParameter('threads must be a positive integer.')

    for key in Config._fields:
        if kwargs[key] != '':
            config[key] = str(kwargs[key])
        elif key in config:
            del config[key]

    MONOLAB_CONFIG_PATH.parent.mkdir(parents=True, exist_ok=True)

    # Set the correct file permissions
    if MONOLAB_CONFIG_PATH.exists():
        if MONOLAB_CONFIG_PATH.stat().st_mode != CONFIG_FILE_PERMISSIONS:
            MONOLAB_CONFIG_PATH.chmod(mode=CONFIG_FILE_PERMISSIONS)
    else:
        MONOLAB_CONFIG_PATH.touch(mode=CONFIG_FILE_PERMISSIONS)

    with MONOLAB_CONFIG_PATH.open('w') as config_file:
        obj.user_config.write(config_file)

    logger.info(f'Wrote to {MONOLAB_CONFIG_PATH}')


@cli.command('fixtures')
def list_fixtures() -> None:
    """List the built-in fixtures."""
    for line in listing():
        click.echo(line)


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--seed', type=int, help='Override the seed of the config.')
@click.option('--out-dir', type=click.Path(file_okay=False),
              help='Override the output directory of the config.')
@click.option('--threads', type=int, envvar='MONOLAB_THREADS',
              help='Number of worker threads [env: MONOLAB_THREADS].')
@click.option('--override', '-o', 'overrides', multiple=True,
              metavar='KEY=VALUE',
              help='Set a config value by dotted path, e.g. experiment.n=50.')
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']))
@click.pass_context
def run(ctx, config_path: str, seed: Optional[int], out_dir: Optional[str],
        threads: Optional[int], overrides: List[str], log_level: str) -> None:
    """Run the experiment described by CONFIG_PATH.

    Exits with status 2 when a property check reports violations.
    """
    try:
        config = mconfig.load(config_path, list(overrides))
    except mconfig.ConfigError as e:
        raise click.ClickException(str(e))
    if seed is not None:
        config = config.replace(seed=seed)
    if out_dir is not None:
        config = config.replace(output_dir=out_dir)
    if threads is None:
        threads = get_config().threads or 1

    mlogging.setup_logging(
        project=f'monolab/{config.experiment.kind}',
        level=getattr(logging, log_level), verbose=False,
        fallback_dir=Path(config.output_dir) / 'logs'
    )
    try:
        result = run_experiment(config, threads=threads)
    except (mconfig.ConfigError, ContractViolation, OSError) as e:
        raise click.ClickException(str(e))

    for path in result.files:
        click.secho(f'Wrote {path}', err=True, fg='green')
    if result.violations:
        click.secho(f'{result.violations} property violations.', err=True,
                    fg='red')
        ctx.exit(EXIT_VIOLATIONS)
