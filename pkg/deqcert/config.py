# pylint: disable=missing-docstring

import logging
import logging.config

from docopt import docopt
import yaml

from deqcert.exceptions import ArgumentError, IoError
from deqcert.smoothing import SmoothingConfig
from deqcert.solvers import SolverConfig
from deqcert.srs import SrsConfig
from deqcert.stats import ConfidenceSpec
from deqcert.training import TrainConfig
from deqcert.util import merge, parse_list


log = logging.getLogger(__name__)

COMMANDS = ('gen-data', 'train', 'certify', 'report')

COMMON_DEFAULTS = {
    'seed': 0,
    'solver': 'anderson',
    'anderson_memory': 5,
    'dry_run': False,
    'verbose': False,
}

# built-in values, used when neither the command line nor the config file sets them
DEFAULTS = {
    'gen-data': {
        'n_points': 200,
        'noise': 0.1,
        'num_classes': 2,
        'dim': 2,
        'separation': 4.0,
        'test_fraction': 0.0,
    },
    'train': {
        'hidden_dim': 16,
        'gamma': 0.9,
        'sigma': 0.0,
        'epochs': 50,
        'lr': 0.1,
        'batch_size': 32,
        'tol': 1e-5,
        'max_iters': 100,
        'adjoint_iters': 100,
        'adjoint_tol': 1e-6,
    },
    'certify': {
        'mode': 'standard',
        'sigma': 0.5,
        'n_samples': 10000,
        'batch_size': 1000,
        'alpha': 0.001,
        'tol': 1e-3,
        'max_iters': 30,
        'srs_steps': 3,
        'warmup_steps': 30,
        'restart_interval': 10,
        'holdout_k': 1000,
        'start_from_clean': False,
        'diagnostic': False,
        'jobs': 1,
        'skip': 1,
    },
    'report': {
        'thresholds': '0,0.25,0.5,0.75,1.0,1.25,1.5',
    },
}


def setup(doc, argv=None):
    program_options = docopt(doc, argv=argv)
    setup_logging(verbose=program_options.get('--verbose'))

    log.info('Reading configuration')

    return _get_config(program_options)


def _get_config(program_options):
    config = {}
    config_filename = program_options.get('--config')
    if config_filename:
        config = read_config_file(config_filename)

    update_config(config, program_options)

    return config


def read_config_file(filename):
    try:
        with open(filename) as f:
            config = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise IoError('Cannot read configuration {0}: {1}'.format(filename, e))

    if not isinstance(config, dict):
        raise ArgumentError('Configuration {0} must be a mapping'.format(filename))
    return config


def update_config(config, program_options):
    merge_program_options(config, program_options)
    update_values(config)


def merge_program_options(config, program_options):
    # get program options, removing '--' and replacing '-' with '_'
    # unset flags are None so that they defer to the config file
    options = {k[2:].replace('-', '_'): (None if v is False else v) for k, v
               in list(program_options.items())
               if k.startswith('--')}

    arguments = {k.strip('<>').replace('-', '_'): v for k, v
                 in list(program_options.items())
                 if k.startswith('<')}

    commands = [k for k in COMMANDS if program_options.get(k)]

    config['options'] = options
    config['arguments'] = arguments
    config['command'] = commands[0] if commands else None


def update_values(config):
    command = config['command']

    # command line > command section of the file > file defaults > built-in defaults
    builtin = merge(DEFAULTS.get(command, {}), COMMON_DEFAULTS)
    from_file = merge(config.get(command) or {}, config.get('defaults') or {})
    values = merge(config['options'], merge(from_file, builtin))
    values.update(config['arguments'])

    config['values'] = values


def setup_logging(verbose=False):
    level = 'DEBUG' if verbose else 'INFO'
    logging.config.dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'standard': {
                'format': '%(asctime)s [%(levelname)s] %(name)s: %(message)s'
            }
        },
        'handlers': {
            'default': {
                'level': level,
                'class': 'logging.StreamHandler',
                'formatter': 'standard'
            },
        },
        'loggers': {
            '': {
                'handlers': ['default'],
                'level': level,
                'propagate': True
            }
        }
    })


# Typed configurations

def _get(values, key, cast):
    value = values.get(key)
    if value is None:
        return None
    try:
        if cast is bool and isinstance(value, str):
            return value.lower() in ('1', 'true', 'yes', 'on')
        return cast(value)
    except (TypeError, ValueError):
        raise ArgumentError('Invalid value for {0}: {1!r}'.format(key.replace('_', '-'), value))


def gen_data_options_from_values(values):
    options = {
        'kind': _get(values, 'kind', str),
        'n_points': _get(values, 'n_points', int),
        'noise': _get(values, 'noise', float),
        'seed': _get(values, 'seed', int),
        'num_classes': _get(values, 'num_classes', int),
        'dim': _get(values, 'dim', int),
        'separation': _get(values, 'separation', float),
        'test_fraction': _get(values, 'test_fraction', float) or 0.0,
    }
    if not 0.0 <= options['test_fraction'] < 1.0:
        raise ArgumentError('test-fraction must be in [0, 1), got {0}'.format(options['test_fraction']))
    return options


def solver_config_from_values(values, method=None):
    return SolverConfig(
        method=method or _get(values, 'solver', str),
        tol=_get(values, 'tol', float),
        max_iters=_get(values, 'max_iters', int),
        anderson_memory=_get(values, 'anderson_memory', int),
    )


def smoothing_config_from_values(values):
    return SmoothingConfig(
        sigma=_get(values, 'sigma', float),
        n_samples=_get(values, 'n_samples', int),
        batch_size=_get(values, 'batch_size', int),
        confidence=ConfidenceSpec(alpha=_get(values, 'alpha', float)),
        seed=_get(values, 'seed', int),
    )


def srs_config_from_values(values):
    reference = solver_config_from_values(values)
    warmup_method = _get(values, 'warmup_solver', str)
    return SrsConfig(
        base=smoothing_config_from_values(values),
        srs_steps=_get(values, 'srs_steps', int),
        warmup_steps=_get(values, 'warmup_steps', int),
        restart_interval=_get(values, 'restart_interval', int),
        holdout_k=_get(values, 'holdout_k', int),
        reference_solver=reference,
        solver=reference,
        warmup_solver=solver_config_from_values(values, method=warmup_method) if warmup_method else None,
        start_from_clean=bool(_get(values, 'start_from_clean', bool)),
    )


def train_config_from_values(values):
    return TrainConfig(
        sigma=_get(values, 'sigma', float),
        epochs=_get(values, 'epochs', int),
        lr=_get(values, 'lr', float),
        batch_size=_get(values, 'batch_size', int),
        seed=_get(values, 'seed', int),
        solver=solver_config_from_values(values),
        adjoint_iters=_get(values, 'adjoint_iters', int),
        adjoint_tol=_get(values, 'adjoint_tol', float),
    )


def thresholds_from_values(values):
    thresholds = parse_list(values.get('thresholds'), float)
    if not thresholds or any(t < 0 for t in thresholds):
        raise ArgumentError('thresholds must be a nonempty list of values >= 0')
    return thresholds
