import logging
from os import environ
from os.path import exists
from os.path import expanduser

from masksembles.errors import ValidationError
from masksembles.files import slurp_lines

logger = logging.getLogger('masksembles')

CONFIG = environ.get('XDG_CONFIG_HOME', expanduser('~/.config'))
DEFAULT_FILENAME = '{0}/masksembles/masksembles.env'.format(CONFIG)
DEFAULT_WORKERS = 1


def workers() -> int:
    value = environ.get('MASKSEMBLES_WORKERS', DEFAULT_WORKERS)
    try:
        return int(value)
    except ValueError as e:
        raise ValidationError('MASKSEMBLES_WORKERS must be an integer (got "%s")' % value) from e


def log_dir():
    return environ.get('MASKSEMBLES_LOG_DIR')


def parse_key_values(lines):
    """
    Parse `key=value` lines. Blank lines and lines starting with `#` are
    skipped, surrounding whitespace is stripped from keys and values.
    """
    pairs = []
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith('#'): continue
        if '=' not in line:
            raise ValueError('line %d: expected key=value, got "%s"' % (number, line))
        key, value = line.split('=', 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_dotenv(filename=None):
    if filename is None: filename = DEFAULT_FILENAME
    logger.info('Loading .env file: %s', filename)
    if not exists(filename):
        logger.info('No .env file found: %s', filename)
        return
    for key, value in parse_key_values(slurp_lines(filename)):
        environ[key] = value
