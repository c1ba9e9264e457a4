import logging
import logging.handlers
import os

from masksembles.env import log_dir
from masksembles.files import in_temp_dir

FORMAT = '%(asctime)-15s %(process)-5d %(levelname)-8s %(filename)s:%(lineno)d:%(funcName)s %(message)s'
MAX_LOG_SIZE = 50 * 1024 * 1024
LOG_BACKUP_COUNT = 1


def _log_filename(name):
    directory = log_dir()
    if directory:
        os.makedirs(directory, exist_ok=True)
        return os.path.join(directory, name)
    return in_temp_dir(name)


def _init_logger(tag, filename: str):
    log = logging.getLogger('masksembles')
    log.setLevel(logging.DEBUG)
    if any(isinstance(h, logging.handlers.RotatingFileHandler) for h in log.handlers):
        return log
    handler = logging.handlers.RotatingFileHandler(
        filename=filename,
        maxBytes=MAX_LOG_SIZE,
        backupCount=LOG_BACKUP_COUNT,
    )
    handler.setFormatter(logging.Formatter(FORMAT))
    log.addHandler(handler)
    log.info('Logger has been created (%s)', tag)
    return log


def init_masksembles_logger(tag: str):
    return _init_logger(tag, _log_filename('masksembles.log'))


def enable_console_logging(level=logging.INFO):
    from rich.logging import RichHandler

    from masksembles.ui import stderr_console

    log = logging.getLogger('masksembles')
    if any(isinstance(h, RichHandler) for h in log.handlers):
        return
    handler = RichHandler(level=level, show_path=False, console=stderr_console)
    handler.setFormatter(logging.Formatter('%(message)s'))
    log.addHandler(handler)


masksembles_logger = init_masksembles_logger('masksembles')
