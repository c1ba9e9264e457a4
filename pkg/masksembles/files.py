import os
import tempfile


def _current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


# process-wide, read once at import
UMASK = _current_umask()


def slurp(filename):
    with open(filename, encoding='utf-8') as file_:
        return file_.read()


def slurp_lines(filename):
    with open(filename, encoding='utf-8') as file_:
        return [line.strip() for line in file_.readlines()]


def spit(filename, contents):
    with open(filename, 'w', encoding='utf-8', newline='\n') as file_:
        file_.write(contents)


def spit_atomic(filename, contents):
    """
    Write into a temporary file in the same directory and rename it over the
    target, so readers never observe a half-written file.
    """
    directory = os.path.dirname(os.path.abspath(filename))
    os.makedirs(directory, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as file_:
            file_.write(contents)
        os.chmod(temp_name, 0o666 & ~UMASK)
        os.replace(temp_name, filename)
    except BaseException:
        if os.path.exists(temp_name):
            os.remove(temp_name)
        raise


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def in_temp_dir(filename) -> str:
    temp_dir = tempfile.gettempdir()
    return os.path.join(temp_dir, filename)
