import json
import os
import subprocess
import tempfile

from path import Path

from . import __version__


def atomic_write_json(path, obj):

    path = Path(path)
    path.parent.makedirs_p()

    fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    try:
        with os.fdopen(fd, 'w') as f:
            json.dump(obj, f, indent=2, sort_keys=True, default=_to_builtin)
            f.write('\n')
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).remove_p()
        raise

    return path


def _to_builtin(obj):

    if hasattr(obj, 'tolist'):
        return obj.tolist()
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()

    raise TypeError(f'{type(obj).__name__} is not JSON serializable')


def describe_version():
    """``git describe`` of the source tree when available, else the package version."""

    here = Path(__file__).abspath().dirname()

    try:
        rv = subprocess.run(['git', 'describe', '--tags', '--always', '--dirty'],
                            cwd=here, capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return __version__

    if rv.returncode != 0 or not rv.stdout.strip():
        return __version__

    return f'{__version__}+{rv.stdout.strip()}'


def parse_floats(text, count, name):

    from .errors import ParameterError

    try:
        values = [float(v) for v in text.split(',')]
    except ValueError:
        raise ParameterError(f'{name} must be {count} comma separated numbers, got {text!r}')

    if len(values) != count:
        raise ParameterError(f'{name} must be {count} comma separated numbers, got {text!r}')

    return values
