# pylint: disable=missing-docstring

from contextlib import contextmanager
import logging
import os
import tempfile

log = logging.getLogger(__name__)


# Dictionary utilities

def merge(dict_a, dict_b):
    """
    Merge two dictionaries.

    Values in `dict_a` take precedence over the ones in `dict_b` unless
    the value in `dict_a` is `None`.

    """
    result = {}
    for key in set(dict_a) | set(dict_b):
        value = dict_a.get(key)
        result[key] = dict_b.get(key) if value is None else value

    return result


def parse_list(text, cast=float):
    """Parse a comma separated option value, e.g. '0,0.25,0.5'."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [cast(item) for item in text]
    return [cast(item) for item in str(text).split(',') if item.strip()]


# Output files

@contextmanager
def atomic_output(filename):
    """
    Yield a temporary path next to `filename` and move it into place on success.

    A partially written output never replaces an existing file.
    """
    directory = os.path.dirname(os.path.abspath(filename))
    if not os.path.isdir(directory):
        os.makedirs(directory)

    handle, temp_path = tempfile.mkstemp(prefix='.' + os.path.basename(filename), suffix='.tmp', dir=directory)
    os.close(handle)
    try:
        yield temp_path
        os.replace(temp_path, filename)
    finally:
        if os.path.exists(temp_path):
            os.remove(temp_path)
