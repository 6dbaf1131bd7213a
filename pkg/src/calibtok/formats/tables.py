__all__ = ['write_csv', 'write_json', 'read_json']

from typing import Any, Iterable, Sequence
import csv
import io
import json
import logging

from .netpbm import _read_bytes, _write_bytes
from ..exceptions import BadConfigFile

logger = logging.getLogger(__name__)  # type: logging.Logger


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:  # noqa: pycodestyle
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    _write_bytes(path, buffer.getvalue().encode('utf-8'))


def _cell(value: Any) -> Any:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return value


def write_json(path, jsn: Any) -> None:
    payload = json.dumps(jsn, indent=2, sort_keys=True) + '\n'
    _write_bytes(path, payload.encode('utf-8'))


def read_json(path) -> Any:
    """
    Reads a JSON document.

    Raises:
        IOFailure: if the file cannot be read.
        BadConfigFile: if the file is not valid JSON.
    """
    try:
        return json.loads(_read_bytes(path).decode('utf-8'))
    except ValueError as err:
        logger.error("failed to parse JSON document: %s", path)
        raise BadConfigFile("invalid JSON in {}: {}".format(path, err))
